#include "esource/provenance/graph.hpp"

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <functional>

#include <json.hpp>

#include "esource/error.hpp"
#include "esource/odm/odm.hpp"
#include "esource/util/digest.hpp"
#include "esource/util/strings.hpp"

namespace esource::provenance {

std::string_view to_string(ProcessKind k) noexcept {
  switch (k) {
    case ProcessKind::Sync: return "Sync";
    case ProcessKind::Screen: return "Screen";
    case ProcessKind::Prepopulate: return "Prepopulate";
    case ProcessKind::Edit: return "Edit";
    case ProcessKind::Submit: return "Submit";
    case ProcessKind::Ingest: return "Ingest";
  }
  return "Sync";
}

std::optional<ProcessKind> process_kind_from_string(std::string_view s) noexcept {
  for (auto k : kAllProcessKinds) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::string_view to_string(AgentRole r) noexcept {
  switch (r) {
    case AgentRole::Dnc: return "dnc";
    case AgentRole::Tss: return "tss";
    case AgentRole::Clinician: return "clinician";
    case AgentRole::Patient: return "patient";
  }
  return "dnc";
}

std::optional<AgentRole> agent_role_from_string(std::string_view s) noexcept {
  for (auto r : {AgentRole::Dnc, AgentRole::Tss, AgentRole::Clinician, AgentRole::Patient}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

std::string_view to_string(FindingCode c) noexcept {
  switch (c) {
    case FindingCode::DigestMismatch: return "DigestMismatch";
    case FindingCode::MissingProcessKind: return "MissingProcessKind";
    case FindingCode::UnexplainedChange: return "UnexplainedChange";
    case FindingCode::UnreadableDocument: return "UnreadableDocument";
  }
  return "?";
}

bool Subgraph::has_process(ProcessKind k) const { return !processes_of(k).empty(); }

std::vector<const ProcessNode*> Subgraph::processes_of(ProcessKind k) const {
  std::vector<const ProcessNode*> out;
  for (const auto& [id, p] : processes) {
    if (p.kind == k) out.push_back(&p);
  }
  return out;
}

std::string field_digest(std::string_view item_oid, std::string_view value) {
  std::string bytes(item_oid);
  bytes += '\x1f';
  bytes += value;
  return sha256_hex(bytes);
}

bool VerificationResult::contains(FindingCode c) const {
  for (const auto& f : findings) {
    if (f.code == c) return true;
  }
  return false;
}

ProvenanceGraph::ProvenanceGraph(std::string ns) : ns_(std::move(ns)) {}

ProvenanceGraph::ProvenanceGraph(const ProvenanceGraph& other) { *this = other; }

ProvenanceGraph& ProvenanceGraph::operator=(const ProvenanceGraph& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  ns_ = other.ns_;
  counter_ = other.counter_;
  g_ = other.g_;
  generated_by_ = other.generated_by_;
  used_ = other.used_;
  controlled_by_ = other.controlled_by_;
  by_digest_ = other.by_digest_;
  return *this;
}

std::string ProvenanceGraph::next_id(char kind) { return ns_ + "/" + kind + std::to_string(++counter_); }

std::string ProvenanceGraph::register_artifact(std::string digest, std::string label) {
  std::lock_guard lock(mutex_);
  auto id = next_id('a');
  by_digest_[digest].push_back(id);
  g_.artifacts[id] = ArtifactNode{id, std::move(digest), std::move(label)};
  return id;
}

std::string ProvenanceGraph::ensure_agent(const std::string& agent_id, AgentRole role) {
  std::lock_guard lock(mutex_);
  g_.agents.try_emplace(agent_id, AgentNode{agent_id, role});
  return agent_id;
}

ProvenanceGraph::Activity ProvenanceGraph::record_activity(ProcessKind kind, const std::vector<std::string>& inputs,
                                                           const std::vector<OutputSpec>& outputs,
                                                           const std::string& agent_id, std::string note) {
  std::lock_guard lock(mutex_);
  for (const auto& in : inputs) {
    if (!g_.artifacts.count(in)) throw Error(Errc::UnknownArtifact, in);
  }
  if (!g_.agents.count(agent_id)) throw Error(Errc::InvalidArgument, "agent " + agent_id + " is not registered");
  Activity a;
  a.process_id = next_id('p');
  g_.processes[a.process_id] = ProcessNode{a.process_id, kind, std::move(note)};
  for (const auto& in : inputs) {
    g_.edges.insert({EdgeKind::Used, a.process_id, in});
    used_[a.process_id].push_back(in);
  }
  g_.edges.insert({EdgeKind::WasControlledBy, a.process_id, agent_id});
  controlled_by_[a.process_id] = agent_id;
  for (const auto& out : outputs) {
    auto id = next_id('a');
    g_.artifacts[id] = ArtifactNode{id, out.digest, out.label};
    by_digest_[out.digest].push_back(id);
    g_.edges.insert({EdgeKind::WasGeneratedBy, id, a.process_id});
    generated_by_[id] = a.process_id;
    a.outputs.push_back(id);
  }
  return a;
}

Subgraph ProvenanceGraph::lineage_locked(const std::string& artifact_id) const {
  if (!g_.artifacts.count(artifact_id)) throw Error(Errc::UnknownArtifact, artifact_id);
  Subgraph out;
  std::deque<std::string> todo{artifact_id};
  while (!todo.empty()) {
    auto id = todo.front();
    todo.pop_front();
    if (out.artifacts.count(id)) continue;
    out.artifacts[id] = g_.artifacts.at(id);
    auto gen = generated_by_.find(id);
    if (gen == generated_by_.end()) continue;
    const auto& pid = gen->second;
    out.edges.insert({EdgeKind::WasGeneratedBy, id, pid});
    if (out.processes.count(pid)) continue;
    out.processes[pid] = g_.processes.at(pid);
    if (auto ag = controlled_by_.find(pid); ag != controlled_by_.end()) {
      out.agents[ag->second] = g_.agents.at(ag->second);
      out.edges.insert({EdgeKind::WasControlledBy, pid, ag->second});
    }
    if (auto u = used_.find(pid); u != used_.end()) {
      for (const auto& in : u->second) {
        out.edges.insert({EdgeKind::Used, pid, in});
        todo.push_back(in);
      }
    }
  }
  return out;
}

Subgraph ProvenanceGraph::lineage_of(const std::string& artifact_id) const {
  std::lock_guard lock(mutex_);
  return lineage_locked(artifact_id);
}

std::optional<ArtifactNode> ProvenanceGraph::artifact(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = g_.artifacts.find(id);
  if (it == g_.artifacts.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> ProvenanceGraph::artifacts_with_digest(const std::string& digest) const {
  std::lock_guard lock(mutex_);
  auto it = by_digest_.find(digest);
  return it == by_digest_.end() ? std::vector<std::string>{} : it->second;
}

std::optional<ProcessNode> ProvenanceGraph::generator_of(const std::string& artifact_id) const {
  std::lock_guard lock(mutex_);
  auto it = generated_by_.find(artifact_id);
  if (it == generated_by_.end()) return std::nullopt;
  return g_.processes.at(it->second);
}

void ProvenanceGraph::stitch(const ProvenanceGraph& other) {
  if (&other == this) return;
  std::scoped_lock lock(mutex_, other.mutex_);
  // Roots join only onto artifacts that were here before this call and are not
  // part of `other`; joining onto one of other's own artifacts could close a cycle.
  const auto existing = by_digest_;
  auto join_target = [&](const std::string& digest) -> std::optional<std::string> {
    auto same = existing.find(digest);
    if (same == existing.end()) return std::nullopt;
    for (const auto& candidate : same->second) {
      if (!other.g_.artifacts.count(candidate)) return candidate;
    }
    return std::nullopt;
  };
  std::map<std::string, std::string> rename;
  for (const auto& [id, a] : other.g_.artifacts) {
    bool root = !other.generated_by_.count(id);
    if (root && !g_.artifacts.count(id)) {
      if (auto target = join_target(a.digest)) {
        rename[id] = *target;
        continue;
      }
    }
    rename[id] = id;
    if (g_.artifacts.emplace(id, a).second) by_digest_[a.digest].push_back(id);
  }
  for (const auto& [id, p] : other.g_.processes) g_.processes.try_emplace(id, p);
  for (const auto& [id, a] : other.g_.agents) g_.agents.try_emplace(id, a);
  auto mapped = [&](const std::string& id) {
    auto it = rename.find(id);
    return it == rename.end() ? id : it->second;
  };
  for (const auto& e : other.g_.edges) {
    Edge copy = e;
    switch (e.kind) {
      case EdgeKind::Used:
        copy.to = mapped(e.to);
        if (g_.edges.insert(copy).second) used_[copy.from].push_back(copy.to);
        break;
      case EdgeKind::WasGeneratedBy:
        copy.from = mapped(e.from);
        if (g_.edges.insert(copy).second) generated_by_[copy.from] = copy.to;
        break;
      case EdgeKind::WasControlledBy:
        if (g_.edges.insert(copy).second) controlled_by_[copy.from] = copy.to;
        break;
    }
  }
}

Subgraph ProvenanceGraph::snapshot() const {
  std::lock_guard lock(mutex_);
  return g_;
}

std::string ProvenanceGraph::export_jsonl() const {
  auto g = snapshot();
  std::string out;
  auto line = [&](const nlohmann::json& j) { out += j.dump() + "\n"; };
  for (const auto& [id, a] : g.artifacts) {
    line({{"node", "artifact"}, {"id", id}, {"digest", a.digest}, {"label", a.label}});
  }
  for (const auto& [id, p] : g.processes) {
    line({{"node", "process"}, {"id", id}, {"kind", std::string(to_string(p.kind))}, {"note", p.note}});
  }
  for (const auto& [id, a] : g.agents) {
    line({{"node", "agent"}, {"id", id}, {"role", std::string(to_string(a.role))}});
  }
  for (const auto& e : g.edges) {
    switch (e.kind) {
      case EdgeKind::Used: line({{"edge", "used"}, {"process", e.from}, {"artifact", e.to}}); break;
      case EdgeKind::WasGeneratedBy:
        line({{"edge", "wasGeneratedBy"}, {"artifact", e.from}, {"process", e.to}});
        break;
      case EdgeKind::WasControlledBy:
        line({{"edge", "wasControlledBy"}, {"process", e.from}, {"agent", e.to}});
        break;
    }
  }
  return out;
}

ProvenanceGraph ProvenanceGraph::import_jsonl(std::string_view text, std::string ns) {
  ProvenanceGraph g(std::move(ns));
  for (const auto& raw : split(text, '\n')) {
    if (trim(raw).empty()) continue;
    auto j = nlohmann::json::parse(raw, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(Errc::InvalidArgument, "unreadable provenance export line");
    if (j.contains("node")) {
      auto kind = j["node"].get<std::string>();
      auto id = j.at("id").get<std::string>();
      if (kind == "artifact") {
        auto digest = j.at("digest").get<std::string>();
        g.g_.artifacts[id] = {id, digest, j.value("label", "")};
        g.by_digest_[digest].push_back(id);
      } else if (kind == "process") {
        auto pk = process_kind_from_string(j.at("kind").get<std::string>());
        if (!pk) throw Error(Errc::InvalidArgument, "unknown process kind in provenance export");
        g.g_.processes[id] = {id, *pk, j.value("note", "")};
      } else if (kind == "agent") {
        auto role = agent_role_from_string(j.at("role").get<std::string>());
        if (!role) throw Error(Errc::InvalidArgument, "unknown agent role in provenance export");
        g.g_.agents[id] = {id, *role};
      }
    } else {
      auto kind = j.at("edge").get<std::string>();
      if (kind == "used") {
        Edge e{EdgeKind::Used, j.at("process"), j.at("artifact")};
        g.used_[e.from].push_back(e.to);
        g.g_.edges.insert(e);
      } else if (kind == "wasGeneratedBy") {
        Edge e{EdgeKind::WasGeneratedBy, j.at("artifact"), j.at("process")};
        g.generated_by_[e.from] = e.to;
        g.g_.edges.insert(e);
      } else if (kind == "wasControlledBy") {
        Edge e{EdgeKind::WasControlledBy, j.at("process"), j.at("agent")};
        g.controlled_by_[e.from] = e.to;
        g.g_.edges.insert(e);
      }
    }
  }
  // Fresh ids must not collide with imported ones from the same namespace.
  const std::string own = g.ns_ + "/";
  auto bump = [&](const std::string& id) {
    if (id.size() <= own.size() + 1 || id.compare(0, own.size(), own) != 0) return;
    auto n = std::strtoull(id.c_str() + own.size() + 1, nullptr, 10);
    g.counter_ = std::max<std::size_t>(g.counter_, static_cast<std::size_t>(n));
  };
  for (const auto& [id, a] : g.g_.artifacts) bump(id);
  for (const auto& [id, p] : g.g_.processes) bump(id);
  return g;
}

bool ProvenanceGraph::acyclic() const {
  std::lock_guard lock(mutex_);
  // Kahn-style check over artifact -> generating process -> used artifacts.
  std::map<std::string, int> state;  // 0 unvisited, 1 on stack, 2 done
  std::function<bool(const std::string&)> visit = [&](const std::string& a) {
    auto& s = state[a];
    if (s == 1) return false;
    if (s == 2) return true;
    s = 1;
    if (auto gen = generated_by_.find(a); gen != generated_by_.end()) {
      if (auto u = used_.find(gen->second); u != used_.end()) {
        for (const auto& in : u->second) {
          if (!visit(in)) return false;
        }
      }
    }
    state[a] = 2;
    return true;
  };
  for (const auto& [id, a] : g_.artifacts) {
    if (!visit(id)) return false;
  }
  return true;
}

VerificationResult verify_submission_chain(const ProvenanceGraph& graph, const std::string& stored_artifact_id,
                                           std::string_view stored_payload) {
  VerificationResult r;
  auto art = graph.artifact(stored_artifact_id);
  if (!art) throw Error(Errc::UnknownArtifact, stored_artifact_id);
  auto lineage = graph.lineage_of(stored_artifact_id);

  if (sha256_hex(stored_payload) != art->digest) {
    r.findings.push_back({FindingCode::DigestMismatch, "stored payload does not match digest of " + stored_artifact_id});
  }

  std::string notes;
  for (const auto& [id, p] : lineage.processes) notes += p.note + " ";
  for (auto k : kAllProcessKinds) {
    if (lineage.has_process(k)) continue;
    if (notes.find("absent:" + std::string(to_string(k))) != std::string::npos) continue;
    r.findings.push_back({FindingCode::MissingProcessKind, std::string(to_string(k)) + " missing from lineage"});
  }

  std::map<std::string, std::set<ProcessKind>> generated;  // digest -> generator kinds
  for (const auto& e : lineage.edges) {
    if (e.kind != EdgeKind::WasGeneratedBy) continue;
    generated[lineage.artifacts.at(e.from).digest].insert(lineage.processes.at(e.to).kind);
  }
  auto produced_by = [&](const std::string& digest, ProcessKind k) {
    auto it = generated.find(digest);
    return it != generated.end() && it->second.count(k);
  };

  odm::ClinicalDataSubmission doc;
  try {
    doc = odm::parse_clinical_data(stored_payload);
  } catch (const Error& e) {
    r.findings.push_back({FindingCode::UnreadableDocument, e.what()});
    r.ok = false;
    return r;
  }
  for (const auto& f : doc.field_values) {
    auto d = field_digest(f.item_oid, f.value);
    switch (f.origin) {
      case odm::Origin::Prepopulated:
        if (!produced_by(d, ProcessKind::Prepopulate)) {
          r.findings.push_back({FindingCode::UnexplainedChange,
                                f.item_oid + "='" + f.value + "' is marked prepopulated but no Prepopulate produced it"});
        }
        break;
      case odm::Origin::Edited:
        if (!produced_by(d, ProcessKind::Edit)) {
          r.findings.push_back({FindingCode::UnexplainedChange, f.item_oid + " edited without an Edit record"});
        }
        if (f.prepopulated_value &&
            !produced_by(field_digest(f.item_oid, *f.prepopulated_value), ProcessKind::Prepopulate)) {
          r.findings.push_back(
              {FindingCode::UnexplainedChange, f.item_oid + " claims a pre-populated value no Prepopulate produced"});
        }
        break;
      case odm::Origin::Manual:
        if (!produced_by(d, ProcessKind::Edit)) {
          r.findings.push_back({FindingCode::UnexplainedChange, f.item_oid + " entered without an Edit record"});
        }
        break;
    }
  }
  r.ok = r.findings.empty();
  return r;
}

}  // namespace esource::provenance
