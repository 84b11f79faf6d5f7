#include "esource/tss/study_system.hpp"

#include <algorithm>
#include <array>
#include <cstdio>

#include "esource/error.hpp"
#include "esource/odm/odm.hpp"
#include "esource/util/digest.hpp"
#include "esource/util/rng.hpp"

namespace esource::tss {

using analytics::Arm;
using analytics::EventKind;

std::string_view to_string(StudyStatus s) noexcept {
  switch (s) {
    case StudyStatus::Draft: return "Draft";
    case StudyStatus::Active: return "Active";
    case StudyStatus::Closed: return "Closed";
  }
  return "Draft";
}

nlohmann::json to_json(const ProtocolDelta& d) {
  nlohmann::json studies = nlohmann::json::array();
  for (const auto& e : d.active) {
    studies.push_back(
        {{"study_oid", e.study_oid}, {"version", e.version}, {"revision", e.revision}, {"bundle_xml", e.bundle_xml}});
  }
  return {{"studies", studies}, {"retired", d.retired}, {"cursor", d.cursor}};
}

ProtocolDelta protocol_delta_from_json(const nlohmann::json& j) {
  ProtocolDelta d;
  for (const auto& s : j.at("studies")) {
    d.active.push_back({s.at("study_oid").get<std::string>(), s.at("version").get<int>(),
                        s.at("revision").get<long>(), s.at("bundle_xml").get<std::string>()});
  }
  d.retired = j.value("retired", std::vector<std::string>{});
  d.cursor = j.at("cursor").get<long>();
  return d;
}

nlohmann::json to_json(const RandomizationAssignment& a) {
  return {{"pseudonym", a.pseudonym}, {"practice", a.practice_id}, {"arm", to_string(a.arm)},
          {"block", a.block_index},   {"slot", a.slot_index},      {"issued_at", a.issued_at}};
}

RandomizationAssignment assignment_from_json(const nlohmann::json& j) {
  RandomizationAssignment a;
  a.pseudonym = j.at("pseudonym").get<std::string>();
  a.practice_id = j.at("practice").get<std::string>();
  auto arm = analytics::arm_from_string(j.at("arm").get<std::string>());
  if (!arm) throw Error(Errc::InvalidArgument, "bad arm in assignment");
  a.arm = *arm;
  a.block_index = j.at("block").get<int>();
  a.slot_index = j.at("slot").get<int>();
  a.issued_at = j.value("issued_at", "");
  return a;
}

nlohmann::json to_json(const Receipt& r) {
  return {{"receipt_id", r.receipt_id}, {"idempotency_key", r.idempotency_key},
          {"study_oid", r.study_oid},   {"subject_key", r.subject_key},
          {"form_oid", r.form_oid},     {"stage", r.stage},
          {"digest", r.digest},         {"stored_artifact_id", r.stored_artifact_id},
          {"received_at", r.received_at}};
}

Receipt receipt_from_json(const nlohmann::json& j) {
  Receipt r;
  r.receipt_id = j.at("receipt_id").get<std::string>();
  r.idempotency_key = j.value("idempotency_key", "");
  r.study_oid = j.value("study_oid", "");
  r.subject_key = j.value("subject_key", "");
  r.form_oid = j.value("form_oid", "");
  r.stage = j.value("stage", "");
  r.digest = j.value("digest", "");
  r.stored_artifact_id = j.value("stored_artifact_id", "");
  r.received_at = j.value("received_at", "");
  return r;
}

namespace {

std::array<Arm, kBlockSize> block_arms(std::uint64_t seed, const std::string& practice_id, int block) {
  std::array<Arm, kBlockSize> arms{Arm::T, Arm::T, Arm::C, Arm::C};
  Rng rng(derive_seed(seed, practice_id, static_cast<std::uint64_t>(block)));
  for (int i = kBlockSize - 1; i > 0; --i) {
    std::swap(arms[i], arms[rng.range(0, i)]);
  }
  return arms;
}

EventKind event_for(odm::Stage s) {
  switch (s) {
    case odm::Stage::Crom1: return EventKind::Crom1;
    case odm::Stage::Crom2: return EventKind::Crom2;
    case odm::Stage::Prom1: return EventKind::Prom1;
    case odm::Stage::Prom2: return EventKind::Prom2;
  }
  return EventKind::Crom1;
}

}  // namespace

std::vector<Arm> assignment_sequence(std::uint64_t seed, const std::string& practice_id, int n_blocks) {
  std::vector<Arm> out;
  for (int b = 1; b <= n_blocks; ++b) {
    auto arms = block_arms(seed, practice_id, b);
    out.insert(out.end(), arms.begin(), arms.end());
  }
  return out;
}

StudySystem::StudySystem(TssConfig config, Clock clock) : config_(std::move(config)), clock_(std::move(clock)) {
  provenance_.ensure_agent("tss", provenance::AgentRole::Tss);
  if (config_.data_dir) {
    journal_.open(*config_.data_dir / "journal.jsonl");
    replay();
  }
  build_router();
}

long StudySystem::bump_revision() { return ++revision_; }

StudyVersion& StudySystem::push_version(StudyRegistration& reg, StudyStatus status, std::string bundle_xml) {
  StudyVersion v;
  v.version = reg.history.empty() ? 1 : reg.history.back().version + 1;
  v.revision = bump_revision();
  v.status = status;
  v.bundle_xml = std::move(bundle_xml);
  v.changed_at = clock_().to_string();
  reg.history.push_back(std::move(v));
  return reg.history.back();
}

std::string StudySystem::register_study(const std::string& bundle_xml) {
  auto bundle = odm::parse_study_bundle(bundle_xml);
  auto report = odm::validate_extensions(bundle);
  if (report.has_errors()) {
    std::string listing;
    for (const auto& f : report.findings) {
      if (f.severity != odm::Severity::Error) continue;
      if (!listing.empty()) listing += ", ";
      listing += std::string(odm::to_string(f.code)) + "(" + f.subject + ")";
    }
    throw Error(Errc::ValidationFailed, listing);
  }
  std::lock_guard lock(mutex_);
  auto& reg = studies_[bundle.study_oid];
  reg.study_oid = bundle.study_oid;
  push_version(reg, StudyStatus::Draft, bundle_xml);
  active_bundles_.erase(bundle.study_oid);
  journal_.append({{"type", "study"}, {"op", "register"}, {"xml", bundle_xml}});
  return bundle.study_oid;
}

void StudySystem::activate(const std::string& study_oid) {
  std::lock_guard lock(mutex_);
  auto it = studies_.find(study_oid);
  if (it == studies_.end()) throw Error(Errc::UnknownStudy, study_oid);
  if (it->second.current().status == StudyStatus::Active) return;
  auto xml = it->second.current().bundle_xml;
  push_version(it->second, StudyStatus::Active, xml);
  active_bundles_[study_oid] = odm::parse_study_bundle(xml);
  journal_.append({{"type", "study"}, {"op", "activate"}, {"study", study_oid}});
}

void StudySystem::close(const std::string& study_oid) {
  std::lock_guard lock(mutex_);
  auto it = studies_.find(study_oid);
  if (it == studies_.end()) throw Error(Errc::UnknownStudy, study_oid);
  if (it->second.current().status == StudyStatus::Closed) return;
  auto xml = it->second.current().bundle_xml;
  push_version(it->second, StudyStatus::Closed, xml);
  active_bundles_.erase(study_oid);
  journal_.append({{"type", "study"}, {"op", "close"}, {"study", study_oid}});
}

StudyRegistration StudySystem::registration(const std::string& study_oid) const {
  std::lock_guard lock(mutex_);
  auto it = studies_.find(study_oid);
  if (it == studies_.end()) throw Error(Errc::UnknownStudy, study_oid);
  return it->second;
}

odm::OdmStudyBundle StudySystem::active_bundle(const std::string& study_oid) const {
  std::lock_guard lock(mutex_);
  auto it = active_bundles_.find(study_oid);
  if (it == active_bundles_.end()) throw Error(Errc::UnknownStudy, study_oid + " is not active");
  return it->second;
}

ProtocolDelta StudySystem::serve_protocols(long since) const {
  std::lock_guard lock(mutex_);
  ProtocolDelta d;
  d.cursor = revision_;
  for (const auto& [oid, reg] : studies_) {
    const auto& cur = reg.current();
    if (cur.revision <= since) continue;
    if (cur.status == StudyStatus::Active) {
      d.active.push_back({oid, cur.version, cur.revision, cur.bundle_xml});
    } else {
      bool was_active = std::any_of(reg.history.begin(), reg.history.end(),
                                    [](const StudyVersion& v) { return v.status == StudyStatus::Active; });
      if (was_active) d.retired.push_back(oid);
    }
  }
  return d;
}

long StudySystem::head() const {
  std::lock_guard lock(mutex_);
  return revision_;
}

void StudySystem::register_practice(const analytics::PracticeInfo& p) {
  if (p.practice_id.empty()) throw Error(Errc::InvalidArgument, "practice id is empty");
  std::lock_guard lock(mutex_);
  if (auto* existing = log_.practice(p.practice_id); existing && *existing == p) return;
  log_.add_practice(p);
  journal_.append({{"type", "practice"}, {"record", analytics::to_json(p)}});
}

const analytics::PracticeInfo& StudySystem::practice_locked(const std::string& id) const {
  auto* p = log_.practice(id);
  if (!p) throw Error(Errc::UnknownPractice, id);
  return *p;
}

void StudySystem::apply_event_locked(const analytics::RecruitmentEvent& in, bool persist) {
  const auto& practice = practice_locked(in.practice_id);
  auto& have = subject_events_[in.pseudonym];
  if (have.count(in.kind)) return;  // at-least-once delivery from the DNC
  for (auto need : analytics::prerequisites(in.kind)) {
    if (!have.count(need)) {
      throw Error(Errc::SequenceViolation, std::string(to_string(in.kind)) + " before " +
                                               std::string(to_string(need)) + " for " + in.pseudonym);
    }
  }
  auto e = in;
  e.country = practice.country;
  e.arm = practice.arm;
  have.insert(e.kind);
  log_.append(e);
  if (persist) journal_.append({{"type", "event"}, {"record", analytics::to_json(e)}});
}

void StudySystem::record_event(const analytics::RecruitmentEvent& e) {
  if (e.kind != EventKind::Flagged && e.kind != EventKind::Consented) {
    throw Error(Errc::InvalidArgument, std::string(to_string(e.kind)) + " events are recorded by the study system itself");
  }
  std::lock_guard lock(mutex_);
  apply_event_locked(e, true);
}

RandomizationAssignment StudySystem::allocate_locked(const std::string& pseudonym, const std::string& practice_id,
                                                     const std::string& key, bool persist) {
  auto& seq = practice_sequence_[practice_id];
  RandomizationAssignment a;
  a.pseudonym = pseudonym;
  a.practice_id = practice_id;
  a.slot_index = static_cast<int>(seq.size()) + 1;
  a.block_index = (a.slot_index - 1) / kBlockSize + 1;
  a.arm = block_arms(config_.seed, practice_id, a.block_index)[(a.slot_index - 1) % kBlockSize];
  a.issued_at = clock_().to_string();
  seq.push_back(pseudonym);
  assignments_[pseudonym] = a;
  if (!key.empty()) randomize_keys_[key] = pseudonym;
  if (persist) {
    auto j = to_json(a);
    j["key"] = key;
    journal_.append({{"type", "assignment"}, {"record", j}});
  }
  return a;
}

RandomizationAssignment StudySystem::randomize(const std::string& pseudonym, const std::string& practice_id,
                                               const std::optional<std::string>& idempotency_key) {
  std::lock_guard lock(mutex_);
  if (idempotency_key) {
    if (auto k = randomize_keys_.find(*idempotency_key); k != randomize_keys_.end()) {
      return assignments_.at(k->second);
    }
  }
  const auto& practice = practice_locked(practice_id);
  if (assignments_.count(pseudonym)) throw Error(Errc::AlreadyAssigned, pseudonym);
  auto ev = subject_events_.find(pseudonym);
  if (ev == subject_events_.end() || !ev->second.count(EventKind::Consented)) {
    throw Error(Errc::NotConsented, pseudonym);
  }
  auto a = allocate_locked(pseudonym, practice_id, idempotency_key.value_or(""), true);
  analytics::RecruitmentEvent e{practice_id, practice.country, pseudonym, EventKind::Randomized, clock_(),
                                practice.arm};
  apply_event_locked(e, true);
  return a;
}

std::vector<RandomizationAssignment> StudySystem::assignments(const std::string& practice_id) const {
  std::lock_guard lock(mutex_);
  std::vector<RandomizationAssignment> out;
  auto it = practice_sequence_.find(practice_id);
  if (it == practice_sequence_.end()) return out;
  for (const auto& p : it->second) out.push_back(assignments_.at(p));
  return out;
}

Receipt StudySystem::ingest_locked(const std::string& document, const std::string& key, bool persist,
                                   const std::optional<Receipt>& replayed) {
  odm::ClinicalDataSubmission sub;
  try {
    sub = odm::parse_clinical_data(document);
  } catch (const Error& e) {
    throw Error(Errc::SchemaViolation, e.what());
  }
  auto b = active_bundles_.find(sub.study_oid);
  if (b == active_bundles_.end()) throw Error(Errc::UnknownStudy, sub.study_oid);
  const auto& bundle = b->second;
  try {
    odm::attach_clinical_data(bundle, sub);  // re-binding checks forms, items and types
  } catch (const Error& e) {
    throw Error(Errc::SchemaViolation, e.what());
  }
  auto* sched = bundle.schedule_for_form(sub.form_oid);
  if (!sched || !sched->stage) throw Error(Errc::SchemaViolation, sub.form_oid + " has no workflow stage");
  auto kind = event_for(*sched->stage);

  auto a = assignments_.find(sub.subject_key);
  if (a == assignments_.end()) throw Error(Errc::SequenceViolation, sub.subject_key + " is not randomized");
  const auto& have = subject_events_[sub.subject_key];
  if (have.count(kind)) {
    throw Error(Errc::SequenceViolation, std::string(to_string(kind)) + " already on file for " + sub.subject_key);
  }
  for (auto need : analytics::prerequisites(kind)) {
    if (!have.count(need)) {
      throw Error(Errc::SequenceViolation,
                  std::string(to_string(kind)) + " requires " + std::string(to_string(need)) + " first");
    }
  }

  Receipt r;
  char id[32];
  std::snprintf(id, sizeof id, "R-%06zu", receipts_.size() + 1);
  r.receipt_id = replayed ? replayed->receipt_id : id;
  r.idempotency_key = key;
  r.study_oid = sub.study_oid;
  r.subject_key = sub.subject_key;
  r.form_oid = sub.form_oid;
  r.stage = std::string(odm::to_string(*sched->stage));
  r.digest = sha256_hex(document);
  r.received_at = replayed ? replayed->received_at : clock_().to_string();

  auto received = provenance_.register_artifact(r.digest, "received " + r.form_oid + " " + r.subject_key);
  auto act = provenance_.record_activity(provenance::ProcessKind::Ingest, {received},
                                         {{r.digest, "stored " + r.receipt_id}}, "tss", r.receipt_id);
  r.stored_artifact_id = act.outputs.front();

  if (persist) journal_.append({{"type", "document"}, {"receipt", to_json(r)}, {"payload", document}});
  receipts_.push_back(r);
  receipt_by_key_[key] = receipts_.size() - 1;
  documents_[r.receipt_id] = document;

  const auto& practice = practice_locked(a->second.practice_id);
  auto instant = Instant::parse(r.received_at).value_or(clock_());
  // The document record regenerates this event on replay.
  apply_event_locked({practice.practice_id, practice.country, sub.subject_key, kind, instant, practice.arm}, false);
  return r;
}

Receipt StudySystem::ingest_submission(const std::string& document, const std::string& idempotency_key) {
  if (idempotency_key.empty()) throw Error(Errc::InvalidArgument, "an idempotency key is required");
  std::lock_guard lock(mutex_);
  if (auto it = receipt_by_key_.find(idempotency_key); it != receipt_by_key_.end()) return receipts_[it->second];
  return ingest_locked(document, idempotency_key, true, std::nullopt);
}

std::vector<Receipt> StudySystem::receipts() const {
  std::lock_guard lock(mutex_);
  return receipts_;
}

std::string StudySystem::stored_document(const std::string& receipt_id) const {
  std::lock_guard lock(mutex_);
  auto it = documents_.find(receipt_id);
  if (it == documents_.end()) throw Error(Errc::UnknownArtefact, receipt_id);
  return it->second;
}

analytics::RecruitmentLog StudySystem::recruitment_log() const {
  std::lock_guard lock(mutex_);
  return log_;
}

nlohmann::json StudySystem::recruitment_report() const {
  auto log = recruitment_log();
  auto table = analytics::tabulate_recruitment(log);
  nlohmann::json countries = nlohmann::json::object();
  for (const auto& [c, n] : table.by_country) countries[c] = {{"T", n.t}, {"C", n.c}, {"total", n.total()}};
  nlohmann::json weekly = nlohmann::json::array();
  auto rates = analytics::weekly_rates(log);
  for (const auto& r : rates) {
    weekly.push_back({{"practice", r.practice_id},
                      {"arm", to_string(r.arm)},
                      {"pair", r.pair_id},
                      {"randomized", r.randomized},
                      {"weeks", r.weeks},
                      {"per_week", r.per_week}});
  }
  auto means = analytics::mean_weekly_rate(rates);
  auto completion = analytics::completion_rates(log);
  auto frac = [](const analytics::CompletionFraction& f) {
    nlohmann::json j{{"completed", f.completed}, {"started", f.started}};
    j["fraction"] = f.fraction() ? nlohmann::json(*f.fraction()) : nlohmann::json(nullptr);
    return j;
  };
  return {{"countries", countries},
          {"totals", {{"T", table.totals.t}, {"C", table.totals.c}}},
          {"grand_total", table.grand_total()},
          {"weekly", weekly},
          {"mean_per_week",
           {{"T", means.t ? nlohmann::json(*means.t) : nlohmann::json(nullptr)},
            {"C", means.c ? nlohmann::json(*means.c) : nlohmann::json(nullptr)}}},
          {"completion",
           {{"crom_T", frac(completion.crom_t)},
            {"crom_C", frac(completion.crom_c)},
            {"prom_T", frac(completion.prom_t)},
            {"prom_C", frac(completion.prom_c)}}}};
}

void StudySystem::replay() {
  journal_.replay([this](const nlohmann::json& j) {
    auto type = j.at("type").get<std::string>();
    if (type == "study") {
      auto op = j.at("op").get<std::string>();
      if (op == "register") {
        auto xml = j.at("xml").get<std::string>();
        auto bundle = odm::parse_study_bundle(xml);
        auto& reg = studies_[bundle.study_oid];
        reg.study_oid = bundle.study_oid;
        push_version(reg, StudyStatus::Draft, xml);
        active_bundles_.erase(bundle.study_oid);
      } else {
        auto& reg = studies_.at(j.at("study").get<std::string>());
        auto xml = reg.current().bundle_xml;
        bool activate = op == "activate";
        push_version(reg, activate ? StudyStatus::Active : StudyStatus::Closed, xml);
        if (activate) {
          active_bundles_[reg.study_oid] = odm::parse_study_bundle(xml);
        } else {
          active_bundles_.erase(reg.study_oid);
        }
      }
    } else if (type == "practice") {
      log_.add_practice(analytics::practice_from_json(j.at("record")));
    } else if (type == "event") {
      apply_event_locked(analytics::event_from_json(j.at("record")), false);
    } else if (type == "assignment") {
      const auto& rec = j.at("record");
      auto a = allocate_locked(rec.at("pseudonym"), rec.at("practice"), rec.value("key", ""), false);
      a.issued_at = rec.value("issued_at", a.issued_at);
      assignments_[a.pseudonym] = a;
    } else if (type == "document") {
      auto r = receipt_from_json(j.at("receipt"));
      ingest_locked(j.at("payload").get<std::string>(), r.idempotency_key, false, r);
    }
  });
}

void StudySystem::build_router() {
  auto guarded = [this](net::Router::Handler h) -> net::Router::Handler {
    return [this, h = std::move(h)](const net::Request& req) {
      if (config_.site_token && req.header("x-site-token") != *config_.site_token) {
        throw Error(Errc::Unauthorized, "missing or wrong site token");
      }
      return h(req);
    };
  };
  router_.add("GET", "/studies", guarded([this](const net::Request& req) {
                long since = 0;
                if (auto s = req.query_param("since")) since = std::stol(*s);
                return net::Response::json(to_json(serve_protocols(since)));
              }));
  router_.add("POST", "/studies", guarded([this](const net::Request& req) {
                auto oid = register_study(req.body);
                auto reg = registration(oid);
                return net::Response::json({{"study_oid", oid}, {"version", reg.current().version}}, 201);
              }));
  router_.add("POST", "/studies/{oid}/activate", guarded([this](const net::Request& req) {
                activate(req.param("oid"));
                auto cur = registration(req.param("oid")).current();
                return net::Response::json(
                    {{"study_oid", req.param("oid")}, {"version", cur.version}, {"revision", cur.revision}});
              }));
  router_.add("POST", "/studies/{oid}/close", guarded([this](const net::Request& req) {
                close(req.param("oid"));
                auto cur = registration(req.param("oid")).current();
                return net::Response::json(
                    {{"study_oid", req.param("oid")}, {"version", cur.version}, {"revision", cur.revision}});
              }));
  router_.add("POST", "/practices", guarded([this](const net::Request& req) {
                register_practice(analytics::practice_from_json(nlohmann::json::parse(req.body)));
                return net::Response::json({{"ok", true}});
              }));
  router_.add("POST", "/recruitment-events", guarded([this](const net::Request& req) {
                record_event(analytics::event_from_json(nlohmann::json::parse(req.body)));
                return net::Response::json({{"ok", true}});
              }));
  router_.add("POST", "/randomize", guarded([this](const net::Request& req) {
                auto j = nlohmann::json::parse(req.body);
                auto a = randomize(j.at("pseudonym").get<std::string>(), j.at("practice").get<std::string>(),
                                   req.header("idempotency-key"));
                return net::Response::json(to_json(a));
              }));
  router_.add("POST", "/clinical-data", guarded([this](const net::Request& req) {
                auto key = req.header("idempotency-key");
                if (!key || key->empty()) throw Error(Errc::InvalidArgument, "Idempotency-Key header is required");
                return net::Response::json(to_json(ingest_submission(req.body, *key)), 201);
              }));
  router_.add("GET", "/reports/recruitment",
              guarded([this](const net::Request&) { return net::Response::json(recruitment_report()); }));
  router_.add("GET", "/provenance", guarded([this](const net::Request&) {
                net::Response r;
                r.body = provenance_.export_jsonl();
                r.content_type = "application/x-ndjson";
                return r;
              }));
}

}  // namespace esource::tss
