#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace esource::provenance {

enum class ProcessKind { Sync, Screen, Prepopulate, Edit, Submit, Ingest };
enum class AgentRole { Dnc, Tss, Clinician, Patient };

std::string_view to_string(ProcessKind k) noexcept;
std::optional<ProcessKind> process_kind_from_string(std::string_view s) noexcept;
std::string_view to_string(AgentRole r) noexcept;
std::optional<AgentRole> agent_role_from_string(std::string_view s) noexcept;

inline constexpr ProcessKind kAllProcessKinds[] = {ProcessKind::Sync,   ProcessKind::Screen, ProcessKind::Prepopulate,
                                                   ProcessKind::Edit,   ProcessKind::Submit, ProcessKind::Ingest};

struct ArtifactNode {
  std::string id;
  std::string digest;  // lower-case hex SHA-256 of the payload it names
  std::string label;
  friend bool operator==(const ArtifactNode&, const ArtifactNode&) = default;
};

struct ProcessNode {
  std::string id;
  ProcessKind kind = ProcessKind::Sync;
  std::string note;  // free text; `absent:<Kind>` entries document skipped steps
  friend bool operator==(const ProcessNode&, const ProcessNode&) = default;
};

struct AgentNode {
  std::string id;
  AgentRole role = AgentRole::Dnc;
  friend bool operator==(const AgentNode&, const AgentNode&) = default;
};

enum class EdgeKind { Used, WasGeneratedBy, WasControlledBy };

struct Edge {
  EdgeKind kind;
  std::string from;  // process for Used/WasControlledBy, artifact for WasGeneratedBy
  std::string to;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct OutputSpec {
  std::string digest;
  std::string label;
};

struct Subgraph {
  std::map<std::string, ArtifactNode> artifacts;
  std::map<std::string, ProcessNode> processes;
  std::map<std::string, AgentNode> agents;
  std::set<Edge> edges;

  bool has_process(ProcessKind k) const;
  std::vector<const ProcessNode*> processes_of(ProcessKind k) const;
};

/// Digest naming one form field value; field artifacts carry it.
std::string field_digest(std::string_view item_oid, std::string_view value);

/// Open-Provenance-Model style lineage graph. Node ids are `<namespace>/<kind
/// letter><n>`, so graphs kept by different components never collide.
class ProvenanceGraph {
 public:
  explicit ProvenanceGraph(std::string ns = "prov");
  ProvenanceGraph(const ProvenanceGraph& other);
  ProvenanceGraph& operator=(const ProvenanceGraph& other);

  /// Adds an artifact with no generating process (e.g. a received payload).
  std::string register_artifact(std::string digest, std::string label);
  /// Idempotent; returns the id.
  std::string ensure_agent(const std::string& agent_id, AgentRole role);

  struct Activity {
    std::string process_id;
    std::vector<std::string> outputs;  // artifact ids, in OutputSpec order
  };
  /// Atomic. Errors: UnknownArtifact (input not in graph), InvalidArgument
  /// (agent not registered).
  Activity record_activity(ProcessKind kind, const std::vector<std::string>& inputs,
                           const std::vector<OutputSpec>& outputs, const std::string& agent_id,
                           std::string note = {});

  /// Ancestors closure, including the artifact itself. Errors: UnknownArtifact.
  Subgraph lineage_of(const std::string& artifact_id) const;

  std::optional<ArtifactNode> artifact(const std::string& id) const;
  std::vector<std::string> artifacts_with_digest(const std::string& digest) const;
  /// Process that generated the artifact, if any.
  std::optional<ProcessNode> generator_of(const std::string& artifact_id) const;

  /// Copies `other` into this graph. Root artifacts of `other` whose digest
  /// equals an artifact already here are identified with it, which is how the
  /// TSS and DNC halves of a submission's history join up.
  void stitch(const ProvenanceGraph& other);

  Subgraph snapshot() const;
  /// One JSON object per line; nodes first, then edges.
  std::string export_jsonl() const;
  static ProvenanceGraph import_jsonl(std::string_view text, std::string ns = "prov");

  /// False if some artifact is its own ancestor. Maintained by construction;
  /// exposed for property tests.
  bool acyclic() const;

 private:
  Subgraph lineage_locked(const std::string& artifact_id) const;
  std::string next_id(char kind);

  std::string ns_;
  std::size_t counter_ = 0;
  mutable std::mutex mutex_;
  Subgraph g_;
  std::map<std::string, std::string> generated_by_;           // artifact -> process
  std::map<std::string, std::vector<std::string>> used_;      // process -> artifacts
  std::map<std::string, std::string> controlled_by_;          // process -> agent
  std::map<std::string, std::vector<std::string>> by_digest_;
};

enum class FindingCode { DigestMismatch, MissingProcessKind, UnexplainedChange, UnreadableDocument };
std::string_view to_string(FindingCode c) noexcept;

struct VerificationFinding {
  FindingCode code;
  std::string detail;
};

struct VerificationResult {
  bool ok = false;
  std::vector<VerificationFinding> findings;
  bool contains(FindingCode c) const;
};

/// Checks a stored ClinicalData document against its lineage: (a) the payload
/// digest equals the artifact's; (b) all six process kinds appear in the
/// lineage or are documented absent (`absent:<Kind>` in a process note);
/// (c) each prepopulated field value is a Prepopulate output, each edited or
/// manual value an Edit output. Errors: UnknownArtifact.
VerificationResult verify_submission_chain(const ProvenanceGraph& graph, const std::string& stored_artifact_id,
                                           std::string_view stored_payload);

}  // namespace esource::provenance
