#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "esource/analytics/recruitment.hpp"
#include "esource/net/http.hpp"
#include "esource/odm/model.hpp"
#include "esource/provenance/graph.hpp"
#include "esource/util/append_log.hpp"
#include "esource/util/time.hpp"

namespace esource::tss {

enum class StudyStatus { Draft, Active, Closed };
std::string_view to_string(StudyStatus s) noexcept;

/// One immutable entry of a study's history; every change adds one.
struct StudyVersion {
  int version = 0;
  long revision = 0;  // registry-wide change counter, used as the protocol cursor
  StudyStatus status = StudyStatus::Draft;
  std::string bundle_xml;
  std::string changed_at;
};

struct StudyRegistration {
  std::string study_oid;
  std::vector<StudyVersion> history;
  const StudyVersion& current() const { return history.back(); }
};

struct ProtocolEntry {
  std::string study_oid;
  int version = 0;
  long revision = 0;
  std::string bundle_xml;
};

struct ProtocolDelta {
  std::vector<ProtocolEntry> active;  // Active studies changed since the cursor
  std::vector<std::string> retired;   // studies no longer Active since the cursor
  long cursor = 0;
};

nlohmann::json to_json(const ProtocolDelta& d);
ProtocolDelta protocol_delta_from_json(const nlohmann::json& j);

struct RandomizationAssignment {
  std::string pseudonym;
  std::string practice_id;
  analytics::Arm arm = analytics::Arm::T;
  int block_index = 0;  // 1-based
  int slot_index = 0;   // 1-based position in the practice's sequence
  std::string issued_at;
  friend bool operator==(const RandomizationAssignment&, const RandomizationAssignment&) = default;
};

nlohmann::json to_json(const RandomizationAssignment& a);
RandomizationAssignment assignment_from_json(const nlohmann::json& j);

inline constexpr int kBlockSize = 4;

/// Arms of the practice's permuted-block sequence for blocks 1..n_blocks.
/// Pure in (seed, practice_id).
std::vector<analytics::Arm> assignment_sequence(std::uint64_t seed, const std::string& practice_id, int n_blocks);

struct Receipt {
  std::string receipt_id;
  std::string idempotency_key;
  std::string study_oid;
  std::string subject_key;
  std::string form_oid;
  std::string stage;
  std::string digest;
  std::string stored_artifact_id;
  std::string received_at;
  friend bool operator==(const Receipt&, const Receipt&) = default;
};

nlohmann::json to_json(const Receipt& r);
Receipt receipt_from_json(const nlohmann::json& j);

struct TssConfig {
  std::optional<std::filesystem::path> data_dir;
  std::uint64_t seed = 42;
  /// When set, every request must carry it in `x-site-token`.
  std::optional<std::string> site_token;
};

/// Central study system: protocol registry, randomization, repository and
/// reporting. It only ever answers requests.
class StudySystem {
 public:
  explicit StudySystem(TssConfig config = {}, Clock clock = wall_clock_now);

  /// Errors: ValidationFailed, MalformedXml, SchemaViolation.
  std::string register_study(const std::string& bundle_xml);
  /// Errors: UnknownStudy.
  void activate(const std::string& study_oid);
  void close(const std::string& study_oid);
  StudyRegistration registration(const std::string& study_oid) const;
  /// The bundle of the study's current Active version. Errors: UnknownStudy.
  odm::OdmStudyBundle active_bundle(const std::string& study_oid) const;

  ProtocolDelta serve_protocols(long since) const;
  long head() const;

  void register_practice(const analytics::PracticeInfo& p);
  /// Flagged/Consented notifications from a DNC. Errors: UnknownPractice,
  /// SequenceViolation, InvalidArgument for other kinds.
  void record_event(const analytics::RecruitmentEvent& e);

  /// Errors: UnknownPractice, NotConsented, AlreadyAssigned.
  RandomizationAssignment randomize(const std::string& pseudonym, const std::string& practice_id,
                                    const std::optional<std::string>& idempotency_key = std::nullopt);
  std::vector<RandomizationAssignment> assignments(const std::string& practice_id) const;

  /// Errors: UnknownStudy, SequenceViolation, SchemaViolation.
  Receipt ingest_submission(const std::string& document, const std::string& idempotency_key);
  std::vector<Receipt> receipts() const;
  /// Payload exactly as stored. Errors: UnknownArtefact.
  std::string stored_document(const std::string& receipt_id) const;

  analytics::RecruitmentLog recruitment_log() const;
  nlohmann::json recruitment_report() const;

  const provenance::ProvenanceGraph& provenance() const { return provenance_; }

  /// GET /studies?since=, POST /studies, POST /studies/{oid}/activate,
  /// POST /studies/{oid}/close, POST /practices, POST /recruitment-events,
  /// POST /randomize, POST /clinical-data, GET /reports/recruitment,
  /// GET /provenance.
  const net::Router& router() const { return router_; }

 private:
  void build_router();
  void replay();
  long bump_revision();
  StudyVersion& push_version(StudyRegistration& reg, StudyStatus status, std::string bundle_xml);
  const analytics::PracticeInfo& practice_locked(const std::string& id) const;
  void apply_event_locked(const analytics::RecruitmentEvent& e, bool persist);
  RandomizationAssignment allocate_locked(const std::string& pseudonym, const std::string& practice_id,
                                          const std::string& key, bool persist);
  Receipt ingest_locked(const std::string& document, const std::string& key, bool persist,
                        const std::optional<Receipt>& replayed);

  TssConfig config_;
  Clock clock_;

  mutable std::mutex mutex_;
  long revision_ = 0;
  std::map<std::string, StudyRegistration> studies_;
  std::map<std::string, odm::OdmStudyBundle> active_bundles_;
  analytics::RecruitmentLog log_;
  std::map<std::string, std::set<analytics::EventKind>> subject_events_;
  std::map<std::string, RandomizationAssignment> assignments_;  // by pseudonym
  std::map<std::string, std::string> randomize_keys_;           // key -> pseudonym
  std::map<std::string, std::vector<std::string>> practice_sequence_;  // practice -> pseudonyms
  std::vector<Receipt> receipts_;
  std::map<std::string, std::size_t> receipt_by_key_;
  std::map<std::string, std::string> documents_;  // receipt id -> payload

  provenance::ProvenanceGraph provenance_{"tss"};
  AppendLog journal_;  // every state change, in order
  net::Router router_;
};

}  // namespace esource::tss
