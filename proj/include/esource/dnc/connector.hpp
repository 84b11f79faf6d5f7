#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "esource/analytics/recruitment.hpp"
#include "esource/cdim/catalog.hpp"
#include "esource/cdim/source_model.hpp"
#include "esource/cdim/terminology.hpp"
#include "esource/dnc/eligibility.hpp"
#include "esource/ehr/ehr_system.hpp"
#include "esource/mediator/mediator.hpp"
#include "esource/net/http.hpp"
#include "esource/odm/model.hpp"
#include "esource/provenance/graph.hpp"
#include "esource/util/append_log.hpp"
#include "esource/util/time.hpp"

namespace esource::dnc {

enum class Verdict { Eligible, NotEligible, AlreadyEnrolled };
std::string_view to_string(Verdict v) noexcept;

struct AtomEvaluation {
  Atom atom;
  bool value = false;
  std::vector<mediator::ResultRow> evidence;
};

struct ScreeningOutcome {
  std::string pseudonym;
  std::string study_oid;
  Verdict verdict = Verdict::NotEligible;
  std::vector<AtomEvaluation> evaluated_atoms;
  std::optional<std::string> alert_id;
};

enum class WorkflowState { Flagged, Consented, Randomized, Crom1Done, Crom2Done, Completed, Withdrawn };
enum class PromState { None, Prom1Done, Prom2Done };
std::string_view to_string(WorkflowState s) noexcept;
std::string_view to_string(PromState s) noexcept;
std::optional<WorkflowState> workflow_state_from_string(std::string_view s) noexcept;
std::optional<PromState> prom_state_from_string(std::string_view s) noexcept;

struct SubjectState {
  std::string pseudonym;
  std::string study_oid;
  std::string patient_native_id;
  WorkflowState workflow = WorkflowState::Flagged;
  PromState prom = PromState::None;
  std::optional<analytics::Arm> arm;
  std::optional<Date> randomized_on;
  std::string screen_artifact;  // provenance id of the screening outcome
  friend bool operator==(const SubjectState&, const SubjectState&) = default;
};

nlohmann::json to_json(const SubjectState& s);
SubjectState subject_from_json(const nlohmann::json& j);

/// Whether the subject may submit the form of `stage` on `today`.
bool stage_permitted(const SubjectState& s, odm::Stage stage, Date today, int prom1_offset_days);
/// State after a successful submission of `stage`. Errors: WrongWorkflowState.
SubjectState after_submission(SubjectState s, odm::Stage stage, Date today, int prom1_offset_days);
/// Consent, randomization and withdrawal. Errors: WrongWorkflowState.
SubjectState after_transition(SubjectState s, WorkflowState next);

struct Alert {
  std::string alert_id;
  std::string pseudonym;
  std::string study_oid;
  std::string study_name;
  std::string fired_at;
  bool pending = true;
  std::string resolution;  // "dismissed" or "consented"
};

struct PreparedField {
  std::string value;
  std::optional<std::string> unit;
  std::string artifact_id;  // Prepopulate output for this field
};

struct PreparedForm {
  std::string pseudonym;
  std::string study_oid;
  std::string form_oid;
  std::string html;
  std::string odm_container;
  std::map<std::string, PreparedField> prefilled;
  std::map<std::string, std::string> manual_required;  // item -> reason
  std::string form_artifact;
};

enum class SubmissionStatus { Accepted, Pending };
std::string_view to_string(SubmissionStatus s) noexcept;

struct SubmissionReceipt {
  std::string submission_id;
  std::string pseudonym;
  std::string form_oid;
  SubmissionStatus status = SubmissionStatus::Pending;
  std::string document_digest;
  std::optional<std::string> tss_receipt_id;
  std::optional<std::string> artefact_id;
};

nlohmann::json to_json(const SubmissionReceipt& r);
SubmissionReceipt submission_receipt_from_json(const nlohmann::json& j);

struct SyncResult {
  bool reachable = false;
  std::size_t received = 0;
  std::size_t retired = 0;
  long cursor = 0;
  std::size_t flushed = 0;
};

struct DncConfig {
  std::string practice_id;
  std::string source_id;
  std::string site_key = "site-key";
  std::string country;
  analytics::Arm arm = analytics::Arm::T;  // practice cluster arm
  std::string pair_id;
  std::string tss_target = "tss";
  std::string ehr_target = "ehr";
  std::optional<std::filesystem::path> data_dir;
  int prom1_offset_days = 0;
  /// Control-arm practices run the basic eCRF: no pop-ups, no pre-loading.
  bool alerts = true;
  bool prepopulate = true;
  int poll_interval_minutes = 30;
};

/// Keyed pseudonym for a native patient id: HMAC-SHA256 over
/// `<source>:<native id>`, first 16 hex characters.
std::string make_pseudonym(std::string_view site_key, std::string_view source_id, std::string_view native_id);

/// Evaluates an eligibility expression against a record through the mediator.
std::vector<AtomEvaluation> evaluate_atoms(const Expr& e, const mediator::PatientRecordExtract& rec,
                                           const cdim::SourceModel& sm, Date encounter_date,
                                           const cdim::Catalog& catalog, const cdim::TerminologyMap& terms);

/// Per-practice connector. Every exchange with the study system and the EHR
/// is a request it initiates through its transport.
class DataNodeConnector {
 public:
  DataNodeConnector(DncConfig config, std::shared_ptr<net::Transport> transport, const cdim::SourceModel& model,
                    const cdim::Catalog& catalog = cdim::Catalog::builtin(),
                    const cdim::TerminologyMap& terms = cdim::TerminologyMap::builtin(), Clock clock = wall_clock_now);

  const DncConfig& config() const { return config_; }

  /// Pulls protocol changes and drains the outbox. Never throws on an
  /// unreachable study system; sets the degraded flag instead.
  SyncResult sync_protocols();
  bool degraded() const;
  long cursor() const;
  std::vector<std::string> cached_studies() const;
  /// Errors: UnknownStudy.
  odm::OdmStudyBundle cached_bundle(const std::string& study_oid) const;

  /// Errors: RecordFetchFailed.
  std::vector<ehr::EncounterEvent> poll_clinic_day(Date date, std::optional<std::uint64_t> seed = std::nullopt);

  /// Errors: NoActiveProtocol, RecordFetchFailed, UnknownStudy.
  ScreeningOutcome screen_encounter(const ehr::EncounterEvent& event,
                                    const std::optional<std::string>& study_oid = std::nullopt);

  /// Records consent and requests randomization. Errors: UnknownSubject, WrongWorkflowState.
  SubjectState consent(const std::string& pseudonym);
  SubjectState withdraw(const std::string& pseudonym);

  /// Errors: UnknownSubject, WrongWorkflowState, UnknownForm, RecordFetchFailed.
  PreparedForm prepare_form(const std::string& pseudonym, const std::string& form_oid);
  /// Values keyed by item OID; items left out keep their pre-loaded value.
  /// Errors: UnknownSubject, WrongWorkflowState, UnknownItem, TypeMismatch, TssRejection.
  SubmissionReceipt submit_form(const std::string& pseudonym, const std::string& form_oid,
                                const std::map<std::string, std::string>& values,
                                provenance::AgentRole role = provenance::AgentRole::Clinician);

  std::vector<Alert> alerts(bool pending_only = true) const;
  /// Errors: InvalidArgument for an unknown alert.
  void dismiss_alert(const std::string& alert_id);

  /// Errors: UnknownSubject.
  SubjectState subject(const std::string& pseudonym) const;
  std::vector<SubjectState> subjects() const;
  std::string pseudonym_for(const std::string& native_id) const;
  std::size_t outbox_size() const;
  std::vector<SubmissionReceipt> submissions() const;

  const provenance::ProvenanceGraph& provenance() const { return provenance_; }

  /// GET /alerts, POST /alerts/{id}/dismiss, GET /forms/{pseudonym}/{form},
  /// POST /forms/{pseudonym}/{form}, POST /consent/{pseudonym},
  /// GET /subjects/{pseudonym}.
  const net::Router& router() const { return router_; }

 private:
  struct CachedProtocol {
    std::string xml;
    odm::OdmStudyBundle bundle;
    int version = 0;
    std::string artifact_id;
  };
  struct OutboxEntry {
    std::string id;
    std::string kind;  // event | randomize | submission | artefact
    nlohmann::json payload;
  };

  mediator::PatientRecordExtract fetch_record(const std::string& native_id);
  net::Response call(const std::string& target, net::Request req);
  bool try_deliver(const OutboxEntry& e);
  std::size_t flush_outbox_locked();
  void enqueue_locked(OutboxEntry e);
  void send_or_queue_locked(OutboxEntry e);
  void set_subject_locked(const SubjectState& s);
  SubjectState& subject_locked(const std::string& pseudonym);
  const CachedProtocol& protocol_locked(const std::string& study_oid) const;
  std::string ensure_protocol_artifact_locked(const std::string& study_oid);
  void send_event_locked(const SubjectState& s, analytics::EventKind kind);
  void apply_randomization_locked(const std::string& pseudonym, const nlohmann::json& assignment);
  void save_provenance_locked();
  void replay();
  void build_router();
  std::string render_html(const odm::FormDef& form, const PreparedForm& p) const;

  DncConfig config_;
  std::shared_ptr<net::Transport> transport_;
  const cdim::SourceModel& model_;
  const cdim::Catalog& catalog_;
  const cdim::TerminologyMap& terms_;
  Clock clock_;

  mutable std::recursive_mutex mutex_;
  bool degraded_ = false;
  bool registered_ = false;
  long cursor_ = 0;
  std::map<std::string, CachedProtocol> protocols_;
  std::map<std::string, SubjectState> subjects_;
  std::map<std::string, Alert> alerts_;
  std::set<std::string> alerted_;  // pseudonym|study, lifetime
  std::map<std::string, PreparedForm> prepared_;  // pseudonym|form
  std::map<std::string, SubmissionReceipt> submissions_;
  std::deque<OutboxEntry> outbox_;
  std::size_t outbox_seq_ = 0;

  provenance::ProvenanceGraph provenance_;
  AppendLog journal_;
  net::Router router_;
};

}  // namespace esource::dnc
