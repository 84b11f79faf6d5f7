#include "esource/dnc/connector.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>

#include "esource/error.hpp"
#include "esource/odm/odm.hpp"
#include "esource/util/digest.hpp"
#include "esource/util/file.hpp"
#include "esource/util/xml.hpp"

namespace esource::dnc {

using analytics::EventKind;
using provenance::AgentRole;
using provenance::ProcessKind;

std::string_view to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::Eligible: return "Eligible";
    case Verdict::NotEligible: return "NotEligible";
    case Verdict::AlreadyEnrolled: return "AlreadyEnrolled";
  }
  return "NotEligible";
}

namespace {

constexpr WorkflowState kWorkflowStates[] = {WorkflowState::Flagged,   WorkflowState::Consented,
                                             WorkflowState::Randomized, WorkflowState::Crom1Done,
                                             WorkflowState::Crom2Done, WorkflowState::Completed,
                                             WorkflowState::Withdrawn};

bool at_least_randomized(WorkflowState s) {
  return s == WorkflowState::Randomized || s == WorkflowState::Crom1Done || s == WorkflowState::Crom2Done ||
         s == WorkflowState::Completed;
}

std::string subject_form_key(const std::string& pseudonym, const std::string& form_oid) {
  return pseudonym + "|" + form_oid;
}

}  // namespace

std::string_view to_string(WorkflowState s) noexcept {
  switch (s) {
    case WorkflowState::Flagged: return "Flagged";
    case WorkflowState::Consented: return "Consented";
    case WorkflowState::Randomized: return "Randomized";
    case WorkflowState::Crom1Done: return "Crom1Done";
    case WorkflowState::Crom2Done: return "Crom2Done";
    case WorkflowState::Completed: return "Completed";
    case WorkflowState::Withdrawn: return "Withdrawn";
  }
  return "Flagged";
}

std::string_view to_string(PromState s) noexcept {
  switch (s) {
    case PromState::None: return "None";
    case PromState::Prom1Done: return "Prom1Done";
    case PromState::Prom2Done: return "Prom2Done";
  }
  return "None";
}

std::optional<WorkflowState> workflow_state_from_string(std::string_view s) noexcept {
  for (auto w : kWorkflowStates) {
    if (to_string(w) == s) return w;
  }
  return std::nullopt;
}

std::optional<PromState> prom_state_from_string(std::string_view s) noexcept {
  for (auto p : {PromState::None, PromState::Prom1Done, PromState::Prom2Done}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

std::string_view to_string(SubmissionStatus s) noexcept { return s == SubmissionStatus::Accepted ? "Accepted" : "Pending"; }

nlohmann::json to_json(const SubjectState& s) {
  nlohmann::json j{{"pseudonym", s.pseudonym},
                   {"study_oid", s.study_oid},
                   {"patient", s.patient_native_id},
                   {"workflow", to_string(s.workflow)},
                   {"prom", to_string(s.prom)},
                   {"screen_artifact", s.screen_artifact}};
  if (s.arm) j["arm"] = to_string(*s.arm);
  if (s.randomized_on) j["randomized_on"] = format_iso_date(*s.randomized_on);
  return j;
}

SubjectState subject_from_json(const nlohmann::json& j) {
  SubjectState s;
  s.pseudonym = j.at("pseudonym").get<std::string>();
  s.study_oid = j.value("study_oid", "");
  s.patient_native_id = j.value("patient", "");
  auto w = workflow_state_from_string(j.at("workflow").get<std::string>());
  auto p = prom_state_from_string(j.at("prom").get<std::string>());
  if (!w || !p) throw Error(Errc::StorageError, "bad subject state for " + s.pseudonym);
  s.workflow = *w;
  s.prom = *p;
  s.screen_artifact = j.value("screen_artifact", "");
  if (j.contains("arm")) s.arm = analytics::arm_from_string(j["arm"].get<std::string>());
  if (j.contains("randomized_on")) s.randomized_on = parse_iso_date(j["randomized_on"].get<std::string>());
  return s;
}

nlohmann::json to_json(const SubmissionReceipt& r) {
  nlohmann::json j{{"submission_id", r.submission_id},
                   {"pseudonym", r.pseudonym},
                   {"form_oid", r.form_oid},
                   {"status", to_string(r.status)},
                   {"document_digest", r.document_digest}};
  if (r.tss_receipt_id) j["tss_receipt_id"] = *r.tss_receipt_id;
  if (r.artefact_id) j["artefact_id"] = *r.artefact_id;
  return j;
}

SubmissionReceipt submission_receipt_from_json(const nlohmann::json& j) {
  SubmissionReceipt r;
  r.submission_id = j.at("submission_id").get<std::string>();
  r.pseudonym = j.value("pseudonym", "");
  r.form_oid = j.value("form_oid", "");
  r.status = j.value("status", "") == "Accepted" ? SubmissionStatus::Accepted : SubmissionStatus::Pending;
  r.document_digest = j.value("document_digest", "");
  if (j.contains("tss_receipt_id")) r.tss_receipt_id = j["tss_receipt_id"].get<std::string>();
  if (j.contains("artefact_id")) r.artefact_id = j["artefact_id"].get<std::string>();
  return r;
}

bool stage_permitted(const SubjectState& s, odm::Stage stage, Date today, int prom1_offset_days) {
  switch (stage) {
    case odm::Stage::Crom1: return s.workflow == WorkflowState::Randomized;
    case odm::Stage::Crom2: return s.workflow == WorkflowState::Crom1Done;
    case odm::Stage::Prom1:
      return at_least_randomized(s.workflow) && s.prom == PromState::None && s.randomized_on &&
             today >= *s.randomized_on + std::chrono::days(prom1_offset_days);
    case odm::Stage::Prom2: return at_least_randomized(s.workflow) && s.prom == PromState::Prom1Done;
  }
  return false;
}

SubjectState after_submission(SubjectState s, odm::Stage stage, Date today, int prom1_offset_days) {
  if (!stage_permitted(s, stage, today, prom1_offset_days)) {
    throw Error(Errc::WrongWorkflowState, std::string(odm::to_string(stage)) + " not permitted in state " +
                                              std::string(to_string(s.workflow)) + "/" +
                                              std::string(to_string(s.prom)));
  }
  switch (stage) {
    case odm::Stage::Crom1: s.workflow = WorkflowState::Crom1Done; break;
    case odm::Stage::Crom2: s.workflow = WorkflowState::Crom2Done; break;
    case odm::Stage::Prom1: s.prom = PromState::Prom1Done; break;
    case odm::Stage::Prom2: s.prom = PromState::Prom2Done; break;
  }
  if (s.workflow == WorkflowState::Crom2Done && s.prom == PromState::Prom2Done) s.workflow = WorkflowState::Completed;
  return s;
}

SubjectState after_transition(SubjectState s, WorkflowState next) {
  bool ok = false;
  switch (next) {
    case WorkflowState::Consented: ok = s.workflow == WorkflowState::Flagged; break;
    case WorkflowState::Randomized: ok = s.workflow == WorkflowState::Consented; break;
    case WorkflowState::Withdrawn:
      ok = s.workflow != WorkflowState::Completed && s.workflow != WorkflowState::Withdrawn;
      break;
    default: ok = false;  // form-driven states advance through after_submission only
  }
  if (!ok) {
    throw Error(Errc::WrongWorkflowState,
                std::string(to_string(s.workflow)) + " -> " + std::string(to_string(next)) + " is not allowed");
  }
  s.workflow = next;
  return s;
}

std::string make_pseudonym(std::string_view site_key, std::string_view source_id, std::string_view native_id) {
  std::string msg(source_id);
  msg += ':';
  msg += native_id;
  return hmac_sha256_hex(site_key, msg).substr(0, 16);
}

std::vector<AtomEvaluation> evaluate_atoms(const Expr& e, const mediator::PatientRecordExtract& rec,
                                           const cdim::SourceModel& sm, Date encounter_date,
                                           const cdim::Catalog& catalog, const cdim::TerminologyMap& terms) {
  mediator::ExecutionContext ctx;
  ctx.as_of = encounter_date;
  auto run = [&](const mediator::ConceptSelector& sel) -> std::vector<mediator::ResultRow> {
    mediator::DataExtractionQuery q{"eligibility", {sel}, {sel.concept_id}};
    mediator::TranslatedQuery tq;
    try {
      tq = mediator::translate_query(q, sm, catalog, terms);
    } catch (const Error& err) {
      // A source that cannot express the filter holds no matching facts.
      if (err.code() == Errc::UntranslatableFilter) return {};
      throw;
    }
    auto rs = mediator::execute_query(tq, rec, sm, ctx, catalog);
    std::vector<mediator::ResultRow> rows;
    for (const auto* r : rs.rows_for(sel.concept_id)) rows.push_back(*r);
    return rows;
  };

  std::optional<std::vector<mediator::ResultRow>> birth_rows;
  std::vector<AtomEvaluation> out;
  for (const auto& atom : atoms_of(e)) {
    AtomEvaluation ev{atom, false, {}};
    switch (atom.kind) {
      case Atom::Kind::HasDiagnosis:
        ev.evidence = run({"OGMS/73", atom.label, mediator::Temporal::all()});
        ev.value = !ev.evidence.empty();
        break;
      case Atom::Kind::HasActiveDrug:
        ev.evidence = run({"CDIM/37", atom.label, mediator::Temporal::within(90)});
        ev.value = !ev.evidence.empty();
        break;
      case Atom::Kind::AgeAtLeast:
      case Atom::Kind::AgeBelow: {
        if (!birth_rows) birth_rows = run({"CDIM/7", std::nullopt, mediator::Temporal::latest()});
        ev.evidence = *birth_rows;
        std::optional<Instant> birth;
        if (!ev.evidence.empty()) birth = Instant::parse(ev.evidence.front().value);
        if (birth) {
          int age = age_in_years(birth->day, encounter_date);
          ev.value = atom.kind == Atom::Kind::AgeAtLeast ? age >= atom.years : age < atom.years;
        }
        break;
      }
    }
    out.push_back(std::move(ev));
  }
  return out;
}

DataNodeConnector::DataNodeConnector(DncConfig config, std::shared_ptr<net::Transport> transport,
                                     const cdim::SourceModel& model, const cdim::Catalog& catalog,
                                     const cdim::TerminologyMap& terms, Clock clock)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      model_(model),
      catalog_(catalog),
      terms_(terms),
      clock_(std::move(clock)),
      provenance_("dnc-" + config_.practice_id) {
  if (config_.practice_id.empty()) throw Error(Errc::InvalidConfig, "practice id is required");
  if (config_.source_id != model_.source_id()) {
    throw Error(Errc::InvalidConfig, "configured source " + config_.source_id + " but model is " + model_.source_id());
  }
  if (config_.data_dir) {
    auto prov = *config_.data_dir / "provenance.jsonl";
    if (std::filesystem::exists(prov)) {
      provenance_ = provenance::ProvenanceGraph::import_jsonl(read_file(prov), "dnc-" + config_.practice_id);
    }
    journal_.open(*config_.data_dir / "journal.jsonl");
    replay();
  }
  provenance_.ensure_agent("dnc:" + config_.practice_id, AgentRole::Dnc);
  provenance_.ensure_agent("clinician:" + config_.practice_id, AgentRole::Clinician);
  provenance_.ensure_agent("patient", AgentRole::Patient);
  build_router();
}

net::Response DataNodeConnector::call(const std::string& target, net::Request req) {
  return transport_->send(target, std::move(req));
}

void DataNodeConnector::save_provenance_locked() {
  if (config_.data_dir) write_file(*config_.data_dir / "provenance.jsonl", provenance_.export_jsonl());
}

SyncResult DataNodeConnector::sync_protocols() {
  std::lock_guard lock(mutex_);
  SyncResult r;
  try {
    if (!registered_) {
      analytics::PracticeInfo p{config_.practice_id, config_.country, config_.arm, config_.pair_id,
                                config_.source_id, std::nullopt};
      net::raise_for_status(call(config_.tss_target, net::Request::post("/practices", analytics::to_json(p).dump())));
      registered_ = true;
      journal_.append({{"type", "cursor"}, {"cursor", cursor_}, {"registered", true}});
    }
    auto resp = call(config_.tss_target, net::Request::get("/studies?since=" + std::to_string(cursor_)));
    net::raise_for_status(resp);
    auto delta = resp.json();
    r.reachable = true;
    degraded_ = false;
    for (const auto& entry : delta.at("studies")) {
      auto oid = entry.at("study_oid").get<std::string>();
      CachedProtocol cp;
      cp.xml = entry.at("bundle_xml").get<std::string>();
      cp.bundle = odm::parse_study_bundle(cp.xml);
      cp.version = entry.at("version").get<int>();
      auto act = provenance_.record_activity(
          ProcessKind::Sync, {}, {{sha256_hex(cp.xml), "protocol " + oid + " v" + std::to_string(cp.version)}},
          "dnc:" + config_.practice_id);
      cp.artifact_id = act.outputs.front();
      journal_.append({{"type", "protocol"},
                       {"study_oid", oid},
                       {"version", cp.version},
                       {"xml", cp.xml},
                       {"artifact", cp.artifact_id}});
      protocols_[oid] = std::move(cp);
      ++r.received;
    }
    for (const auto& oid : delta.value("retired", std::vector<std::string>{})) {
      if (protocols_.erase(oid)) {
        journal_.append({{"type", "retired"}, {"study_oid", oid}});
        ++r.retired;
      }
    }
    if (auto head = delta.at("cursor").get<long>(); head != cursor_) {
      cursor_ = head;
      journal_.append({{"type", "cursor"}, {"cursor", cursor_}, {"registered", registered_}});
    }
    if (r.received) save_provenance_locked();
    r.flushed = flush_outbox_locked();
  } catch (const Error& e) {
    if (e.code() != Errc::TransportError && net::http_status_for(e.code()) < 500) throw;
    degraded_ = true;
    r.reachable = false;
  }
  r.cursor = cursor_;
  return r;
}

bool DataNodeConnector::degraded() const {
  std::lock_guard lock(mutex_);
  return degraded_;
}

long DataNodeConnector::cursor() const {
  std::lock_guard lock(mutex_);
  return cursor_;
}

std::vector<std::string> DataNodeConnector::cached_studies() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [oid, p] : protocols_) out.push_back(oid);
  return out;
}

odm::OdmStudyBundle DataNodeConnector::cached_bundle(const std::string& study_oid) const {
  std::lock_guard lock(mutex_);
  return protocol_locked(study_oid).bundle;
}

const DataNodeConnector::CachedProtocol& DataNodeConnector::protocol_locked(const std::string& study_oid) const {
  auto it = protocols_.find(study_oid);
  if (it == protocols_.end()) throw Error(Errc::UnknownStudy, study_oid + " is not in the protocol cache");
  return it->second;
}

std::vector<ehr::EncounterEvent> DataNodeConnector::poll_clinic_day(Date date, std::optional<std::uint64_t> seed) {
  std::string path = "/clinic/" + net::url_encode(config_.practice_id) + "/day/" + format_iso_date(date);
  if (seed) path += "?seed=" + std::to_string(*seed);
  net::Response resp;
  try {
    resp = call(config_.ehr_target, net::Request::get(path));
  } catch (const Error& e) {
    throw Error(Errc::RecordFetchFailed, e.what());
  }
  if (!resp.ok()) throw Error(Errc::RecordFetchFailed, "clinic day: HTTP " + std::to_string(resp.status));
  return ehr::encounters_from_xml(config_.source_id, resp.body);
}

mediator::PatientRecordExtract DataNodeConnector::fetch_record(const std::string& native_id) {
  net::Response resp;
  try {
    resp = call(config_.ehr_target, net::Request::get("/patients/" + net::url_encode(native_id) + "/record"));
  } catch (const Error& e) {
    throw Error(Errc::RecordFetchFailed, e.what());
  }
  if (!resp.ok()) {
    throw Error(Errc::RecordFetchFailed, native_id + ": HTTP " + std::to_string(resp.status) + " " + resp.body);
  }
  return {config_.source_id, native_id, resp.body};
}

std::string DataNodeConnector::pseudonym_for(const std::string& native_id) const {
  return make_pseudonym(config_.site_key, config_.source_id, native_id);
}

void DataNodeConnector::set_subject_locked(const SubjectState& s) {
  subjects_[s.pseudonym] = s;
  journal_.append({{"type", "subject"}, {"state", to_json(s)}});
}

SubjectState& DataNodeConnector::subject_locked(const std::string& pseudonym) {
  auto it = subjects_.find(pseudonym);
  if (it == subjects_.end()) throw Error(Errc::UnknownSubject, pseudonym);
  return it->second;
}

void DataNodeConnector::send_event_locked(const SubjectState& s, EventKind kind) {
  analytics::RecruitmentEvent e{config_.practice_id, config_.country, s.pseudonym, kind, clock_(), std::nullopt};
  char id[32];
  std::snprintf(id, sizeof id, "OB-%06zu", ++outbox_seq_);
  send_or_queue_locked({id, "event", analytics::to_json(e)});
}

ScreeningOutcome DataNodeConnector::screen_encounter(const ehr::EncounterEvent& event,
                                                     const std::optional<std::string>& study_oid) {
  std::lock_guard lock(mutex_);
  if (protocols_.empty()) throw Error(Errc::NoActiveProtocol, "protocol cache is empty");
  const auto& oid = study_oid ? *study_oid : protocols_.begin()->first;
  const auto& proto = protocol_locked(oid);

  ScreeningOutcome out;
  out.study_oid = oid;
  out.pseudonym = pseudonym_for(event.patient_native_id);
  if (subjects_.count(out.pseudonym)) {
    out.verdict = Verdict::AlreadyEnrolled;
    return out;
  }

  auto rec = fetch_record(event.patient_native_id);
  bool eligible = false;
  if (proto.bundle.eligibility) {
    const auto& expr = proto.bundle.eligibility->expression;
    out.evaluated_atoms = evaluate_atoms(expr, rec, model_, event.encounter_instant.day, catalog_, terms_);
    std::vector<bool> values;
    for (const auto& a : out.evaluated_atoms) values.push_back(a.value);
    eligible = evaluate(expr, values);
  }
  out.verdict = eligible ? Verdict::Eligible : Verdict::NotEligible;

  auto record_art = provenance_.register_artifact(sha256_hex(rec.xml_document), "record extract " + out.pseudonym);
  std::vector<provenance::OutputSpec> outputs;
  if (eligible) {
    nlohmann::json summary{{"pseudonym", out.pseudonym}, {"study", oid}, {"verdict", to_string(out.verdict)}};
    nlohmann::json atoms = nlohmann::json::array();
    for (const auto& a : out.evaluated_atoms) atoms.push_back({{"atom", describe(a.atom)}, {"value", a.value}});
    summary["atoms"] = atoms;
    outputs.push_back({sha256_hex(summary.dump()), "screening " + out.pseudonym});
  }
  auto act = provenance_.record_activity(ProcessKind::Screen, {proto.artifact_id, record_art}, outputs,
                                         "dnc:" + config_.practice_id, oid);
  save_provenance_locked();
  if (!eligible) return out;

  SubjectState s;
  s.pseudonym = out.pseudonym;
  s.study_oid = oid;
  s.patient_native_id = event.patient_native_id;
  s.screen_artifact = act.outputs.front();
  set_subject_locked(s);

  auto alert_key = out.pseudonym + "|" + oid;
  if (config_.alerts && !alerted_.count(alert_key)) {
    Alert a;
    char id[32];
    std::snprintf(id, sizeof id, "AL-%06zu", alerts_.size() + 1);
    a.alert_id = id;
    a.pseudonym = out.pseudonym;
    a.study_oid = oid;
    a.study_name = proto.bundle.study_name;
    a.fired_at = clock_().to_string();
    alerts_[a.alert_id] = a;
    alerted_.insert(alert_key);
    journal_.append({{"type", "alert"},
                     {"alert",
                      {{"id", a.alert_id}, {"pseudonym", a.pseudonym}, {"study", a.study_oid},
                       {"name", a.study_name}, {"fired_at", a.fired_at}, {"pending", true}, {"resolution", ""}}}});
    out.alert_id = a.alert_id;
  }
  send_event_locked(s, EventKind::Flagged);
  return out;
}

SubjectState DataNodeConnector::consent(const std::string& pseudonym) {
  std::lock_guard lock(mutex_);
  auto s = after_transition(subject_locked(pseudonym), WorkflowState::Consented);
  set_subject_locked(s);
  for (auto& [id, a] : alerts_) {
    if (a.pseudonym == pseudonym && a.pending) {
      a.pending = false;
      a.resolution = "consented";
      journal_.append({{"type", "alert"},
                       {"alert",
                        {{"id", a.alert_id}, {"pseudonym", a.pseudonym}, {"study", a.study_oid}, {"name", a.study_name},
                         {"fired_at", a.fired_at}, {"pending", false}, {"resolution", a.resolution}}}});
    }
  }
  send_event_locked(s, EventKind::Consented);
  char id[32];
  std::snprintf(id, sizeof id, "OB-%06zu", ++outbox_seq_);
  send_or_queue_locked({id, "randomize",
                        {{"pseudonym", pseudonym},
                         {"practice", config_.practice_id},
                         {"key", stable_uuid(config_.practice_id + "|randomize|" + pseudonym)}}});
  return subjects_.at(pseudonym);
}

SubjectState DataNodeConnector::withdraw(const std::string& pseudonym) {
  std::lock_guard lock(mutex_);
  auto s = after_transition(subject_locked(pseudonym), WorkflowState::Withdrawn);
  set_subject_locked(s);
  return s;
}

void DataNodeConnector::apply_randomization_locked(const std::string& pseudonym, const nlohmann::json& assignment) {
  auto& cur = subject_locked(pseudonym);
  if (cur.workflow != WorkflowState::Consented) return;
  auto s = after_transition(cur, WorkflowState::Randomized);
  s.arm = analytics::arm_from_string(assignment.at("arm").get<std::string>());
  s.randomized_on = clock_().day;
  set_subject_locked(s);
}

bool DataNodeConnector::try_deliver(const OutboxEntry& e) {
  net::Response resp;
  try {
    if (e.kind == "event") {
      resp = call(config_.tss_target, net::Request::post("/recruitment-events", e.payload.dump()));
    } else if (e.kind == "randomize") {
      auto req = net::Request::post(
          "/randomize", nlohmann::json{{"pseudonym", e.payload["pseudonym"]}, {"practice", e.payload["practice"]}}.dump());
      req.with_header("idempotency-key", e.payload["key"].get<std::string>());
      resp = call(config_.tss_target, std::move(req));
    } else if (e.kind == "submission") {
      auto req = net::Request::post("/clinical-data", e.payload["document"].get<std::string>(), "application/xml");
      req.with_header("idempotency-key", e.payload["submission_id"].get<std::string>());
      resp = call(config_.tss_target, std::move(req));
    } else if (e.kind == "artefact") {
      resp = call(config_.ehr_target,
                  net::Request::post("/patients/" + net::url_encode(e.payload["patient"].get<std::string>()) +
                                         "/artefacts",
                                     e.payload["body"].get<std::string>()));
    }
  } catch (const Error& err) {
    if (err.code() == Errc::TransportError) return false;
    throw;
  }
  if (resp.status >= 500) return false;
  if (e.kind == "randomize" && resp.ok()) apply_randomization_locked(e.payload["pseudonym"], resp.json());
  if (e.kind == "submission" || e.kind == "artefact") {
    auto sid = e.payload["submission_id"].get<std::string>();
    auto it = submissions_.find(sid);
    if (it != submissions_.end() && resp.ok()) {
      auto body = resp.json();
      if (e.kind == "submission") {
        it->second.tss_receipt_id = body.at("receipt_id").get<std::string>();
        it->second.status = SubmissionStatus::Accepted;
      } else {
        it->second.artefact_id = body.at("artefact_id").get<std::string>();
      }
      journal_.append({{"type", "submission"}, {"receipt", to_json(it->second)}});
    }
  }
  // 4xx on a queued request cannot succeed later; it is dropped and journaled.
  return true;
}

void DataNodeConnector::enqueue_locked(OutboxEntry e) {
  journal_.append({{"type", "outbox"}, {"id", e.id}, {"kind", e.kind}, {"payload", e.payload}});
  outbox_.push_back(std::move(e));
}

void DataNodeConnector::send_or_queue_locked(OutboxEntry e) {
  if (outbox_.empty() && try_deliver(e)) return;
  enqueue_locked(std::move(e));
}

std::size_t DataNodeConnector::flush_outbox_locked() {
  std::size_t n = 0;
  while (!outbox_.empty()) {
    if (!try_deliver(outbox_.front())) {
      degraded_ = true;
      break;
    }
    journal_.append({{"type", "delivered"}, {"id", outbox_.front().id}});
    outbox_.pop_front();
    ++n;
  }
  return n;
}

std::size_t DataNodeConnector::outbox_size() const {
  std::lock_guard lock(mutex_);
  return outbox_.size();
}

std::string DataNodeConnector::render_html(const odm::FormDef& form, const PreparedForm& p) const {
  std::string h = "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" + xml::escape(form.name, false) +
                  "</title></head><body>\n";
  h += "<form method=\"post\" data-study=\"" + xml::escape(p.study_oid, true) + "\" data-form=\"" +
       xml::escape(form.oid, true) + "\" data-subject=\"" + xml::escape(p.pseudonym, true) + "\">\n";
  for (const auto& g : form.item_groups) {
    h += "<fieldset data-group=\"" + xml::escape(g.oid, true) + "\"><legend>" + xml::escape(g.name, false) +
         "</legend>\n";
    for (const auto& item : g.items) {
      auto f = p.prefilled.find(item.oid);
      bool filled = f != p.prefilled.end();
      h += "<label for=\"" + xml::escape(item.oid, true) + "\">" +
           xml::escape(item.question.empty() ? item.name : item.question, false) + "</label>";
      h += "<input id=\"" + xml::escape(item.oid, true) + "\" name=\"" + xml::escape(item.oid, true) +
           "\" data-type=\"" + std::string(odm::to_string(item.data_type)) + "\" data-origin=\"" +
           (filled ? "prepopulated" : "manual-required") + "\"";
      if (item.mandatory) h += " required";
      if (filled) {
        h += " value=\"" + xml::escape(f->second.value, true) + "\"";
        if (f->second.unit) h += " data-unit=\"" + xml::escape(*f->second.unit, true) + "\"";
      }
      h += "/>\n";
    }
    h += "</fieldset>\n";
  }
  h += "<button type=\"submit\">Submit</button>\n</form>\n</body></html>\n";
  return h;
}

PreparedForm DataNodeConnector::prepare_form(const std::string& pseudonym, const std::string& form_oid) {
  std::lock_guard lock(mutex_);
  const auto& s = subject_locked(pseudonym);
  const auto& proto = protocol_locked(s.study_oid);
  const auto* form = proto.bundle.find_form(form_oid);
  if (!form) throw Error(Errc::UnknownForm, form_oid);
  const auto* sched = proto.bundle.schedule_for_form(form_oid);
  if (!sched || !sched->stage) throw Error(Errc::UnknownForm, form_oid + " is not scheduled");
  if (!stage_permitted(s, *sched->stage, clock_().day, config_.prom1_offset_days)) {
    throw Error(Errc::WrongWorkflowState, form_oid + " not available in state " + std::string(to_string(s.workflow)) +
                                              "/" + std::string(to_string(s.prom)));
  }

  PreparedForm p;
  p.pseudonym = pseudonym;
  p.study_oid = s.study_oid;
  p.form_oid = form_oid;
  std::vector<std::string> inputs{proto.artifact_id};
  if (!s.screen_artifact.empty()) inputs.push_back(s.screen_artifact);

  if (config_.prepopulate) {
    auto rec = fetch_record(s.patient_native_id);
    inputs.push_back(provenance_.register_artifact(sha256_hex(rec.xml_document), "record extract " + pseudonym));
    mediator::ExecutionContext ctx;
    ctx.as_of = clock_().day;
    ctx.identifier_transform = [this](std::string_view native) { return pseudonym_for(std::string(native)); };
    auto pre = mediator::prepopulate_form(*form, proto.bundle.queries, rec, model_, ctx, catalog_, terms_);
    for (const auto& [item, f] : pre.filled) p.prefilled[item] = {f.value, f.unit, ""};
    for (const auto& [item, reason] : pre.unfilled) p.manual_required[item] = std::string(mediator::to_string(reason));
  } else {
    for (const auto& g : form->item_groups) {
      for (const auto& item : g.items) p.manual_required[item.oid] = "NoQuery";
    }
  }

  odm::ClinicalDataSubmission container;
  container.study_oid = s.study_oid;
  container.metadata_version = proto.bundle.metadata_version;
  container.subject_key = pseudonym;
  container.form_oid = form_oid;
  container.event_oid = sched->event_oid;
  for (const auto& [item, f] : p.prefilled) {
    container.field_values.push_back({item, f.value, f.unit, odm::Origin::Prepopulated, std::nullopt});
  }
  p.odm_container = odm::attach_clinical_data(proto.bundle, container);
  p.html = render_html(*form, p);

  if (config_.prepopulate) {
    std::vector<provenance::OutputSpec> outputs{{sha256_hex(p.odm_container), "prepared " + form_oid}};
    for (const auto& [item, f] : p.prefilled) outputs.push_back({provenance::field_digest(item, f.value), "field " + item});
    auto act = provenance_.record_activity(ProcessKind::Prepopulate, inputs, outputs, "dnc:" + config_.practice_id,
                                           form_oid);
    p.form_artifact = act.outputs[0];
    std::size_t i = 1;
    for (auto& [item, f] : p.prefilled) f.artifact_id = act.outputs[i++];
  } else {
    p.form_artifact = provenance_.register_artifact(sha256_hex(p.odm_container), "blank " + form_oid);
  }
  save_provenance_locked();

  nlohmann::json pre = nlohmann::json::object();
  for (const auto& [item, f] : p.prefilled) {
    pre[item] = {{"value", f.value}, {"artifact", f.artifact_id}};
    if (f.unit) pre[item]["unit"] = *f.unit;
  }
  journal_.append({{"type", "prepared"},
                   {"pseudonym", pseudonym},
                   {"study", p.study_oid},
                   {"form", form_oid},
                   {"html", p.html},
                   {"odm", p.odm_container},
                   {"prefilled", pre},
                   {"manual", p.manual_required},
                   {"artifact", p.form_artifact}});
  prepared_[subject_form_key(pseudonym, form_oid)] = p;
  return p;
}

SubmissionReceipt DataNodeConnector::submit_form(const std::string& pseudonym, const std::string& form_oid,
                                                 const std::map<std::string, std::string>& values,
                                                 provenance::AgentRole role) {
  std::lock_guard lock(mutex_);
  const auto s = subject_locked(pseudonym);
  const auto& proto = protocol_locked(s.study_oid);
  const auto* form = proto.bundle.find_form(form_oid);
  if (!form) throw Error(Errc::UnknownForm, form_oid);
  const auto* sched = proto.bundle.schedule_for_form(form_oid);
  if (!sched || !sched->stage) throw Error(Errc::UnknownForm, form_oid + " is not scheduled");
  auto next = after_submission(s, *sched->stage, clock_().day, config_.prom1_offset_days);
  auto pit = prepared_.find(subject_form_key(pseudonym, form_oid));
  if (pit == prepared_.end()) throw Error(Errc::WrongWorkflowState, form_oid + " has not been prepared");
  const auto& prepared = pit->second;

  odm::ClinicalDataSubmission sub;
  sub.study_oid = s.study_oid;
  sub.metadata_version = proto.bundle.metadata_version;
  sub.subject_key = pseudonym;
  sub.form_oid = form_oid;
  sub.event_oid = sched->event_oid;
  sub.submitted_at = clock_().to_string();

  std::vector<std::string> edit_inputs{prepared.form_artifact};
  if (!config_.prepopulate) {
    // Without pre-loading the clinician works from the protocol's blank form.
    edit_inputs.push_back(proto.artifact_id);
    edit_inputs.push_back(s.screen_artifact);
  }
  std::vector<provenance::OutputSpec> edits;
  for (const auto& [item, v] : values) {
    const auto* def = form->find_item(item);
    if (!def) throw Error(Errc::UnknownItem, item + " is not on " + form_oid);
    if (!v.empty() && !odm::value_matches(def->data_type, v)) {
      throw Error(Errc::TypeMismatch, item + "='" + v + "' is not " + std::string(odm::to_string(def->data_type)));
    }
  }
  for (const auto& g : form->item_groups) {
    for (const auto& item : g.items) {
      auto pre = prepared.prefilled.find(item.oid);
      auto given = values.find(item.oid);
      bool has_value = given != values.end() && !given->second.empty();
      if (pre != prepared.prefilled.end()) {
        edit_inputs.push_back(pre->second.artifact_id);
        if (!has_value || given->second == pre->second.value) {
          sub.field_values.push_back({item.oid, pre->second.value, pre->second.unit, odm::Origin::Prepopulated, std::nullopt});
        } else {
          sub.field_values.push_back({item.oid, given->second, std::nullopt, odm::Origin::Edited, pre->second.value});
          edits.push_back({provenance::field_digest(item.oid, given->second), "field " + item.oid});
        }
      } else if (has_value) {
        sub.field_values.push_back({item.oid, given->second, std::nullopt, odm::Origin::Manual, std::nullopt});
        edits.push_back({provenance::field_digest(item.oid, given->second), "field " + item.oid});
      }
    }
  }
  edit_inputs.erase(std::remove(edit_inputs.begin(), edit_inputs.end(), std::string()), edit_inputs.end());

  SubmissionReceipt receipt;
  receipt.submission_id = stable_uuid("submission|" + config_.practice_id + "|" + pseudonym + "|" + form_oid);
  receipt.pseudonym = pseudonym;
  receipt.form_oid = form_oid;
  sub.provenance_ref = receipt.submission_id;
  auto document = odm::attach_clinical_data(proto.bundle, sub);
  receipt.document_digest = sha256_hex(document);

  std::string agent = role == AgentRole::Patient ? "patient" : "clinician:" + config_.practice_id;
  std::string note = form_oid;
  if (!config_.prepopulate) note += " absent:Prepopulate(basic eCRF, no pre-loading)";
  nlohmann::json completed = nlohmann::json::object();
  for (const auto& f : sub.field_values) completed[f.item_oid] = f.value;
  edits.insert(edits.begin(), provenance::OutputSpec{sha256_hex(completed.dump()), "completed " + form_oid});
  auto edit = provenance_.record_activity(ProcessKind::Edit, edit_inputs, edits, agent, note);
  // The document is assembled from the completed form and each entered field.
  auto submit = provenance_.record_activity(ProcessKind::Submit, edit.outputs,
                                            {{receipt.document_digest, "clinical data " + form_oid}},
                                            "dnc:" + config_.practice_id, receipt.submission_id);
  save_provenance_locked();
  (void)submit;

  OutboxEntry to_tss{receipt.submission_id + "/tss", "submission",
                     {{"submission_id", receipt.submission_id}, {"document", document}}};
  if (outbox_.empty()) {
    bool delivered = false;
    try {
      auto req = net::Request::post("/clinical-data", document, "application/xml");
      req.with_header("idempotency-key", receipt.submission_id);
      auto resp = call(config_.tss_target, std::move(req));
      if (resp.ok()) {
        receipt.tss_receipt_id = resp.json().at("receipt_id").get<std::string>();
        receipt.status = SubmissionStatus::Accepted;
        delivered = true;
      } else if (resp.status < 500) {
        std::string detail = resp.body;
        try {
          detail = resp.json().value("error", "") + ": " + resp.json().value("message", "");
        } catch (const nlohmann::json::exception&) {
        }
        throw Error(Errc::TssRejection, detail);
      }
    } catch (const Error& e) {
      if (e.code() != Errc::TransportError) throw;
    }
    if (!delivered) {
      degraded_ = true;
      enqueue_locked(to_tss);
    }
  } else {
    enqueue_locked(to_tss);
  }

  submissions_[receipt.submission_id] = receipt;
  nlohmann::json artefact{{"submission_id", receipt.submission_id},
                          {"form_oid", form_oid},
                          {"odm", document},
                          {"html", prepared.html}};
  OutboxEntry to_ehr{receipt.submission_id + "/ehr", "artefact",
                     {{"submission_id", receipt.submission_id},
                      {"patient", s.patient_native_id},
                      {"body", artefact.dump()}}};
  send_or_queue_locked(to_ehr);
  receipt = submissions_.at(receipt.submission_id);
  journal_.append({{"type", "submission"}, {"receipt", to_json(receipt)}});

  set_subject_locked(next);
  prepared_.erase(pit);
  journal_.append({{"type", "consumed"}, {"pseudonym", pseudonym}, {"form", form_oid}});
  return receipt;
}

std::vector<Alert> DataNodeConnector::alerts(bool pending_only) const {
  std::lock_guard lock(mutex_);
  std::vector<Alert> out;
  for (const auto& [id, a] : alerts_) {
    if (!pending_only || a.pending) out.push_back(a);
  }
  return out;
}

void DataNodeConnector::dismiss_alert(const std::string& alert_id) {
  std::lock_guard lock(mutex_);
  auto it = alerts_.find(alert_id);
  if (it == alerts_.end()) throw Error(Errc::InvalidArgument, "no alert " + alert_id);
  auto& a = it->second;
  if (!a.pending) return;
  a.pending = false;
  a.resolution = "dismissed";
  journal_.append({{"type", "alert"},
                   {"alert",
                    {{"id", a.alert_id}, {"pseudonym", a.pseudonym}, {"study", a.study_oid}, {"name", a.study_name},
                     {"fired_at", a.fired_at}, {"pending", false}, {"resolution", a.resolution}}}});
}

SubjectState DataNodeConnector::subject(const std::string& pseudonym) const {
  std::lock_guard lock(mutex_);
  auto it = subjects_.find(pseudonym);
  if (it == subjects_.end()) throw Error(Errc::UnknownSubject, pseudonym);
  return it->second;
}

std::vector<SubjectState> DataNodeConnector::subjects() const {
  std::lock_guard lock(mutex_);
  std::vector<SubjectState> out;
  for (const auto& [p, s] : subjects_) out.push_back(s);
  return out;
}

std::vector<SubmissionReceipt> DataNodeConnector::submissions() const {
  std::lock_guard lock(mutex_);
  std::vector<SubmissionReceipt> out;
  for (const auto& [id, r] : submissions_) out.push_back(r);
  return out;
}

void DataNodeConnector::replay() {
  std::map<std::string, OutboxEntry> queued;
  std::vector<std::string> order;
  journal_.replay([&](const nlohmann::json& j) {
    auto type = j.at("type").get<std::string>();
    if (type == "cursor") {
      cursor_ = j.at("cursor").get<long>();
      registered_ = j.value("registered", registered_);
    } else if (type == "protocol") {
      CachedProtocol cp;
      cp.xml = j.at("xml").get<std::string>();
      cp.bundle = odm::parse_study_bundle(cp.xml);
      cp.version = j.at("version").get<int>();
      cp.artifact_id = j.at("artifact").get<std::string>();
      protocols_[j.at("study_oid").get<std::string>()] = std::move(cp);
    } else if (type == "retired") {
      protocols_.erase(j.at("study_oid").get<std::string>());
    } else if (type == "subject") {
      auto s = subject_from_json(j.at("state"));
      subjects_[s.pseudonym] = s;
    } else if (type == "alert") {
      const auto& a = j.at("alert");
      Alert al{a.at("id"), a.at("pseudonym"), a.at("study"), a.value("name", ""), a.value("fired_at", ""),
               a.value("pending", true), a.value("resolution", "")};
      alerted_.insert(al.pseudonym + "|" + al.study_oid);
      alerts_[al.alert_id] = al;
    } else if (type == "prepared") {
      PreparedForm p;
      p.pseudonym = j.at("pseudonym");
      p.study_oid = j.at("study");
      p.form_oid = j.at("form");
      p.html = j.at("html");
      p.odm_container = j.at("odm");
      for (const auto& [item, f] : j.at("prefilled").items()) {
        PreparedField pf{f.at("value"), std::nullopt, f.value("artifact", "")};
        if (f.contains("unit")) pf.unit = f["unit"].get<std::string>();
        p.prefilled[item] = pf;
      }
      p.manual_required = j.at("manual").get<std::map<std::string, std::string>>();
      p.form_artifact = j.at("artifact");
      prepared_[subject_form_key(p.pseudonym, p.form_oid)] = p;
    } else if (type == "consumed") {
      prepared_.erase(subject_form_key(j.at("pseudonym"), j.at("form")));
    } else if (type == "submission") {
      auto r = submission_receipt_from_json(j.at("receipt"));
      submissions_[r.submission_id] = r;
    } else if (type == "outbox") {
      OutboxEntry e{j.at("id"), j.at("kind"), j.at("payload")};
      order.push_back(e.id);
      queued[e.id] = e;
    } else if (type == "delivered") {
      queued.erase(j.at("id").get<std::string>());
    }
  });
  for (const auto& id : order) {
    if (auto it = queued.find(id); it != queued.end()) outbox_.push_back(it->second);
  }
  for (const auto& id : order) {
    if (id.rfind("OB-", 0) != 0) continue;
    outbox_seq_ = std::max<std::size_t>(outbox_seq_, std::strtoull(id.c_str() + 3, nullptr, 10));
  }
}

void DataNodeConnector::build_router() {
  router_.add("GET", "/alerts", [this](const net::Request&) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& a : alerts()) {
      list.push_back({{"alert_id", a.alert_id},
                      {"pseudonym", a.pseudonym},
                      {"study_oid", a.study_oid},
                      {"study_name", a.study_name},
                      {"fired_at", a.fired_at},
                      {"actions", {"OpenEligibilityForm", "Dismiss"}}});
    }
    return net::Response::json({{"alerts", list}, {"degraded", degraded()}});
  });
  router_.add("POST", "/alerts/{id}/dismiss", [this](const net::Request& r) {
    dismiss_alert(r.param("id"));
    return net::Response::json({{"ok", true}});
  });
  router_.add("POST", "/consent/{pseudonym}", [this](const net::Request& r) {
    return net::Response::json(to_json(consent(r.param("pseudonym"))));
  });
  router_.add("GET", "/subjects/{pseudonym}", [this](const net::Request& r) {
    return net::Response::json(to_json(subject(r.param("pseudonym"))));
  });
  router_.add("GET", "/forms/{pseudonym}/{form}", [this](const net::Request& r) {
    auto p = prepare_form(r.param("pseudonym"), r.param("form"));
    return net::Response::json({{"html", p.html}, {"odm", p.odm_container}});
  });
  router_.add("POST", "/forms/{pseudonym}/{form}", [this](const net::Request& r) {
    auto body = nlohmann::json::parse(r.body);
    auto values = body.value("values", std::map<std::string, std::string>{});
    auto role = body.value("role", "clinician") == "patient" ? AgentRole::Patient : AgentRole::Clinician;
    auto receipt = submit_form(r.param("pseudonym"), r.param("form"), values, role);
    return net::Response::json(to_json(receipt), 201);
  });
}

}  // namespace esource::dnc
