#include "esource/desk/deployment.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "esource/cdim/catalog.hpp"
#include "esource/cdim/source_model.hpp"
#include "esource/cdim/terminology.hpp"
#include "esource/error.hpp"
#include "esource/odm/odm.hpp"
#include "esource/util/file.hpp"
#include "esource/util/rng.hpp"

namespace esource::desk {

using analytics::Arm;

std::vector<SiteSpec> default_sites() {
  return {
      {"PL-1", "Poland", "asseco", Arm::T, "P1"},
      {"UK-1", "UK", "vision", Arm::T, "P2"},
      {"PL-2", "Poland", "asseco", Arm::C, "P1"},
      {"GR-1", "Greece", "transhis", Arm::C, "P2"},
  };
}

Deployment::Deployment(DeploymentConfig config)
    : config_(std::move(config)), clock_(Instant::at(config_.start, 7, 0)) {
  if (config_.sites.empty()) throw Error(Errc::InvalidConfig, "a deployment needs at least one site");
  if (config_.study_file.empty()) config_.study_file = (cdim::resource_dir() / "odm" / "gord_study.xml").string();

  ehr::PopulationConfig pc;
  pc.size = config_.population;
  pc.seed = config_.seed;
  pc.reference_date = config_.start;
  pc.practices.clear();
  for (const auto& s : config_.sites) pc.practices.push_back(s.practice_id);
  population_ = std::make_shared<const ehr::Population>(ehr::seed_population(pc));

  auto dir = [&](const std::string& name) -> std::optional<std::filesystem::path> {
    if (!config_.data_dir) return std::nullopt;
    return *config_.data_dir / name;
  };

  tss::TssConfig tc;
  tc.data_dir = dir("tss");
  tc.seed = config_.seed;
  tss_ = std::make_unique<tss::StudySystem>(tc, clock_.clock());
  network_.attach("tss", &tss_->router());

  const auto& registry = cdim::SourceRegistry::builtin();
  for (const auto& spec : config_.sites) {
    Site site;
    site.spec = spec;
    const auto& model = registry.get(spec.source_id);
    site.ehr = std::make_unique<ehr::EhrSystem>(population_, model, cdim::TerminologyMap::builtin(),
                                                dir("ehr-" + spec.practice_id), clock_.clock());
    site.ehr->register_practice(spec.practice_id);

    dnc::DncConfig dc;
    dc.practice_id = spec.practice_id;
    dc.source_id = spec.source_id;
    dc.site_key = "key-" + spec.practice_id;
    dc.country = spec.country;
    dc.arm = spec.arm;
    dc.pair_id = spec.pair_id;
    dc.tss_target = "tss";
    dc.ehr_target = site.ehr_name();
    dc.data_dir = dir("dnc-" + spec.practice_id);
    // Control practices run the basic eCRF: no pop-ups, nothing pre-loaded.
    dc.alerts = spec.arm == Arm::T;
    dc.prepopulate = spec.arm == Arm::T;
    site.dnc = std::make_unique<dnc::DataNodeConnector>(dc, network_.client(site.dnc_name()), model,
                                                        cdim::Catalog::builtin(), cdim::TerminologyMap::builtin(),
                                                        clock_.clock());
    sites_.push_back(std::move(site));
  }
  for (auto& s : sites_) {
    network_.attach(s.ehr_name(), &s.ehr->router());
    network_.attach(s.dnc_name(), &s.dnc->router());
  }
}

Site& Deployment::site(const std::string& practice_id) {
  for (auto& s : sites_) {
    if (s.spec.practice_id == practice_id) return s;
  }
  throw Error(Errc::UnknownPractice, practice_id);
}

std::string Deployment::publish_study() {
  auto workbench = network_.client("workbench");
  auto resp = workbench->send("tss", net::Request::post("/studies", read_file(config_.study_file), "application/xml"));
  net::raise_for_status(resp);
  auto oid = resp.json().at("study_oid").get<std::string>();
  net::raise_for_status(workbench->send("tss", net::Request::post("/studies/" + net::url_encode(oid) + "/activate", "")));
  return oid;
}

void Deployment::set_tss_reachable(bool reachable) { network_.set_reachable("tss", reachable); }

provenance::ProvenanceGraph Deployment::combined_provenance() const {
  provenance::ProvenanceGraph g("desk");
  // Connector graphs first: the study system's received artifacts are roots
  // that join onto the connectors' Submit outputs.
  for (const auto& s : sites_) g.stitch(s.dnc->provenance());
  g.stitch(tss_->provenance());
  return g;
}

namespace {

std::string manual_value(const odm::ItemDef& item, Rng& rng, Date today) {
  switch (item.data_type) {
    case odm::DataType::Integer: return std::to_string(rng.range(0, 5));
    case odm::DataType::Float: return std::to_string(rng.range(50, 110)) + ".0";
    case odm::DataType::Date: return format_iso_date(today);
    case odm::DataType::DateTime: return format_iso_date(today) + "T12:00";
    case odm::DataType::Coded: return "";
    case odm::DataType::Text: return rng.bernoulli(0.5) ? "yes" : "no";
  }
  return "";
}

}  // namespace

std::map<std::string, std::string> complete_form(const odm::FormDef& form, const dnc::PreparedForm& prepared,
                                                 Rng& rng, Date today, double edit_probability) {
  std::map<std::string, std::string> values;
  for (const auto& g : form.item_groups) {
    for (const auto& item : g.items) {
      auto pre = prepared.prefilled.find(item.oid);
      if (pre == prepared.prefilled.end()) {
        // Unfilled fields from a query group stay blank unless required.
        if (g.query_id && !item.mandatory) continue;
        auto v = manual_value(item, rng, today);
        if (!v.empty()) values[item.oid] = v;
      } else if (item.data_type == odm::DataType::Float && item.unit_item_ref && rng.bernoulli(edit_probability)) {
        values[item.oid] = std::to_string(std::stod(pre->second.value) + 1.0).substr(0, 5);
      }
    }
  }
  return values;
}

bool DeskReport::all_green() const {
  return std::all_of(invariants.begin(), invariants.end(), [](const InvariantCheck& c) { return c.ok; });
}

std::string DeskReport::summary() const {
  std::ostringstream out;
  out << "clinic days: " << clinic_days << "\n"
      << "encounters screened: " << encounters << "\n"
      << "eligible: " << eligible << ", alerts: " << alerts << ", consented: " << consented << "\n"
      << "submissions: " << submissions << ", provenance verified: " << verified << "\n"
      << "network exchanges: " << trace_entries << "\n\n"
      << analytics::format_table(table) << "\n";
  for (const auto& c : invariants) {
    out << (c.ok ? "[ok]   " : "[FAIL] ") << c.name;
    if (!c.detail.empty()) out << ": " << c.detail;
    out << "\n";
  }
  return out.str();
}

std::vector<InvariantCheck> check_invariants(Deployment& d) {
  std::vector<InvariantCheck> out;
  auto trace = d.network().trace();

  {
    InvariantCheck c{"pull-only communication", true, ""};
    std::size_t bad = 0;
    for (const auto& t : trace) {
      bool from_server = t.from == "tss" || t.from.rfind("ehr:", 0) == 0;
      bool to_dnc = t.to.rfind("dnc:", 0) == 0;
      if (from_server || (to_dnc && t.from != "console")) ++bad;
    }
    c.ok = bad == 0;
    c.detail = std::to_string(trace.size()) + " exchanges, " + std::to_string(bad) + " not initiated by a connector";
    out.push_back(c);
  }
  {
    InvariantCheck c{"patient records stay local", true, ""};
    std::size_t leaked = 0;
    std::vector<std::string> roots;
    for (const auto& s : d.sites()) roots.push_back("<" + s.ehr->model().record_root());
    for (const auto& t : trace) {
      if (t.to != "tss") continue;
      for (const auto& r : roots) {
        if (t.request_body.find(r) != std::string::npos) ++leaked;
      }
    }
    c.ok = leaked == 0;
    c.detail = std::to_string(leaked) + " requests to the study system carried record XML";
    out.push_back(c);
  }
  {
    InvariantCheck c{"randomization balance", true, ""};
    for (const auto& s : d.sites()) {
      int diff = 0;
      for (const auto& a : d.tss().assignments(s.spec.practice_id)) {
        diff += a.arm == Arm::T ? 1 : -1;
        if (std::abs(diff) > 2) {
          c.ok = false;
          c.detail = s.spec.practice_id + " prefix imbalance at slot " + std::to_string(a.slot_index);
        }
      }
    }
    out.push_back(c);
  }
  {
    InvariantCheck c{"workflow order", true, ""};
    auto bad = analytics::order_violations(d.tss().recruitment_log());
    c.ok = bad.empty();
    c.detail = std::to_string(bad.size()) + " subjects out of order";
    out.push_back(c);
  }
  {
    InvariantCheck c{"alert uniqueness", true, ""};
    for (const auto& s : d.sites()) {
      std::set<std::string> seen;
      for (const auto& a : s.dnc->alerts(false)) {
        if (!seen.insert(a.pseudonym + "|" + a.study_oid).second) {
          c.ok = false;
          c.detail = "duplicate alert for " + a.pseudonym;
        }
      }
    }
    out.push_back(c);
  }
  {
    InvariantCheck c{"outboxes drained", true, ""};
    std::size_t pending = 0;
    for (const auto& s : d.sites()) {
      pending += s.dnc->outbox_size();
      for (const auto& r : s.dnc->submissions()) {
        if (r.status != dnc::SubmissionStatus::Accepted || !r.artefact_id) ++pending;
      }
    }
    c.ok = pending == 0;
    c.detail = std::to_string(pending) + " undelivered";
    out.push_back(c);
  }
  {
    InvariantCheck c{"stores agree", true, ""};
    std::set<std::string> tss_subjects_forms;
    for (const auto& r : d.tss().receipts()) tss_subjects_forms.insert(r.subject_key + "|" + r.form_oid);
    std::size_t dnc_count = 0, missing = 0;
    for (auto& s : d.sites()) {
      for (const auto& r : s.dnc->submissions()) {
        ++dnc_count;
        if (!tss_subjects_forms.count(r.pseudonym + "|" + r.form_oid)) ++missing;
        if (r.artefact_id) {
          try {
            s.ehr->fetch_artefact(*r.artefact_id);
          } catch (const Error&) {
            ++missing;
          }
        }
      }
    }
    c.ok = missing == 0 && dnc_count == tss_subjects_forms.size();
    c.detail = std::to_string(dnc_count) + " connector submissions, " + std::to_string(tss_subjects_forms.size()) +
               " stored centrally, " + std::to_string(missing) + " missing";
    out.push_back(c);
  }
  {
    InvariantCheck c{"provenance verifies", true, ""};
    auto g = d.combined_provenance();
    std::size_t ok = 0, total = 0;
    for (const auto& r : d.tss().receipts()) {
      ++total;
      auto v = provenance::verify_submission_chain(g, r.stored_artifact_id, d.tss().stored_document(r.receipt_id));
      if (v.ok) {
        ++ok;
      } else if (c.detail.empty()) {
        c.detail = r.receipt_id + ": " + v.findings.front().detail + "; ";
      }
    }
    c.ok = ok == total && g.acyclic();
    c.detail += std::to_string(ok) + "/" + std::to_string(total) + " submissions verified";
    out.push_back(c);
  }
  return out;
}

DeskReport run_desk(const DeskConfig& config) {
  Deployment d(config.deployment);
  return run_desk(d, config);
}

DeskReport run_desk(Deployment& d, const DeskConfig& config) {
  auto started = std::chrono::steady_clock::now();
  const auto& b = config.behaviour;
  DeskReport report;
  auto study = d.publish_study();

  struct Followup {
    std::string practice;
    std::string pseudonym;
    int due_day;
  };
  std::vector<Followup> followups;
  auto rng_for = [&](std::string_view label, const std::string& key) {
    return Rng(derive_seed(d.config().seed, std::string(label) + "|" + key));
  };

  auto submit = [&](Site& site, const std::string& pseudonym, const std::string& form_oid, provenance::AgentRole role,
                    Date today) {
    auto bundle = site.dnc->cached_bundle(study);
    auto prepared = site.dnc->prepare_form(pseudonym, form_oid);
    auto rng = rng_for("values", pseudonym + form_oid);
    auto values = complete_form(*bundle.find_form(form_oid), prepared, rng, today, b.edit_prefilled);
    site.dnc->submit_form(pseudonym, form_oid, values, role);
    ++report.submissions;
  };

  // Baseline CROM1, and PROM1 for those who take part, once randomized.
  auto baseline = [&](Site& site, int day, Date today) {
    for (const auto& s : site.dnc->subjects()) {
      if (s.workflow != dnc::WorkflowState::Randomized) continue;
      submit(site, s.pseudonym, "F.CROM1", provenance::AgentRole::Clinician, today);
      auto rng = rng_for("prom", s.pseudonym);
      if (rng.bernoulli(b.prom1)) submit(site, s.pseudonym, "F.PROM1", provenance::AgentRole::Patient, today);
      followups.push_back({site.spec.practice_id, s.pseudonym, day + b.followup_after_days});
    }
  };

  Date today = d.config().start;
  for (int day = 0; day < config.clinic_days; ++day) {
    while (is_weekend(today)) today += std::chrono::days(1);
    bool outage = config.tss_outage_day && *config.tss_outage_day == day;
    d.set_tss_reachable(!outage);

    for (auto& site : d.sites()) {
      d.clock().set(Instant::at(today, 7, 30));
      site.dnc->sync_protocols();
      baseline(site, day, today);  // subjects whose randomization was held up by an outage

      auto encounters = site.dnc->poll_clinic_day(today, derive_seed(d.config().seed, "clinic"));
      for (const auto& e : encounters) {
        d.clock().set(e.encounter_instant);
        ++report.encounters;
        auto outcome = site.dnc->screen_encounter(e, study);
        if (outcome.verdict != dnc::Verdict::Eligible) continue;
        ++report.eligible;
        if (outcome.alert_id) ++report.alerts;
        auto rng = rng_for("consent", outcome.pseudonym);
        if (!rng.bernoulli(b.consent)) {
          if (outcome.alert_id) site.dnc->dismiss_alert(*outcome.alert_id);
          continue;
        }
        site.dnc->consent(outcome.pseudonym);
        ++report.consented;
        baseline(site, day, today);
      }

      d.clock().set(Instant::at(today, 17, 30));
      for (const auto& f : followups) {
        if (f.practice != site.spec.practice_id || f.due_day != day) continue;
        auto s = site.dnc->subject(f.pseudonym);
        auto rng = rng_for("followup", f.pseudonym);
        if (s.workflow == dnc::WorkflowState::Crom1Done && rng.bernoulli(b.crom2)) {
          submit(site, f.pseudonym, "F.CROM2", provenance::AgentRole::Clinician, today);
        }
        if (s.prom == dnc::PromState::Prom1Done && rng.bernoulli(b.prom2)) {
          submit(site, f.pseudonym, "F.PROM2", provenance::AgentRole::Patient, today);
        }
      }
      site.dnc->sync_protocols();
    }
    today += std::chrono::days(1);
  }

  d.set_tss_reachable(true);
  for (auto& site : d.sites()) {
    site.dnc->sync_protocols();
    baseline(site, config.clinic_days, today);
    site.dnc->sync_protocols();
  }

  report.clinic_days = config.clinic_days;
  report.invariants = check_invariants(d);
  report.trace_entries = d.network().trace().size();
  auto g = d.combined_provenance();
  for (const auto& r : d.tss().receipts()) {
    if (provenance::verify_submission_chain(g, r.stored_artifact_id, d.tss().stored_document(r.receipt_id)).ok) {
      ++report.verified;
    }
  }
  report.table = analytics::tabulate_recruitment(d.tss().recruitment_log());
  report.recruitment_report = d.tss().recruitment_report();
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace esource::desk
