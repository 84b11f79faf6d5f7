// Operational qualification: ten scripted process scenarios over the
// four-practice deployment, each checked at the study system, the connector,
// the EHR and the provenance record.
#include <gtest/gtest.h>

#include <algorithm>

#include "esource/desk/deployment.hpp"
#include "esource/error.hpp"
#include "esource/odm/odm.hpp"
#include "testing.hpp"

namespace esource {
namespace {

using dnc::WorkflowState;

class Scenario : public ::testing::Test {
 protected:
  testing::StudyWorld world;
  desk::Deployment& d() { return world.deployment(); }

  odm::ClinicalDataSubmission stored(const tss::Receipt& r) {
    return odm::parse_clinical_data(d().tss().stored_document(r.receipt_id));
  }
  tss::Receipt receipt_for(const std::string& pseudonym, const std::string& form) {
    for (const auto& r : d().tss().receipts()) {
      if (r.subject_key == pseudonym && r.form_oid == form) return r;
    }
    throw Error(Errc::UnknownArtefact, pseudonym + " " + form);
  }
  bool verifies(const tss::Receipt& r) {
    auto g = d().combined_provenance();
    return provenance::verify_submission_chain(g, r.stored_artifact_id, d().tss().stored_document(r.receipt_id)).ok;
  }
  void expect_invariants() {
    for (const auto& c : desk::check_invariants(d())) EXPECT_TRUE(c.ok) << c.name << ": " << c.detail;
  }
};

TEST_F(Scenario, S01_ProtocolPublishedAndPulledByEveryPractice) {
  for (auto& s : d().sites()) {
    EXPECT_EQ(s.dnc->cached_studies(), std::vector<std::string>{world.study()}) << s.spec.practice_id;
    EXPECT_EQ(s.dnc->cursor(), d().tss().head());
    EXPECT_EQ(s.dnc->sync_protocols().received, 0u) << "nothing new on a second pull";
  }
  auto bundle = d().site("GR-1").dnc->cached_bundle(world.study());
  EXPECT_TRUE(bundle.find_form("F.CROM1"));
  EXPECT_TRUE(bundle.find_form("F.PROM2"));
  expect_invariants();
}

TEST_F(Scenario, S02_EligiblePatientRaisesOneAlert) {
  auto p = world.find_eligible("UK-1");
  auto alerts = d().site("UK-1").dnc->alerts();
  ASSERT_EQ(alerts.size(), 1u);
  EXPECT_EQ(alerts[0].pseudonym, p);
  EXPECT_EQ(alerts[0].study_oid, world.study());
  // The study system learns of the flag but never sees a record.
  auto log = d().tss().recruitment_log();
  ASSERT_EQ(log.events().size(), 1u);
  EXPECT_EQ(log.events()[0].kind, analytics::EventKind::Flagged);
  expect_invariants();
}

TEST_F(Scenario, S03_ConsentRandomizesAndReports) {
  auto a = world.enrol("PL-1");
  auto b = world.enrol("GR-1");
  EXPECT_EQ(d().site("PL-1").dnc->subject(a).workflow, WorkflowState::Randomized);
  EXPECT_EQ(d().site("GR-1").dnc->subject(b).workflow, WorkflowState::Randomized);
  auto workbench = d().network().client("workbench");
  auto report = workbench->send("tss", net::Request::get("/reports/recruitment")).json();
  EXPECT_EQ(report.at("grand_total"), 2);
  EXPECT_EQ(report.at("countries").at("Poland").at("T"), 1);
  EXPECT_EQ(report.at("countries").at("Greece").at("C"), 1);
  expect_invariants();
}

TEST_F(Scenario, S04_PrepopulatedBaselineStoredAndWrittenBack) {
  auto p = world.enrol("PL-1");
  auto prepared = d().site("PL-1").dnc->prepare_form(p, "F.CROM1");
  EXPECT_FALSE(prepared.prefilled.empty());
  auto receipt = world.submit("PL-1", p, "F.CROM1");
  ASSERT_EQ(receipt.status, dnc::SubmissionStatus::Accepted);
  ASSERT_TRUE(receipt.artefact_id);

  auto r = receipt_for(p, "F.CROM1");
  auto doc = stored(r);
  auto prepopulated = std::count_if(doc.field_values.begin(), doc.field_values.end(),
                                    [](const auto& f) { return f.origin == odm::Origin::Prepopulated; });
  EXPECT_EQ(static_cast<std::size_t>(prepopulated), prepared.prefilled.size());

  auto& ehr = *d().site("PL-1").ehr;
  auto native = d().site("PL-1").dnc->subject(p).patient_native_id;
  EXPECT_EQ(ehr.list_artefacts(native), std::vector<std::string>{*receipt.artefact_id});
  auto artefact = nlohmann::json::parse(ehr.fetch_artefact(*receipt.artefact_id).payload);
  EXPECT_EQ(artefact.at("odm").get<std::string>(), d().tss().stored_document(r.receipt_id));
  EXPECT_TRUE(verifies(r));
  expect_invariants();
}

TEST_F(Scenario, S05_ControlPracticeUsesTheBasicForm) {
  auto p = world.enrol("GR-1");
  auto prepared = d().site("GR-1").dnc->prepare_form(p, "F.CROM1");
  EXPECT_TRUE(prepared.prefilled.empty());
  world.submit("GR-1", p, "F.CROM1");
  auto r = receipt_for(p, "F.CROM1");
  for (const auto& f : stored(r).field_values) EXPECT_EQ(f.origin, odm::Origin::Manual) << f.item_oid;
  auto lineage = d().combined_provenance().lineage_of(r.stored_artifact_id);
  EXPECT_FALSE(lineage.has_process(provenance::ProcessKind::Prepopulate));
  EXPECT_TRUE(verifies(r)) << "the skipped step is documented";
  expect_invariants();
}

TEST_F(Scenario, S06_ClinicianCorrectsPreloadedValue) {
  auto p = world.enrol("UK-1");
  world.submit("UK-1", p, "F.CROM1", 1.0);
  auto r = receipt_for(p, "F.CROM1");
  auto doc = stored(r);
  auto edited = std::find_if(doc.field_values.begin(), doc.field_values.end(),
                             [](const auto& f) { return f.origin == odm::Origin::Edited; });
  ASSERT_NE(edited, doc.field_values.end());
  ASSERT_TRUE(edited->prepopulated_value);
  EXPECT_NE(edited->value, *edited->prepopulated_value);
  EXPECT_TRUE(verifies(r));
  expect_invariants();
}

TEST_F(Scenario, S07_PatientReportedOutcomesInSequence) {
  auto p = world.enrol("PL-1");
  try {
    world.submit("PL-1", p, "F.PROM2", 0, provenance::AgentRole::Patient);
    ADD_FAILURE() << "PROM2 accepted before PROM1";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::WrongWorkflowState);
  }
  world.submit("PL-1", p, "F.PROM1", 0, provenance::AgentRole::Patient);
  world.submit("PL-1", p, "F.PROM2", 0, provenance::AgentRole::Patient);
  EXPECT_EQ(d().site("PL-1").dnc->subject(p).prom, dnc::PromState::Prom2Done);
  auto g = d().combined_provenance();
  auto lineage = g.lineage_of(receipt_for(p, "F.PROM2").stored_artifact_id);
  bool patient_agent = std::any_of(lineage.agents.begin(), lineage.agents.end(),
                                   [](const auto& a) { return a.second.role == provenance::AgentRole::Patient; });
  EXPECT_TRUE(patient_agent);
  expect_invariants();
}

TEST_F(Scenario, S08_FollowUpCompletesTheSubject) {
  auto p = world.enrol("GR-1");
  for (const auto* f : {"F.CROM1", "F.PROM1", "F.CROM2", "F.PROM2"}) world.submit("GR-1", p, f);
  EXPECT_EQ(d().site("GR-1").dnc->subject(p).workflow, WorkflowState::Completed);
  auto c = analytics::completion_rates(d().tss().recruitment_log());
  EXPECT_EQ(c.crom_c.completed, 1);
  EXPECT_EQ(c.prom_c.completed, 1);
  for (const auto& r : d().tss().receipts()) EXPECT_TRUE(verifies(r)) << r.form_oid;
  expect_invariants();
}

TEST_F(Scenario, S09_StudySystemOutageIsBridged) {
  auto p = world.find_eligible("PL-1");
  d().set_tss_reachable(false);
  d().site("PL-1").dnc->consent(p);
  auto q = world.enrol("UK-1");
  EXPECT_EQ(d().site("UK-1").dnc->subject(q).workflow, WorkflowState::Consented);
  d().set_tss_reachable(true);
  for (auto& s : d().sites()) s.dnc->sync_protocols();
  EXPECT_EQ(d().site("PL-1").dnc->subject(p).workflow, WorkflowState::Randomized);
  world.submit("PL-1", p, "F.CROM1");

  d().set_tss_reachable(false);
  world.submit("UK-1", q, "F.CROM1");
  d().set_tss_reachable(true);
  d().site("UK-1").dnc->sync_protocols();
  d().site("UK-1").dnc->sync_protocols();
  EXPECT_EQ(d().tss().receipts().size(), 2u) << "no duplicate ingest after retries";
  expect_invariants();
}

TEST_F(Scenario, S10_ClosedStudyIsRetiredEverywhere) {
  auto p = world.enrol("PL-1");
  auto workbench = d().network().client("workbench");
  ASSERT_TRUE(workbench->send("tss", net::Request::post("/studies/" + world.study() + "/close", "")).ok());
  for (auto& s : d().sites()) {
    auto sync = s.dnc->sync_protocols();
    EXPECT_EQ(sync.retired, 1u);
    EXPECT_TRUE(s.dnc->cached_studies().empty());
  }
  ehr::EncounterEvent e{"asseco", "1", d().clock().now(), "PL-1"};
  try {
    d().site("PL-1").dnc->screen_encounter(e);
    ADD_FAILURE() << "screened against a closed study";
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), Errc::NoActiveProtocol);
  }
  EXPECT_THROW(world.submit("PL-1", p, "F.CROM1"), Error);
  expect_invariants();
}

}  // namespace
}  // namespace esource
