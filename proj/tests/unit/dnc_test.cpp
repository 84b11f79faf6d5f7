#include <gtest/gtest.h>

#include <set>

#include "esource/cdim/source_model.hpp"
#include "esource/dnc/connector.hpp"
#include "esource/error.hpp"
#include "esource/util/rng.hpp"
#include "testing.hpp"

namespace esource::dnc {
namespace {

using odm::Stage;

constexpr Stage kStages[] = {Stage::Crom1, Stage::Crom2, Stage::Prom1, Stage::Prom2};

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::InvalidArgument;
}

// Reference rules written from the schedule: each CROM/PROM pair in order,
// PROM1 no earlier than the offset after randomization, nothing twice.
struct OrderOracle {
  std::set<Stage> done;
  Date randomized_on;
  int offset = 0;
  bool permitted(Stage s, Date today) const {
    if (done.count(s)) return false;
    switch (s) {
      case Stage::Crom1: return true;
      case Stage::Crom2: return done.count(Stage::Crom1) > 0;
      case Stage::Prom1: return today >= randomized_on + std::chrono::days(offset);
      case Stage::Prom2: return done.count(Stage::Prom1) > 0;
    }
    return false;
  }
};

SubjectState randomized_subject(Date on) {
  SubjectState s;
  s.pseudonym = "p";
  s.study_oid = "S";
  s.workflow = WorkflowState::Randomized;
  s.arm = analytics::Arm::T;
  s.randomized_on = on;
  return s;
}

TEST(Workflow, RandomSequencesMatchTheOrderRules) {
  Rng rng(1234);
  const Date start = make_date(2016, 3, 7);
  int completed = 0, rejected = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    OrderOracle oracle{{}, start, static_cast<int>(rng.range(0, 3))};
    auto s = randomized_subject(start);
    Date today = start;
    for (int step = 0; step < 12; ++step) {
      if (rng.bernoulli(0.2)) today += std::chrono::days(1);
      auto stage = kStages[rng.range(0, 3)];
      bool expect = oracle.permitted(stage, today);
      ASSERT_EQ(stage_permitted(s, stage, today, oracle.offset), expect);
      if (expect) {
        s = after_submission(s, stage, today, oracle.offset);
        oracle.done.insert(stage);
      } else {
        ++rejected;
        auto before = s;
        ASSERT_EQ(code_of([&] { after_submission(s, stage, today, oracle.offset); }), Errc::WrongWorkflowState);
        ASSERT_EQ(s, before);
      }
    }
    bool all = oracle.done.size() == 4;
    ASSERT_EQ(s.workflow == WorkflowState::Completed, all);
    completed += all;
  }
  EXPECT_GT(completed, 100);
  EXPECT_GT(rejected, 1000);
}

TEST(Workflow, EveryInOrderPathCompletes) {
  const Date d = make_date(2016, 3, 7);
  // All interleavings of CROM1<CROM2 with PROM1<PROM2.
  std::vector<Stage> order{Stage::Crom1, Stage::Crom2, Stage::Prom1, Stage::Prom2};
  std::sort(order.begin(), order.end());
  int paths = 0;
  do {
    auto pos = [&](Stage x) { return std::find(order.begin(), order.end(), x) - order.begin(); };
    if (pos(Stage::Crom1) > pos(Stage::Crom2) || pos(Stage::Prom1) > pos(Stage::Prom2)) continue;
    auto s = randomized_subject(d);
    for (auto st : order) s = after_submission(s, st, d, 0);
    EXPECT_EQ(s.workflow, WorkflowState::Completed);
    ++paths;
  } while (std::next_permutation(order.begin(), order.end()));
  EXPECT_EQ(paths, 6);
}

TEST(Workflow, NothingBeforeRandomizationOrAfterWithdrawal) {
  const Date d = make_date(2016, 3, 7);
  for (auto w : {WorkflowState::Flagged, WorkflowState::Consented, WorkflowState::Withdrawn}) {
    auto s = randomized_subject(d);
    s.workflow = w;
    for (auto st : kStages) EXPECT_FALSE(stage_permitted(s, st, d, 0)) << to_string(w);
  }
  SubjectState s;
  s = after_transition(s, WorkflowState::Consented);
  EXPECT_EQ(code_of([&] { after_transition(s, WorkflowState::Consented); }), Errc::WrongWorkflowState);
  s = after_transition(s, WorkflowState::Randomized);
  EXPECT_EQ(code_of([&] { after_transition(s, WorkflowState::Crom1Done); }), Errc::WrongWorkflowState);
  s = after_transition(s, WorkflowState::Withdrawn);
  EXPECT_EQ(code_of([&] { after_transition(s, WorkflowState::Withdrawn); }), Errc::WrongWorkflowState);
  EXPECT_EQ(subject_from_json(to_json(s)), s);
}

// The same rules enforced end to end through prepare/submit on a connector.
TEST(Workflow, ConnectorEnforcesOrderOnRandomAttempts) {
  testing::StudyWorld world;
  Rng rng(99);
  const std::map<Stage, std::string> form{{Stage::Crom1, "F.CROM1"},
                                          {Stage::Crom2, "F.CROM2"},
                                          {Stage::Prom1, "F.PROM1"},
                                          {Stage::Prom2, "F.PROM2"}};
  int completed = 0;
  for (int n = 0; n < 6; ++n) {
    auto p = world.enrol("PL-1");
    OrderOracle oracle{{}, world.deployment().clock().now().day, 0};
    for (int step = 0; step < 14 && oracle.done.size() < 4; ++step) {
      auto stage = kStages[rng.range(0, 3)];
      bool expect = oracle.permitted(stage, world.deployment().clock().now().day);
      if (expect) {
        auto r = world.submit("PL-1", p, form.at(stage));
        EXPECT_EQ(r.status, SubmissionStatus::Accepted);
        oracle.done.insert(stage);
      } else {
        EXPECT_EQ(code_of([&] { world.submit("PL-1", p, form.at(stage)); }), Errc::WrongWorkflowState)
            << form.at(stage);
      }
    }
    completed += world.dnc("PL-1").subject(p).workflow == WorkflowState::Completed;
  }
  EXPECT_GT(completed, 0);
  // The study system holds exactly the accepted documents, all in order.
  EXPECT_TRUE(analytics::order_violations(world.deployment().tss().recruitment_log()).empty());
}

TEST(Screening, AlertOncePerSubjectAndStudy) {
  testing::StudyWorld world;
  auto& dnc = world.dnc("PL-1");
  auto p = world.find_eligible("PL-1");
  auto alerts = dnc.alerts();
  ASSERT_EQ(alerts.size(), 1u);
  EXPECT_EQ(alerts[0].pseudonym, p);
  auto s = dnc.subject(p);
  EXPECT_EQ(s.workflow, WorkflowState::Flagged);

  ehr::EncounterEvent again{"asseco", s.patient_native_id, world.deployment().clock().now(), "PL-1"};
  auto outcome = dnc.screen_encounter(again, world.study());
  EXPECT_EQ(outcome.verdict, Verdict::AlreadyEnrolled);
  EXPECT_FALSE(outcome.alert_id);
  EXPECT_EQ(dnc.alerts(false).size(), 1u);

  dnc.dismiss_alert(alerts[0].alert_id);
  EXPECT_TRUE(dnc.alerts().empty());
  EXPECT_EQ(dnc.alerts(false).at(0).resolution, "dismissed");
  EXPECT_EQ(code_of([&] { dnc.dismiss_alert("AL-none"); }), Errc::InvalidArgument);
}

TEST(Screening, ControlPracticeFlagsWithoutAlerts) {
  testing::StudyWorld world;
  auto p = world.find_eligible("PL-2");
  EXPECT_TRUE(world.dnc("PL-2").alerts(false).empty());
  EXPECT_EQ(world.dnc("PL-2").subject(p).workflow, WorkflowState::Flagged);
  world.dnc("PL-2").consent(p);
  auto prepared = world.dnc("PL-2").prepare_form(p, "F.CROM1");
  EXPECT_TRUE(prepared.prefilled.empty());
  EXPECT_FALSE(prepared.manual_required.empty());
}

TEST(Screening, UnknownStudyAndSubject) {
  testing::StudyWorld world;
  auto& dnc = world.dnc("PL-1");
  ehr::EncounterEvent e{"asseco", "0", world.deployment().clock().now(), "PL-1"};
  EXPECT_EQ(code_of([&] { dnc.screen_encounter(e, std::string("S.NONE")); }), Errc::UnknownStudy);
  EXPECT_EQ(code_of([&] { dnc.consent("nobody"); }), Errc::UnknownSubject);
  EXPECT_EQ(code_of([&] { dnc.subject("nobody"); }), Errc::UnknownSubject);
}

TEST(Consent, RandomizesThroughTheStudySystem) {
  testing::StudyWorld world;
  auto p = world.enrol("UK-1");
  auto s = world.dnc("UK-1").subject(p);
  EXPECT_EQ(s.workflow, WorkflowState::Randomized);
  ASSERT_TRUE(s.arm);
  auto assigned = world.deployment().tss().assignments("UK-1");
  ASSERT_EQ(assigned.size(), 1u);
  EXPECT_EQ(assigned[0].pseudonym, p);
  EXPECT_EQ(assigned[0].arm, *s.arm);
  std::vector<analytics::EventKind> kinds;
  for (const auto& e : world.deployment().tss().recruitment_log().events()) kinds.push_back(e.kind);
  EXPECT_EQ(kinds, (std::vector<analytics::EventKind>{analytics::EventKind::Flagged, analytics::EventKind::Consented,
                                                      analytics::EventKind::Randomized}));
  EXPECT_EQ(code_of([&] { world.dnc("UK-1").consent(p); }), Errc::WrongWorkflowState);
}

TEST(Outage, QueuesThenFlushesInOrder) {
  testing::StudyWorld world;
  auto& dnc = world.dnc("PL-1");
  auto p = world.find_eligible("PL-1");
  world.deployment().set_tss_reachable(false);
  auto s = dnc.consent(p);
  EXPECT_EQ(s.workflow, WorkflowState::Consented);
  EXPECT_GT(dnc.outbox_size(), 0u);
  auto sync = dnc.sync_protocols();
  EXPECT_FALSE(sync.reachable);
  EXPECT_TRUE(dnc.degraded());
  EXPECT_EQ(dnc.cached_studies(), std::vector<std::string>{world.study()});

  world.deployment().set_tss_reachable(true);
  sync = dnc.sync_protocols();
  EXPECT_TRUE(sync.reachable);
  EXPECT_GT(sync.flushed, 0u);
  EXPECT_FALSE(dnc.degraded());
  EXPECT_EQ(dnc.outbox_size(), 0u);
  EXPECT_EQ(dnc.subject(p).workflow, WorkflowState::Randomized);

  world.deployment().set_tss_reachable(false);
  auto r = world.submit("PL-1", p, "F.CROM1");
  EXPECT_EQ(r.status, SubmissionStatus::Pending);
  EXPECT_TRUE(world.deployment().tss().receipts().empty());
  world.deployment().set_tss_reachable(true);
  dnc.sync_protocols();
  ASSERT_EQ(world.deployment().tss().receipts().size(), 1u);
  EXPECT_EQ(dnc.submissions().at(0).status, SubmissionStatus::Accepted);
  EXPECT_EQ(world.deployment().tss().receipts()[0].digest, r.document_digest);
}

TEST(Rejection, ClientErrorsSurfaceImmediately) {
  testing::StudyWorld world;
  auto p = world.enrol("PL-1");
  world.deployment().tss().close(world.study());
  EXPECT_EQ(code_of([&] { world.submit("PL-1", p, "F.CROM1"); }), Errc::TssRejection);
  EXPECT_EQ(world.dnc("PL-1").outbox_size(), 0u);
  world.dnc("PL-1").sync_protocols();
  EXPECT_TRUE(world.dnc("PL-1").cached_studies().empty()) << "a closed study is retired from the cache";
}

TEST(Restart, JournalRestoresConnectorState) {
  testing::TempDir dir;
  auto config = testing::StudyWorld::small_config();
  config.data_dir = dir.path();
  testing::StudyWorld world(config);
  auto p = world.enrol("PL-1");
  world.submit("PL-1", p, "F.CROM1");
  world.find_eligible("PL-1");
  world.deployment().set_tss_reachable(false);
  auto q = world.find_eligible("PL-1");
  world.dnc("PL-1").consent(q);
  ASSERT_GT(world.dnc("PL-1").outbox_size(), 0u);

  auto& live = world.dnc("PL-1");
  DataNodeConnector restored(live.config(), world.deployment().network().client("dnc:PL-1"),
                             cdim::SourceRegistry::builtin().get("asseco"));
  EXPECT_EQ(restored.subjects(), live.subjects());
  EXPECT_EQ(restored.cursor(), live.cursor());
  EXPECT_EQ(restored.cached_studies(), live.cached_studies());
  EXPECT_EQ(restored.outbox_size(), live.outbox_size());
  EXPECT_EQ(restored.alerts(false).size(), live.alerts(false).size());
  ASSERT_EQ(restored.submissions().size(), 1u);
  EXPECT_EQ(restored.submissions()[0].document_digest, live.submissions()[0].document_digest);
  EXPECT_EQ(restored.provenance().export_jsonl(), live.provenance().export_jsonl());

  // The restored connector delivers what the old one had queued.
  world.deployment().set_tss_reachable(true);
  restored.sync_protocols();
  EXPECT_EQ(restored.outbox_size(), 0u);
  EXPECT_EQ(restored.subject(q).workflow, WorkflowState::Randomized);
}

TEST(Console, EndpointsDriveTheWorkflow) {
  testing::StudyWorld world;
  const auto& r = world.dnc("PL-1").router();
  auto p = world.find_eligible("PL-1");

  auto alerts = r.handle(net::Request::get("/alerts")).json();
  ASSERT_EQ(alerts.at("alerts").size(), 1u);
  EXPECT_EQ(alerts["alerts"][0]["pseudonym"], p);
  EXPECT_EQ(alerts["alerts"][0]["actions"], (nlohmann::json{"OpenEligibilityForm", "Dismiss"}));

  auto consented = r.handle(net::Request::post("/consent/" + p, ""));
  ASSERT_TRUE(consented.ok()) << consented.body;
  EXPECT_EQ(r.handle(net::Request::get("/subjects/" + p)).json().at("workflow"), "Randomized");

  auto form = r.handle(net::Request::get("/forms/" + p + "/F.CROM1"));
  ASSERT_TRUE(form.ok()) << form.body;
  EXPECT_NE(form.json().at("html").get<std::string>().find("<form"), std::string::npos);
  EXPECT_NE(form.json().at("odm").get<std::string>().find("ClinicalData"), std::string::npos);

  auto prepared = world.dnc("PL-1").prepare_form(p, "F.CROM1");
  nlohmann::json values = nlohmann::json::object();
  Rng rng(3);
  auto bundle = world.dnc("PL-1").cached_bundle(world.study());
  for (const auto& [k, v] : desk::complete_form(*bundle.find_form("F.CROM1"), prepared, rng,
                                                world.deployment().clock().now().day, 0.0)) {
    values[k] = v;
  }
  auto submitted = r.handle(net::Request::post("/forms/" + p + "/F.CROM1", nlohmann::json{{"values", values}}.dump()));
  ASSERT_EQ(submitted.status, 201) << submitted.body;
  EXPECT_EQ(submitted.json().at("status"), "Accepted");

  auto again = r.handle(net::Request::post("/forms/" + p + "/F.CROM1", nlohmann::json{{"values", values}}.dump()));
  EXPECT_EQ(again.status, net::http_status_for(Errc::WrongWorkflowState));
  EXPECT_EQ(r.handle(net::Request::get("/subjects/nobody")).status, net::http_status_for(Errc::UnknownSubject));
  EXPECT_EQ(r.handle(net::Request::post("/alerts/AL-none/dismiss", "")).status,
            net::http_status_for(Errc::InvalidArgument));
}

TEST(Console, ConsoleTrafficIsTheOnlyInboundOrigin) {
  testing::StudyWorld world;
  auto p = world.enrol("PL-1");
  world.submit("PL-1", p, "F.CROM1");
  for (const auto& t : world.deployment().network().trace()) {
    EXPECT_TRUE(t.from.rfind("dnc:", 0) == 0 || t.from == "workbench") << t.from << " -> " << t.to;
  }
}

}  // namespace
}  // namespace esource::dnc
