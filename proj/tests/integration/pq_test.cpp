// Performance qualification: the full simulated study at desk scale.
#include <gtest/gtest.h>

#include "esource/desk/deployment.hpp"
#include "testing.hpp"

namespace esource {
namespace {

desk::DeskConfig acceptance_config() {
  desk::DeskConfig c;
  c.deployment.population = 200;
  c.clinic_days = 10;
  return c;
}

TEST(Performance, FourPracticesTenDaysAllGreen) {
  auto report = desk::run_desk(acceptance_config());
  EXPECT_EQ(report.clinic_days, 10);
  EXPECT_EQ(report.table.by_country.size(), 3u);
  EXPECT_GT(report.consented, 0u);
  EXPECT_GT(report.submissions, 0u);
  EXPECT_EQ(report.verified, report.submissions);
  for (const auto& c : report.invariants) EXPECT_TRUE(c.ok) << c.name << ": " << c.detail;
  EXPECT_TRUE(report.recruitment_report.contains("countries"));
  EXPECT_LT(report.seconds, 30.0);
}

TEST(Performance, RunIsReproducibleUnderSeed) {
  auto a = desk::run_desk(acceptance_config());
  auto b = desk::run_desk(acceptance_config());
  EXPECT_EQ(a.encounters, b.encounters);
  EXPECT_EQ(a.consented, b.consented);
  EXPECT_EQ(a.submissions, b.submissions);
  EXPECT_EQ(a.recruitment_report, b.recruitment_report);
  auto other = acceptance_config();
  other.deployment.seed = 7;
  EXPECT_NE(desk::run_desk(other).encounters, 0u);
}

TEST(Performance, PersistentRunStaysGreenAndWithinBudget) {
  testing::TempDir dir;
  auto c = acceptance_config();
  c.deployment.data_dir = dir.path();
  auto report = desk::run_desk(c);
  EXPECT_TRUE(report.all_green()) << report.summary();
  EXPECT_LT(report.seconds, 30.0);
}

TEST(Performance, LargerPopulationScales) {
  auto c = acceptance_config();
  c.deployment.population = 2000;
  c.clinic_days = 20;
  auto report = desk::run_desk(c);
  EXPECT_TRUE(report.all_green()) << report.summary();
  EXPECT_EQ(report.verified, report.submissions);
  EXPECT_LT(report.seconds, 30.0);
}

// The invariant checks must fail when the property they guard is broken.
TEST(InvariantChecks, DetectInjectedViolations) {
  testing::StudyWorld world;
  auto& d = world.deployment();
  auto named = [&](const std::string& name) {
    for (const auto& c : desk::check_invariants(d)) {
      if (c.name == name) return c;
    }
    ADD_FAILURE() << name;
    return desk::InvariantCheck{};
  };
  EXPECT_TRUE(named("pull-only communication").ok);
  d.network().client("tss")->send("dnc:PL-1", net::Request::get("/alerts"));
  EXPECT_FALSE(named("pull-only communication").ok);

  EXPECT_TRUE(named("patient records stay local").ok);
  auto& ehr = *d.site("PL-1").ehr;
  auto record = ehr.router().handle(net::Request::get("/patients/" + ehr::native_id("asseco", 0) + "/record"));
  ASSERT_TRUE(record.ok()) << record.body;
  d.network().client("dnc:PL-1")->send("tss", net::Request::post("/recruitment-events", record.body));
  EXPECT_FALSE(named("patient records stay local").ok);

  world.find_eligible("UK-1");
  d.set_tss_reachable(false);
  world.enrol("UK-1");
  EXPECT_FALSE(named("outboxes drained").ok);
}

}  // namespace
}  // namespace esource
