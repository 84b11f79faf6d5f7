#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "esource/analytics/recruitment.hpp"
#include "esource/analytics/stats.hpp"
#include "esource/error.hpp"
#include "testing.hpp"

namespace esource::analytics {
namespace {

RecruitmentLog trial() { return RecruitmentLog::load(testing::fixture("trial_log.jsonl")); }

// Counts randomized subjects straight from the raw lines.
std::map<std::string, std::pair<int, int>> raw_counts() {
  std::map<std::string, std::pair<int, int>> out;
  std::istringstream in(testing::fixture_text("trial_log.jsonl"));
  std::string line;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    if (!j.contains("event") || j["event"] != "Randomized") continue;
    auto& cell = out[j["country"].get<std::string>()];
    (j["arm"] == "T" ? cell.first : cell.second) += 1;
  }
  return out;
}

TEST(Recruitment, TableMatchesPublishedCounts) {
  auto table = tabulate_recruitment(trial());
  EXPECT_EQ(table.by_country.at("Greece"), (ArmCounts{122, 121}));
  EXPECT_EQ(table.by_country.at("Netherlands"), (ArmCounts{10, 6}));
  EXPECT_EQ(table.by_country.at("Poland"), (ArmCounts{156, 177}));
  EXPECT_EQ(table.by_country.at("UK"), (ArmCounts{5, 3}));
  EXPECT_EQ(table.totals, (ArmCounts{293, 307}));
  EXPECT_EQ(table.grand_total(), 600);
  EXPECT_NEAR(table.share({"Greece", "Poland"}), 0.96, 0.005);
}

TEST(Recruitment, TableAgreesWithRawLineCount) {
  auto table = tabulate_recruitment(trial());
  for (auto [country, cell] : raw_counts()) {
    EXPECT_EQ(table.by_country.at(country).t, cell.first) << country;
    EXPECT_EQ(table.by_country.at(country).c, cell.second) << country;
  }
}

TEST(Recruitment, EmptyLogGivesZeroTable) {
  RecruitmentLog log;
  auto table = tabulate_recruitment(log);
  EXPECT_EQ(table.grand_total(), 0);
  EXPECT_EQ(table.share({"Greece"}), 0.0);
  EXPECT_FALSE(mean_weekly_rate(weekly_rates(log)).t);
  auto c = completion_rates(log);
  EXPECT_FALSE(c.crom_t.fraction());
  EXPECT_FALSE(c.prom_c.fraction());
}

TEST(Recruitment, CompletionRates) {
  auto c = completion_rates(trial());
  EXPECT_EQ(c.crom_t.completed, 249);
  EXPECT_EQ(c.crom_t.started, 293);
  EXPECT_EQ(c.crom_c.completed, 218);
  EXPECT_EQ(c.crom_c.started, 307);
  EXPECT_NEAR(*c.crom_t.fraction(), 0.85, 0.005);
  EXPECT_NEAR(*c.crom_c.fraction(), 0.71, 0.005);
  EXPECT_NEAR(*c.prom_t.fraction(), 0.61, 0.005);
  EXPECT_NEAR(*c.prom_c.fraction(), 1.00, 0.005);

  auto crom = two_sample_proportion_test({c.crom_t.completed, c.crom_t.started, c.crom_c.completed, c.crom_c.started});
  EXPECT_GT(crom.z, 0);
  EXPECT_LT(crom.p_greater, 0.001);
  EXPECT_LT(crom.exact_greater, 0.001);
  auto prom = two_sample_proportion_test({c.prom_t.completed, c.prom_t.started, c.prom_c.completed, c.prom_c.started});
  EXPECT_LT(prom.z, 0);
  EXPECT_LT(prom.p_less, 0.001);
  EXPECT_LT(prom.exact_less, 0.001);
}

TEST(Recruitment, MatchedPairMeansAndWilcoxon) {
  auto rates = weekly_rates(trial());
  auto means = mean_weekly_rate(rates);
  ASSERT_TRUE(means.t && means.c);
  EXPECT_NEAR(*means.t, 2.84, 0.005);
  EXPECT_NEAR(*means.c, 2.39, 0.005);

  std::map<std::string, std::pair<double, double>> by_pair;
  std::map<std::string, int> members;
  for (const auto& r : rates) {
    (r.arm == Arm::T ? by_pair[r.pair_id].first : by_pair[r.pair_id].second) = r.per_week;
    ++members[r.pair_id];
  }
  PairedSample s;
  for (auto [pair, v] : by_pair) {
    if (members[pair] == 2) s.pairs.push_back(v);
  }
  EXPECT_EQ(s.pairs.size(), 8u);
  auto w = wilcoxon_signed_rank(s);
  EXPECT_GT(w.p_two_sided, 0.05);
}

TEST(Recruitment, UnpairedPracticesDoNotMoveTheMeans) {
  std::vector<PracticeRate> rates{{"a", Arm::T, "P", 4, 2, 2.0},
                                  {"b", Arm::C, "P", 2, 2, 1.0},
                                  {"c", Arm::T, "Q", 90, 1, 90.0}};
  auto m = mean_weekly_rate(rates);
  EXPECT_DOUBLE_EQ(*m.t, 2.0);
  EXPECT_DOUBLE_EQ(*m.c, 1.0);
}

TEST(Recruitment, WeeksDerivedFromEventSpanWhenAbsent) {
  RecruitmentLog log;
  log.add_practice({"P1", "Greece", Arm::T, "X", "s", std::nullopt});
  log.append({"P1", "Greece", "a", EventKind::Randomized, Instant::on(make_date(2016, 3, 7)), std::nullopt});
  log.append({"P1", "Greece", "b", EventKind::Randomized, Instant::on(make_date(2016, 3, 21)), std::nullopt});
  auto r = weekly_rates(log).at(0);
  EXPECT_EQ(r.randomized, 2);
  EXPECT_DOUBLE_EQ(r.weeks, 3.0);
  EXPECT_DOUBLE_EQ(r.per_week, 2.0 / 3.0);
}

TEST(Recruitment, FixtureRespectsWorkflowOrder) { EXPECT_TRUE(order_violations(trial()).empty()); }

TEST(Recruitment, OrderViolationsFound) {
  RecruitmentLog log;
  log.add_practice({"P1", "UK", Arm::C, "X", "s", 1.0});
  auto at = Instant::on(make_date(2016, 4, 1));
  log.append({"P1", "UK", "ok", EventKind::Flagged, at, {}});
  log.append({"P1", "UK", "ok", EventKind::Consented, at, {}});
  log.append({"P1", "UK", "skip", EventKind::Flagged, at, {}});
  log.append({"P1", "UK", "skip", EventKind::Randomized, at, {}});
  log.append({"P1", "UK", "twice", EventKind::Flagged, at, {}});
  log.append({"P1", "UK", "twice", EventKind::Flagged, at, {}});
  EXPECT_EQ(order_violations(log), (std::vector<std::string>{"skip", "twice"}));
  EXPECT_EQ(log.arm_of(log.events()[0]), Arm::C);
}

TEST(Recruitment, JsonlRoundTrip) {
  auto log = trial();
  auto again = RecruitmentLog::from_jsonl(log.to_jsonl());
  EXPECT_EQ(again.practices(), log.practices());
  EXPECT_EQ(again.events(), log.events());
  EXPECT_THROW(RecruitmentLog::from_jsonl("{\"event\":\"Nope\"}\n"), Error);
}

TEST(Recruitment, RestrictionKeepsOnlyNamedCountries) {
  auto gp = trial().restricted_to({"Greece", "Poland"});
  auto table = tabulate_recruitment(gp);
  EXPECT_EQ(table.grand_total(), 576);
  EXPECT_FALSE(table.by_country.count("UK"));
  EXPECT_NE(format_table(table).find("Greece"), std::string::npos);
}

}  // namespace
}  // namespace esource::analytics
