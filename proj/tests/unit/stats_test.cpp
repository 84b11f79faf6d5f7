#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/hypergeometric.hpp>

#include "esource/analytics/stats.hpp"
#include "esource/error.hpp"
#include "esource/util/rng.hpp"

namespace esource::analytics {
namespace {

// Full enumeration of the 2^m sign assignments over average ranks.
double brute_force_p(const PairedSample& s) {
  std::vector<double> d;
  for (auto [t, c] : s.pairs) {
    if (t - c != 0) d.push_back(t - c);
  }
  const std::size_t m = d.size();
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return std::fabs(d[a]) < std::fabs(d[b]); });
  std::vector<double> rank(m);
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j + 1 < m && std::fabs(d[order[j + 1]]) == std::fabs(d[order[i]])) ++j;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = (i + j) / 2.0 + 1.0;
    i = j + 1;
  }
  double observed = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (d[i] > 0) observed += rank[i];
  }
  double lower = 0, upper = 0;
  for (std::uint64_t mask = 0; mask < (1ULL << m); ++mask) {
    double w = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (mask >> i & 1) w += rank[i];
    }
    if (w <= observed + 1e-9) ++lower;
    if (w >= observed - 1e-9) ++upper;
  }
  double total = std::ldexp(1.0, static_cast<int>(m));
  return std::min(1.0, 2.0 * std::min(lower, upper) / total);
}

PairedSample random_sample(Rng& rng, std::size_t n) {
  PairedSample s;
  for (std::size_t i = 0; i < n; ++i) {
    // Coarse values so ties and zero differences are common.
    s.pairs.emplace_back(static_cast<double>(rng.range(0, 6)) / 2, static_cast<double>(rng.range(0, 6)) / 2);
  }
  return s;
}

TEST(Wilcoxon, ExactMatchesEnumerationOnThousandRandomSamples) {
  Rng rng(20160301);
  int compared = 0;
  for (int i = 0; i < 1000; ++i) {
    auto n = static_cast<std::size_t>(rng.range(1, 12));
    auto s = random_sample(rng, n);
    bool all_zero = std::all_of(s.pairs.begin(), s.pairs.end(), [](auto p) { return p.first == p.second; });
    auto r = wilcoxon_signed_rank(s);
    if (all_zero) {
      EXPECT_TRUE(r.all_zero);
      EXPECT_EQ(r.p_two_sided, 1.0);
      continue;
    }
    ASSERT_TRUE(r.exact);
    EXPECT_NEAR(r.p_two_sided, brute_force_p(s), 1e-12) << "sample " << i;
    ++compared;
  }
  EXPECT_GT(compared, 900);
}

TEST(Wilcoxon, StatisticsAndZeroHandling) {
  PairedSample s{{{3, 1}, {2, 2}, {1, 4}, {5, 0}, {2, 1}}};
  auto r = wilcoxon_signed_rank(s);
  EXPECT_EQ(r.n_used, 4u);  // the zero difference is dropped
  // |d| = 2, 3, 5, 1 -> ranks 2, 3, 4, 1; positives 2 + 4 + 1
  EXPECT_DOUBLE_EQ(r.w_plus, 7.0);
  EXPECT_DOUBLE_EQ(r.w_minus, 3.0);
  EXPECT_DOUBLE_EQ(r.w_plus + r.w_minus, r.n_used * (r.n_used + 1) / 2.0);
}

TEST(Wilcoxon, AllZeroIsFlaggedWithUnitP) {
  auto r = wilcoxon_signed_rank({{{1, 1}, {2, 2}}});
  EXPECT_TRUE(r.all_zero);
  EXPECT_EQ(r.p_two_sided, 1.0);
  EXPECT_THROW(wilcoxon_signed_rank({}), Error);
}

TEST(Wilcoxon, SignSymmetry) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    auto s = random_sample(rng, static_cast<std::size_t>(rng.range(2, 15)));
    PairedSample flipped;
    for (auto [t, c] : s.pairs) flipped.pairs.emplace_back(c, t);
    auto a = wilcoxon_signed_rank(s);
    auto b = wilcoxon_signed_rank(flipped);
    EXPECT_DOUBLE_EQ(a.p_two_sided, b.p_two_sided);
    EXPECT_DOUBLE_EQ(a.w_plus, b.w_minus);
  }
}

TEST(Wilcoxon, NormalApproximationAboveTheExactLimit) {
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    auto s = random_sample(rng, 30);
    auto r = wilcoxon_signed_rank(s);
    if (r.n_used <= kWilcoxonExactLimit) continue;
    EXPECT_FALSE(r.exact);
    // Independent large-sample formula with tie correction and continuity 0.5.
    std::vector<double> absd;
    for (auto [t, c] : s.pairs) {
      if (t != c) absd.push_back(std::fabs(t - c));
    }
    std::sort(absd.begin(), absd.end());
    double n = static_cast<double>(absd.size());
    double ties = 0;
    for (std::size_t a = 0; a < absd.size();) {
      std::size_t b = a;
      while (b < absd.size() && absd[b] == absd[a]) ++b;
      double t = static_cast<double>(b - a);
      ties += t * t * t - t;
      a = b;
    }
    double mean = n * (n + 1) / 4;
    double sd = std::sqrt(n * (n + 1) * (2 * n + 1) / 24 - ties / 48);
    double z = std::max(0.0, std::fabs(r.w_plus - mean) - 0.5) / sd;
    EXPECT_NEAR(r.p_two_sided, std::min(1.0, std::erfc(z / std::sqrt(2.0))), 1e-9);
  }
}

TEST(Wilcoxon, NormalApproximationTracksExactAtTheLimit) {
  Rng rng(12);
  for (int i = 0; i < 40; ++i) {
    PairedSample s;
    for (int k = 0; k < 20; ++k) s.pairs.emplace_back(rng.uniform() * 3, rng.uniform() * 3);
    auto exact = wilcoxon_signed_rank(s);
    auto approx = wilcoxon_signed_rank(s, 0);
    EXPECT_TRUE(exact.exact);
    EXPECT_FALSE(approx.exact);
    EXPECT_NEAR(exact.p_two_sided, approx.p_two_sided, 0.02);
  }
}

// Exact conditional test against Boost's hypergeometric distribution.
void check_against_boost(const ProportionPair& p) {
  auto r = two_sample_proportion_test(p);
  boost::math::hypergeometric_distribution<double> h(static_cast<unsigned>(p.x1 + p.x2),
                                                     static_cast<unsigned>(p.n1),
                                                     static_cast<unsigned>(p.n1 + p.n2));
  double lower = boost::math::cdf(h, static_cast<unsigned>(p.x1));
  long support_min = std::max(0L, p.n1 + p.x1 + p.x2 - p.n1 - p.n2);
  double upper = p.x1 == support_min ? 1.0
                                     : boost::math::cdf(boost::math::complement(h, static_cast<unsigned>(p.x1 - 1)));
  EXPECT_NEAR(r.exact_less, std::min(1.0, lower), 1e-9);
  EXPECT_NEAR(r.exact_greater, std::min(1.0, upper), 1e-9);
  EXPECT_NEAR(r.exact_two_sided, std::min(1.0, 2 * std::min(lower, upper)), 1e-9);
}

TEST(Proportions, ExactTailsMatchBoostHypergeometric) {
  Rng rng(77);
  for (int i = 0; i < 300; ++i) {
    ProportionPair p;
    p.n1 = rng.range(1, 60);
    p.n2 = rng.range(1, 60);
    p.x1 = rng.range(0, p.n1);
    p.x2 = rng.range(0, p.n2);
    check_against_boost(p);
  }
  check_against_boost({249, 293, 218, 307});
  check_against_boost({61, 100, 100, 100});
}

TEST(Proportions, PooledZStatistic) {
  auto r = two_sample_proportion_test({249, 293, 218, 307});
  double p1 = 249.0 / 293, p2 = 218.0 / 307, pool = 467.0 / 600;
  double z = (p1 - p2) / std::sqrt(pool * (1 - pool) * (1.0 / 293 + 1.0 / 307));
  EXPECT_NEAR(r.z, z, 1e-12);
  EXPECT_NEAR(r.p_greater, 0.5 * std::erfc(z / std::sqrt(2.0)), 1e-12);
  EXPECT_NEAR(r.p_two_sided, std::erfc(std::fabs(z) / std::sqrt(2.0)), 1e-12);
}

TEST(Proportions, EqualRatesGiveZeroAndUnitP) {
  auto r = two_sample_proportion_test({10, 40, 5, 20});
  EXPECT_DOUBLE_EQ(r.z, 0.0);
  EXPECT_DOUBLE_EQ(r.p_two_sided, 1.0);
}

TEST(Proportions, DegenerateVarianceStillReturnsExactP) {
  auto r = two_sample_proportion_test({30, 30, 40, 40});
  EXPECT_TRUE(r.degenerate_variance);
  EXPECT_DOUBLE_EQ(r.z, 0.0);
  EXPECT_DOUBLE_EQ(r.exact_two_sided, 1.0);
  EXPECT_TRUE(two_sample_proportion_test({0, 30, 0, 40}).degenerate_variance);
}

TEST(Proportions, RejectsImpossibleCounts) {
  EXPECT_THROW(two_sample_proportion_test({5, 4, 1, 2}), Error);
  EXPECT_THROW(two_sample_proportion_test({0, 0, 1, 2}), Error);
  EXPECT_THROW(two_sample_proportion_test({-1, 3, 1, 2}), Error);
}

// Raising x1 makes arm 1 look better, so the tail favouring arm 2 can only
// grow and the tail favouring arm 1 can only shrink.
TEST(Proportions, MonotoneInX1) {
  Rng rng(31);
  for (int i = 0; i < 100; ++i) {
    long n1 = rng.range(5, 80), n2 = rng.range(5, 80), x2 = rng.range(0, n2);
    double prev_less = -1, prev_greater = 2, prev_exact_less = -1, prev_exact_greater = 2;
    for (long x1 = 0; x1 <= n1; ++x1) {
      auto r = two_sample_proportion_test({x1, n1, x2, n2});
      if (!r.degenerate_variance) {
        EXPECT_GE(r.p_less, prev_less - 1e-12);
        EXPECT_LE(r.p_greater, prev_greater + 1e-12);
        prev_less = r.p_less;
        prev_greater = r.p_greater;
      }
      EXPECT_GE(r.exact_less, prev_exact_less - 1e-12);
      EXPECT_LE(r.exact_greater, prev_exact_greater + 1e-12);
      prev_exact_less = r.exact_less;
      prev_exact_greater = r.exact_greater;
    }
  }
}

TEST(Proportions, ZAndExactAgreeAtOnePercentForLargeArms) {
  Rng rng(5);
  int disagreements = 0, total = 0;
  for (int i = 0; i < 400; ++i) {
    long n1 = rng.range(30, 300), n2 = rng.range(30, 300);
    double base = rng.uniform() * 0.6 + 0.2;
    double shift = (rng.uniform() - 0.5) * 0.4;
    long x1 = std::clamp(static_cast<long>(std::lround(n1 * (base + shift))), 0L, n1);
    long x2 = std::clamp(static_cast<long>(std::lround(n2 * base)), 0L, n2);
    auto r = two_sample_proportion_test({x1, n1, x2, n2});
    if (r.degenerate_variance) continue;
    ++total;
    // Borderline cases can fall either side of the line; only clear cases must agree.
    if (std::fabs(std::log(r.p_two_sided / 0.01)) < 0.7) continue;
    disagreements += (r.p_two_sided < 0.01) != (r.exact_two_sided < 0.01);
  }
  EXPECT_GT(total, 300);
  EXPECT_EQ(disagreements, 0);
}

TEST(Power, PlannedEffectNeedsAboutTwentyPairs) {
  PowerPlan plan;
  EXPECT_DOUBLE_EQ(plan.baseline * plan.relative_risk, 0.35);
  EXPECT_EQ(required_pairs(plan), 20u);
}

TEST(Power, MonotoneInEffectSizeAndPower) {
  PowerPlan plan;
  std::size_t prev = SIZE_MAX;
  for (double rr = 1.25; rr <= 3.0; rr += 0.05) {
    plan.relative_risk = rr;
    auto n = required_pairs(plan);
    EXPECT_LE(n, prev);
    prev = n;
  }
  PowerPlan lo, hi;
  lo.power = 0.8;
  hi.power = 0.95;
  EXPECT_LT(required_pairs(lo), required_pairs(hi));
  PowerPlan bad;
  bad.relative_risk = 1.0;
  EXPECT_THROW(required_pairs(bad), Error);
}

}  // namespace
}  // namespace esource::analytics
