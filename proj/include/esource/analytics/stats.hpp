#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace esource::analytics {

/// One (T, C) observation per matched practice pair.
struct PairedSample {
  std::vector<std::pair<double, double>> pairs;
};

/// Exact null distribution is used up to this many non-zero differences.
inline constexpr std::size_t kWilcoxonExactLimit = 20;

struct WilcoxonResult {
  double w_plus = 0;   // sum of ranks of positive differences (t - c)
  double w_minus = 0;
  std::size_t n_used = 0;  // non-zero differences
  double p_two_sided = 1.0;
  bool exact = true;
  bool all_zero = false;  // every difference was zero; p is 1 by definition
};

/// Wilcoxon matched-pairs signed-ranks test. Zero differences are dropped,
/// tied |d| share their average rank; two-sided p doubles the smaller tail.
/// Errors: InvalidArgument for an empty sample.
WilcoxonResult wilcoxon_signed_rank(const PairedSample& s, std::size_t exact_limit = kWilcoxonExactLimit);

struct ProportionPair {
  long x1 = 0, n1 = 0, x2 = 0, n2 = 0;
};

struct ProportionResult {
  double p1 = 0, p2 = 0;
  double z = 0;                 // (p1 - p2) / pooled SE; 0 when degenerate
  double p_two_sided = 1.0;     // normal approximation
  double p_greater = 1.0;       // one-sided, alternative p1 > p2
  double p_less = 1.0;          // one-sided, alternative p1 < p2
  double exact_two_sided = 1.0; // conditional (hypergeometric) test
  double exact_greater = 1.0;
  double exact_less = 1.0;
  bool degenerate_variance = false;  // pooled proportion is 0 or 1
};

/// Pooled two-sample z test plus the exact conditional test on the same table.
/// Errors: InvalidArgument when x > n or n < 1.
ProportionResult two_sample_proportion_test(const ProportionPair& p);

/// Planning assumptions for the practice-pair sample size.
struct PowerPlan {
  double baseline = 0.20;       // control-arm recruitment rate
  double relative_risk = 1.75;  // planned effect: 20% -> 35%
  double sd_difference = 0.20;  // assumed SD of within-pair rate differences
  double alpha = 0.05;          // two-sided
  double power = 0.90;
};

/// Pairs needed for a paired comparison of recruitment rates, using the
/// normal-theory paired t size inflated by the Wilcoxon asymptotic relative
/// efficiency 3/pi. Errors: InvalidArgument for a non-positive effect.
std::size_t required_pairs(const PowerPlan& plan);

}  // namespace esource::analytics
