#include "esource/analytics/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/distributions/normal.hpp>

#include "esource/error.hpp"

namespace esource::analytics {

namespace {

const boost::math::normal kStdNormal;

double upper_tail(double z) { return boost::math::cdf(boost::math::complement(kStdNormal, z)); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const PairedSample& s, std::size_t exact_limit) {
  if (s.pairs.empty()) throw Error(Errc::InvalidArgument, "paired sample is empty");
  std::vector<double> d;
  for (auto [t, c] : s.pairs) {
    if (t - c != 0.0) d.push_back(t - c);
  }
  WilcoxonResult r;
  r.n_used = d.size();
  if (d.empty()) {
    r.all_zero = true;
    return r;
  }

  // Average ranks of |d|, kept doubled so tied ranks stay integral.
  std::vector<std::size_t> order(d.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return std::fabs(d[a]) < std::fabs(d[b]); });
  std::vector<long> rank2(d.size());
  double tie_term = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && std::fabs(d[order[j + 1]]) == std::fabs(d[order[i]])) ++j;
    long shared = static_cast<long>(i + 1 + j + 1);  // 2 * average of ranks i+1..j+1
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = shared;
    double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  long w2 = 0, total2 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    total2 += rank2[i];
    if (d[i] > 0) w2 += rank2[i];
  }
  r.w_plus = w2 / 2.0;
  r.w_minus = (total2 - w2) / 2.0;
  const double n = static_cast<double>(d.size());

  if (d.size() <= exact_limit) {
    // counts[s] = number of sign assignments whose doubled positive-rank sum is s.
    std::vector<double> counts(static_cast<std::size_t>(total2) + 1, 0.0);
    counts[0] = 1;
    long reach = 0;
    for (long rk : rank2) {
      for (long sum = reach; sum >= 0; --sum) {
        if (counts[sum] != 0) counts[sum + rk] += counts[sum];
      }
      reach += rk;
    }
    double lower = 0, upper = 0;
    for (long sum = 0; sum <= total2; ++sum) {
      if (sum <= w2) lower += counts[sum];
      if (sum >= w2) upper += counts[sum];
    }
    double all = std::ldexp(1.0, static_cast<int>(d.size()));
    r.p_two_sided = std::min(1.0, 2.0 * std::min(lower, upper) / all);
    r.exact = true;
    return r;
  }

  double mean = n * (n + 1) / 4;
  double var = n * (n + 1) * (2 * n + 1) / 24 - tie_term / 48;
  double dev = std::fabs(r.w_plus - mean) - 0.5;
  double z = var > 0 ? std::max(dev, 0.0) / std::sqrt(var) : 0.0;
  r.p_two_sided = std::min(1.0, 2.0 * upper_tail(z));
  r.exact = false;
  return r;
}

ProportionResult two_sample_proportion_test(const ProportionPair& p) {
  if (p.n1 < 1 || p.n2 < 1 || p.x1 < 0 || p.x2 < 0 || p.x1 > p.n1 || p.x2 > p.n2) {
    throw Error(Errc::InvalidArgument, "proportions need 0 <= x <= n and n >= 1");
  }
  ProportionResult r;
  r.p1 = static_cast<double>(p.x1) / p.n1;
  r.p2 = static_cast<double>(p.x2) / p.n2;
  double pooled = static_cast<double>(p.x1 + p.x2) / (p.n1 + p.n2);
  if (pooled <= 0.0 || pooled >= 1.0) {
    r.degenerate_variance = true;
  } else {
    double se = std::sqrt(pooled * (1 - pooled) * (1.0 / p.n1 + 1.0 / p.n2));
    r.z = (r.p1 - r.p2) / se;
    r.p_greater = upper_tail(r.z);
    r.p_less = upper_tail(-r.z);
    r.p_two_sided = std::min(1.0, 2.0 * upper_tail(std::fabs(r.z)));
  }

  // Conditional on the margins, x1 is hypergeometric: n1 draws from n1+n2
  // with x1+x2 successes.
  const long total = p.n1 + p.n2, successes = p.x1 + p.x2;
  const long lo = std::max(0L, successes - p.n2), hi = std::min(successes, p.n1);
  auto log_choose = [](long n, long k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
  };
  const double log_denominator = log_choose(total, p.n1);
  double lower = 0, upper = 0;
  for (long k = lo; k <= hi; ++k) {
    double pk = std::exp(log_choose(successes, k) + log_choose(total - successes, p.n1 - k) - log_denominator);
    if (k <= p.x1) lower += pk;
    if (k >= p.x1) upper += pk;
  }
  r.exact_less = std::min(1.0, lower);
  r.exact_greater = std::min(1.0, upper);
  r.exact_two_sided = std::min(1.0, 2.0 * std::min(lower, upper));
  return r;
}

std::size_t required_pairs(const PowerPlan& plan) {
  double delta = plan.baseline * (plan.relative_risk - 1.0);
  if (!(delta > 0) || !(plan.sd_difference > 0)) throw Error(Errc::InvalidArgument, "effect and SD must be positive");
  if (!(plan.alpha > 0 && plan.alpha < 1 && plan.power > 0 && plan.power < 1)) {
    throw Error(Errc::InvalidArgument, "alpha and power must lie in (0, 1)");
  }
  double za = boost::math::quantile(kStdNormal, 1 - plan.alpha / 2);
  double zb = boost::math::quantile(kStdNormal, plan.power);
  double paired_t = std::pow((za + zb) * plan.sd_difference / delta, 2);
  double efficiency = 3.0 / std::numbers::pi;
  return static_cast<std::size_t>(std::ceil(paired_t / efficiency - 1e-9));
}

}  // namespace esource::analytics
