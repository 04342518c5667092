#include "spkbal/evaluation.hpp"

#include <cmath>

namespace spkbal {

double f0_correlation(std::span<const F0> predicted, std::span<const F0> reference) {
  if (predicted.size() != reference.size()) throw ValidationError("f0_correlation: track lengths differ");
  std::vector<double> x;
  std::vector<double> y;
  for (std::size_t t = 0; t < predicted.size(); ++t) {
    if (predicted[t] && reference[t]) {
      x.push_back(*predicted[t]);
      y.push_back(*reference[t]);
    }
  }
  if (x.size() < 2) throw UndefinedMetric("f0_correlation: fewer than two jointly voiced frames");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedMetric("f0_correlation: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double vuv_error_rate(std::span<const F0> predicted, std::span<const F0> reference) {
  if (predicted.size() != reference.size()) throw ValidationError("vuv_error_rate: track lengths differ");
  if (predicted.empty()) throw ValidationError("vuv_error_rate: empty tracks");
  std::size_t wrong = 0;
  for (std::size_t t = 0; t < predicted.size(); ++t)
    if (predicted[t].has_value() != reference[t].has_value()) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(predicted.size());
}

double exact_binomial_test(std::int64_t wins_a, std::int64_t wins_b) {
  if (wins_a < 0 || wins_b < 0) throw ValidationError("binomial test: negative counts");
  const std::int64_t n = wins_a + wins_b;
  if (n < 1) throw ValidationError("binomial test: no trials");
  const double log_half_n = static_cast<double>(n) * std::log(0.5);
  const auto log_pmf = [&](std::int64_t k) {
    return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
           std::lgamma(static_cast<double>(n - k) + 1.0) + log_half_n;
  };
  // Relative slack so that outcomes tied with the observed one in exact
  // arithmetic are not lost to rounding.
  const double observed = log_pmf(wins_a) + 1e-7;
  double p = 0.0;
  for (std::int64_t k = 0; k <= n; ++k) {
    const double lp = log_pmf(k);
    if (lp <= observed) p += std::exp(lp);
  }
  return std::min(1.0, p);
}

}  // namespace spkbal
