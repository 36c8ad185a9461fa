// Apache License, Version 2.0, refer to LICENSE.txt

// Sequential predictive (urn) of the normalized generalized Gamma process.
// After n customers at k tables,
//   P(new table)    = M Gamma(1-a) I(n+1, k+1) / (n I(n, k))
//   P(join table c) = (n_c - a) I(n+1, k) / (n I(n, k))
// with I(n, k) = integral over v > 0 of v^{n-1} (b+v)^{ak-n} exp(-M psi(v)),
// psi the unit Laplace exponent. The DP kind has P(new) = M / (M + n).

#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "dhnrm/measures.hpp"
#include "dhnrm/random.hpp"

namespace dhnrm {

class GibbsTypePredictive {
 public:
  explicit GibbsTypePredictive(const LevyParams& p) : p_(p) {
    p_.validate();
    if (p_.a > 0.0) g1a_ = boost::math::tgamma(1.0 - p_.a);
  }

  const LevyParams& params() const { return p_; }

  /// log I(n, k), memoized. NGG kind only.
  double log_i(long n, long k) {
    if (p_.kind() == ProcessKind::kDp)
      throw unsupported_operation("log_i: DP kind has a closed form");
    auto key = std::make_pair(n, k);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const double val = compute_log_i(n, k);
    cache_.emplace(key, val);
    return val;
  }

  /// Probability that customer n+1 opens a new table, given k tables so far.
  double p_new(long n, long k) {
    if (n == 0) return 1.0;
    if (p_.kind() == ProcessKind::kDp) return p_.mass / (p_.mass + static_cast<double>(n));
    return p_.mass * g1a_ * std::exp(log_i(n + 1, k + 1) - log_i(n, k)) / static_cast<double>(n);
  }

  /// Common factor of the join probabilities: P(join c) = (n_c - a) * join_scale.
  double join_scale(long n, long k) {
    if (n == 0) return 0.0;
    if (p_.kind() == ProcessKind::kDp) return 1.0 / (p_.mass + static_cast<double>(n));
    return std::exp(log_i(n + 1, k) - log_i(n, k)) / static_cast<double>(n);
  }

  /// Seats one customer given current table sizes; returns the table index,
  /// equal to sizes.size() for a new table. Table sizes are not modified.
  std::size_t seat(const std::vector<long>& sizes, long n, Rng& rng) {
    const long k = static_cast<long>(sizes.size());
    if (n == 0) return 0;
    std::vector<double> w(sizes.size() + 1);
    const double js = join_scale(n, k);
    for (std::size_t c = 0; c < sizes.size(); ++c) w[c] = (sizes[c] - p_.a) * js;
    w.back() = p_new(n, k);
    return categorical(rng, w);
  }

 private:
  // h(y) with v = e^y, including the dv = v dy Jacobian.
  double h(double y, long n, long k) const {
    const double v = std::exp(y);
    return n * y + (p_.a * k - n) * std::log(p_.b + v) -
           p_.mass * laplace_exponent_unit(p_.a, p_.b, v);
  }
  double dh(double y, long n, long k) const {
    const double v = std::exp(y), c = p_.b + v;
    return n + (p_.a * k - n) * v / c - p_.mass * g1a_ * v * std::pow(c, p_.a - 1.0);
  }
  double d2h(double y, long n, long k) const {
    const double v = std::exp(y), c = p_.b + v;
    return (p_.a * k - n) * p_.b * v / (c * c) -
           p_.mass * g1a_ * v * std::pow(c, p_.a - 2.0) * (p_.b + p_.a * v);
  }

  double compute_log_i(long n, long k) const {
    // h is concave: dh decreases from n at -inf to -inf at +inf.
    double lo = -1.0, hi = 1.0;
    while (dh(lo, n, k) < 0.0) lo -= 2.0 * (1.0 + std::abs(lo));
    while (dh(hi, n, k) > 0.0) hi += 2.0 * (1.0 + std::abs(hi));
    double y = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      const double g = dh(y, n, k);
      if (g > 0.0) lo = y; else hi = y;
      double next = y - g / d2h(y, n, k);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - y) < 1e-13 * (1.0 + std::abs(y))) { y = next; break; }
      y = next;
    }
    const double peak = h(y, n, k);
    const double sigma = 1.0 / std::sqrt(-d2h(y, n, k));
    double left = y - 10.0 * sigma, right = y + 10.0 * sigma;
    while (h(left, n, k) - peak > -60.0) left -= 5.0 * sigma;
    while (h(right, n, k) - peak > -60.0) right += 5.0 * sigma;
    // trapezoid on a sigma/3 grid: smooth integrand with fast tails
    const double step = sigma / 3.0;
    double z = 0.0;
    for (double t = y; t >= left; t -= step) z += std::exp(h(t, n, k) - peak);
    for (double t = y + step; t <= right; t += step) z += std::exp(h(t, n, k) - peak);
    z *= step;
    return peak + std::log(z);
  }

  LevyParams p_;
  double g1a_ = 1.0;
  std::map<std::pair<long, long>, double> cache_;
};

}  // namespace dhnrm
