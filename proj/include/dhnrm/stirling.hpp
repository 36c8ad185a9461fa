// Apache License, Version 2.0, refer to LICENSE.txt

// Generalized Stirling numbers G(n, t; a) in log space, from
//   G(n+1, t) = G(n, t-1) + (n - a t) G(n, t),  G(0, 0) = 1,
// and the table-count distribution they induce: P(t | n, x) ∝ G(n, t) x^t.
// a = 0 gives the unsigned Stirling numbers of the first kind.

#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dhnrm/random.hpp"

namespace dhnrm {

namespace detail {
inline double log_add(double x, double y) {
  if (x == -std::numeric_limits<double>::infinity()) return y;
  if (y == -std::numeric_limits<double>::infinity()) return x;
  return x > y ? x + std::log1p(std::exp(y - x)) : y + std::log1p(std::exp(x - y));
}
}  // namespace detail

class GenStirling {
 public:
  explicit GenStirling(double a) : a_(a) {
    if (!(a >= 0.0 && a < 1.0)) throw std::invalid_argument("GenStirling: a must lie in [0, 1)");
    rows_.push_back({0.0});
  }

  double a() const { return a_; }

  /// log G(n, t); -inf outside 0 <= t <= n or at (n >= 1, t = 0).
  double log_g(long n, long t) {
    if (n < 0 || t < 0 || t > n) return -std::numeric_limits<double>::infinity();
    grow(n);
    return rows_[n][t];
  }

  /// log of Z(n, x) = sum_t G(n, t) x^t; Z(0, x) = 1.
  double log_z(long n, double x) {
    if (n == 0) return 0.0;
    if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
    grow(n);
    const double lx = std::log(x);
    double acc = -std::numeric_limits<double>::infinity();
    for (long t = 1; t <= n; ++t) acc = detail::log_add(acc, rows_[n][t] + t * lx);
    return acc;
  }

  /// Z(n+1, x) / Z(n, x): the weight of one more customer on a dish already
  /// holding n of them, tables integrated out.
  double ratio(long n, double x) {
    if (n == 0) return x;
    if (a_ == 0.0) return static_cast<double>(n) + x;
    return std::exp(log_z(n + 1, x) - log_z(n, x));
  }

  /// Table count t in 1..n drawn with P(t) ∝ G(n, t) x^t; 0 when n = 0.
  long sample_tables(long n, double x, Rng& rng) {
    if (n == 0) return 0;
    if (!(x > 0.0)) throw std::invalid_argument("sample_tables: x must be positive");
    grow(n);
    std::vector<double> lw(static_cast<std::size_t>(n));
    const double lx = std::log(x);
    for (long t = 1; t <= n; ++t) lw[t - 1] = rows_[n][t] + t * lx;
    return static_cast<long>(log_categorical(rng, lw)) + 1;
  }

  /// E[t] under P(t) ∝ G(n, t) x^t.
  double mean_tables(long n, double x) {
    if (n == 0) return 0.0;
    const double lz = log_z(n, x), lx = std::log(x);
    double m = 0.0;
    for (long t = 1; t <= n; ++t) m += t * std::exp(rows_[n][t] + t * lx - lz);
    return m;
  }

 private:
  void grow(long n) {
    const double ninf = -std::numeric_limits<double>::infinity();
    while (static_cast<long>(rows_.size()) <= n) {
      const long m = static_cast<long>(rows_.size()) - 1;  // build row m + 1
      const auto& prev = rows_[m];
      std::vector<double> row(static_cast<std::size_t>(m + 2), ninf);
      for (long t = 1; t <= m + 1; ++t) {
        double v = prev[t - 1];
        if (t <= m) {
          const double coef = static_cast<double>(m) - a_ * static_cast<double>(t);
          if (coef > 0.0) v = detail::log_add(v, std::log(coef) + prev[t]);
        }
        row[t] = v;
      }
      rows_.push_back(std::move(row));
    }
  }

  double a_;
  std::vector<std::vector<double>> rows_;
};

}  // namespace dhnrm
