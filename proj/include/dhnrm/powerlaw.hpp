// Apache License, Version 2.0, refer to LICENSE.txt

// Growth of the number of clusters K_n under the sequential predictive of a
// single normalized measure.

#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dhnrm/gibbs_type.hpp"
#include "dhnrm/random.hpp"

namespace dhnrm {

struct PartitionTrace {
  std::vector<std::pair<long, long>> points;  // (n, K_n), log-spaced
  long customers = 0;
  long clusters = 0;
};

/// Only cluster count and sizes are needed; sizes enter through sum(n_c - a)
/// which equals n - a k, so joining is a single Bernoulli against p_new.
inline PartitionTrace simulate_partition(const LevyParams& p, long n, Rng& rng,
                                         int points_per_decade = 20) {
  if (n < 1) throw std::invalid_argument("simulate_partition: n must be positive");
  GibbsTypePredictive pred(p);
  PartitionTrace out;
  long k = 0;
  double next_mark = 1.0;
  const double step = std::pow(10.0, 1.0 / points_per_decade);
  for (long i = 0; i < n; ++i) {
    if (i == 0 || bernoulli(rng, pred.p_new(i, k))) ++k;
    const long seen = i + 1;
    if (seen >= next_mark || seen == n) {
      out.points.emplace_back(seen, k);
      while (next_mark <= seen) next_mark *= step;
    }
  }
  out.customers = n;
  out.clusters = k;
  return out;
}

/// Least-squares slope of log K against log n over points with n > n_max/10.
inline double final_decade_slope(const PartitionTrace& t) {
  const double lo = static_cast<double>(t.customers) / 10.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int c = 0;
  for (auto [n, k] : t.points) {
    if (n < lo) continue;
    const double x = std::log(static_cast<double>(n)), y = std::log(static_cast<double>(k));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++c;
  }
  if (c < 2) throw std::invalid_argument("final_decade_slope: fewer than two points in the final decade");
  return (c * sxy - sx * sy) / (c * sxx - sx * sx);
}

/// Exact E[K_n] for the DP: sum_{i<n} M / (M + i).
inline double dp_expected_clusters(double mass, long n) {
  double s = 0.0;
  for (long i = 0; i < n; ++i) s += mass / (mass + static_cast<double>(i));
  return s;
}

}  // namespace dhnrm
