// Apache License, Version 2.0, refer to LICENSE.txt

// Slice sampler for a single normalized random measure mixture.
//
// Jumps above the slice threshold L are represented explicitly; jumps below
// L are integrated out. Allocations are updated against the represented
// jumps only, gated by per-observation slice variables u_i.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "dhnrm/measures.hpp"
#include "dhnrm/random.hpp"

namespace dhnrm {

/// Gamma prior (shape, rate) on the CRM mass.
struct MassPrior {
  double shape = 1.0;
  double rate = 1.0;
};

struct SliceState {
  LevyParams params;             // mass lives in params.mass
  CrmState jumps;                // represented jumps, allocated or not
  std::vector<AtomId> alloc;     // s_i
  std::vector<double> u;         // slice variables
  double v = 1.0;
  double L = 1.0;
  std::map<AtomId, long> counts;  // allocated atoms only
  MassPrior mass_prior;
  bool sample_mass = true;
  AtomId next_atom = 0;

  std::size_t num_observations() const { return alloc.size(); }

  /// Throws std::logic_error naming the first broken invariant.
  void validate() const {
    if (u.size() != alloc.size()) throw std::logic_error("SliceState: u and alloc differ in size");
    std::unordered_map<AtomId, double> jump_of;
    for (const auto& e : jumps.entries) {
      if (!jump_of.emplace(e.atom, e.jump).second)
        throw std::logic_error("SliceState: duplicate atom");
      if (!(e.jump > 0.0)) throw std::logic_error("SliceState: nonpositive jump");
    }
    std::map<AtomId, long> tally;
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < alloc.size(); ++i) {
      auto it = jump_of.find(alloc[i]);
      if (it == jump_of.end())
        throw std::logic_error("SliceState: observation " + std::to_string(i) +
                               " allocated to missing atom");
      if (!(u[i] > 0.0 && u[i] < it->second))
        throw std::logic_error("SliceState: slice " + std::to_string(i) + " not below its jump");
      ++tally[alloc[i]];
      lo = std::min(lo, u[i]);
    }
    if (tally != counts) throw std::logic_error("SliceState: counts disagree with allocations");
    if (!alloc.empty() && L != lo) throw std::logic_error("SliceState: L is not min u");
    for (const auto& e : jumps.entries)
      if (!(e.jump > L) && !counts.count(e.atom))
        throw std::logic_error("SliceState: unallocated jump below L");
  }
};

/// Draw from the density proportional to t^{shape-1} e^{-rate t} on (floor, inf).
/// Plain rejection while the untruncated draw lands above the floor at least
/// 10% of the time, inverse CDF on the upper tail below that, and an
/// exponential-envelope rejection when even the tail probability underflows.
inline double truncated_gamma(Rng& rng, double shape, double rate, double floor) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw std::invalid_argument("truncated_gamma: shape and rate must be positive");
  if (!(floor >= 0.0)) throw std::invalid_argument("truncated_gamma: negative floor");
  if (floor == 0.0) return gamma(rng, shape, rate);
  const double x0 = rate * floor;
  const double q = boost::math::gamma_q(shape, x0);
  if (q >= 0.1) {
    for (;;) {
      const double t = gamma(rng, shape, rate);
      if (t > floor) return t;
    }
  }
  if (q > 1e-280) {
    for (int tries = 0; tries < 8; ++tries) {
      const double t = boost::math::gamma_q_inv(shape, q * uniform01(rng)) / rate;
      if (t > floor) return t;
    }
  }
  // t = floor + e, e ~ Exp(lambda); the envelope ratio peaks at t = floor.
  const double lambda = shape > 1.0 ? rate - (shape - 1.0) / floor : rate;
  for (;;) {
    const double t = floor + exponential(rng, lambda);
    const double log_acc =
        (shape - 1.0) * (std::log(t / floor) - (shape > 1.0 ? (t - floor) / floor : 0.0));
    if (std::log(uniform01(rng)) < log_acc) return t;
  }
}

/// Jump of an atom holding n_k observations, given v, truncated below at floor.
inline double sample_allocated_jump(long n_k, double floor, double v, const LevyParams& p,
                                    Rng& rng) {
  p.validate();
  if (n_k < 1) throw std::invalid_argument("sample_allocated_jump: n_k must be positive");
  detail::require_nonnegative(v, "sample_allocated_jump: v");
  return truncated_gamma(rng, static_cast<double>(n_k) - p.a, p.b + v, floor);
}

namespace detail {

/// Exact draws from the density proportional to e^{-ct} t^{-1-a} on (L, inf).
/// Envelope: a Pareto piece on (L, B) and an exponential piece on (B, inf)
/// with B = max(L, 1/c); both accept with probability bounded away from 0.
class TiltedTailSampler {
 public:
  TiltedTailSampler(double a, double c, double L) : a_(a), c_(c), L_(L) {
    B_ = std::max(L, 1.0 / c);
    head_ = B_ > L ? std::exp(-c * L) * pareto_mass(L, B_) : 0.0;
    tail_ = std::exp(-c * B_ - (1.0 + a) * std::log(B_)) / c;
  }

  double operator()(Rng& rng) const {
    const double p_head = head_ / (head_ + tail_);
    for (;;) {
      if (uniform01(rng) < p_head) {
        const double t = pareto_draw(uniform01(rng));
        if (std::log(uniform01(rng)) < -c_ * (t - L_)) return t;
      } else {
        const double t = B_ + exponential(rng, c_);
        if (std::log(uniform01(rng)) < -(1.0 + a_) * std::log(t / B_)) return t;
      }
    }
  }

 private:
  double pareto_mass(double lo, double hi) const {
    if (a_ == 0.0) return std::log(hi / lo);
    return (std::pow(lo, -a_) - std::pow(hi, -a_)) / a_;
  }
  double pareto_draw(double w) const {
    if (a_ == 0.0) return L_ * std::pow(B_ / L_, w);
    const double lo = std::pow(L_, -a_), hi = std::pow(B_, -a_);
    return std::pow(lo - w * (lo - hi), -1.0 / a_);
  }

  double a_, c_, L_, B_, head_, tail_;
};

}  // namespace detail

/// Poisson process of jumps above L with intensity M e^{-vt} rho(t), each
/// tagged with a fresh atom id taken from next_atom.
inline CrmState sample_new_jumps(const LevyParams& p, double v, double L, Rng& rng,
                                 AtomId& next_atom) {
  p.validate();
  if (!(L > 0.0)) throw std::invalid_argument("sample_new_jumps: L must be positive");
  detail::require_nonnegative(v, "sample_new_jumps: v");
  CrmState out;
  out.threshold = L;
  const long count = poisson(rng, tail_mass(p, L, v));
  if (count == 0) return out;
  detail::TiltedTailSampler draw(p.a, p.b + v, L);
  out.entries.reserve(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) out.entries.push_back({draw(rng), next_atom++});
  return out;
}

/// Uniform slices under each observation's jump; L becomes their minimum.
inline void sample_slices(SliceState& s, Rng& rng) {
  std::unordered_map<AtomId, double> jump_of;
  for (const auto& e : s.jumps.entries) jump_of[e.atom] = e.jump;
  s.u.resize(s.alloc.size());
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.alloc.size(); ++i) {
    auto it = jump_of.find(s.alloc[i]);
    if (it == jump_of.end())
      throw std::logic_error("sample_slices: observation " + std::to_string(i) +
                             " allocated to missing atom");
    s.u[i] = it->second * uniform01(rng);
    lo = std::min(lo, s.u[i]);
  }
  if (!s.alloc.empty()) s.L = lo;
}

/// log density of v given everything else, in y = log v (Jacobian included).
inline double log_v_conditional(double y, long n, double total_jump, const LevyParams& p,
                                double L) {
  const double v = std::exp(y);
  return static_cast<double>(n) * y - v * total_jump - partial_exponent(p, v, L);
}

/// One univariate slice-sampling update with step-out and shrinkage.
template <class LogDensity>
double slice_update(double x0, LogDensity logf, double width, Rng& rng, int max_steps = 64) {
  const double f0 = logf(x0);
  const double level = f0 + std::log(uniform01(rng));
  double lo = x0 - width * uniform01(rng);
  double hi = lo + width;
  int j = static_cast<int>(std::floor(max_steps * uniform01(rng)));
  int k = max_steps - 1 - j;
  while (j-- > 0 && logf(lo) > level) lo -= width;
  while (k-- > 0 && logf(hi) > level) hi += width;
  for (;;) {
    const double x = uniform(rng, lo, hi);
    if (logf(x) > level) return x;
    if (x < x0) lo = x; else hi = x;
  }
}

/// v from its conditional, proportional to
/// v^{N-1} exp(-v sum J) exp(-M * integral_0^L (1 - e^{-vt}) rho(t) dt).
inline double sample_v(const SliceState& s, long n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_v: need at least one observation");
  if (s.jumps.empty()) throw std::invalid_argument("sample_v: no represented jumps");
  const double total = s.jumps.total_mass();
  auto logf = [&](double y) { return log_v_conditional(y, n, total, s.params, s.L); };
  return std::exp(slice_update(std::log(s.v), logf, 1.0, rng));
}

/// Mass from its Gamma conditional given K represented jumps above L.
inline double sample_mass(const SliceState& s, std::size_t k, Rng& rng) {
  const double rate = s.mass_prior.rate + partial_exponent_unit(s.params.a, s.params.b, s.v, s.L) +
                      tail_mass_unit(s.params.a, s.params.b, s.L, 0.0);
  return gamma(rng, s.mass_prior.shape + static_cast<double>(k), rate);
}

/// Atom for one observation: P(k) proportional to 1(J_k > u) likelihood(k).
/// `likelihood` maps an AtomId to a nonnegative weight.
template <class Likelihood>
AtomId sample_allocation(double u, const CrmState& jumps, Likelihood&& likelihood, Rng& rng) {
  std::vector<double> w;
  std::vector<AtomId> ids;
  for (const auto& e : jumps.entries) {
    if (!(e.jump > u)) continue;
    const double lk = likelihood(e.atom);
    if (lk > 0.0) {
      w.push_back(lk);
      ids.push_back(e.atom);
    }
  }
  if (w.empty())
    throw std::logic_error("sample_allocation: no represented jump survives the slice");
  return ids[categorical(rng, w)];
}

/// Log of the joint density of (represented jumps, u, v, M, allocations) up
/// to a state-independent constant, with the data factor supplied as
/// `log_data` (sum of log g0 over observations). Throws on broken invariants.
inline double log_joint(const SliceState& s, double log_data) {
  s.validate();
  const auto& p = s.params;
  const long n = static_cast<long>(s.alloc.size());
  double lj = log_data;
  if (n > 0) lj += (n - 1) * std::log(s.v) - std::lgamma(static_cast<double>(n));
  lj -= s.v * s.jumps.total_mass();
  lj -= partial_exponent(p, s.v, s.L) + tail_mass(p, s.L, 0.0);
  for (const auto& e : s.jumps.entries) lj += log_intensity(p, e.jump);
  if (s.sample_mass)
    lj += (s.mass_prior.shape - 1.0) * std::log(p.mass) - s.mass_prior.rate * p.mass;
  return lj;
}

/// Model interface for full sweeps. Observation likelihoods are collapsed
/// over the atom parameters:
///   void remove(std::size_t i, AtomId k);
///   void add(std::size_t i, AtomId k);
///   double log_predictive(std::size_t i, AtomId k) const;  // i already removed
///
/// One sweep in blocked order: allocated jumps with the slices and the
/// unallocated jumps integrated out, then slices, then the unallocated jumps
/// above the new L, then v, then M, then allocations.
template <class Model>
void slice_sweep(SliceState& s, Model& model, Rng& rng) {
  const long n = static_cast<long>(s.alloc.size());
  if (n == 0) throw std::invalid_argument("slice_sweep: no observations");

  CrmState next;
  for (const auto& [atom, count] : s.counts)
    next.entries.push_back({sample_allocated_jump(count, 0.0, s.v, s.params, rng), atom});
  s.jumps = next;
  sample_slices(s, rng);
  CrmState fresh = sample_new_jumps(s.params, s.v, s.L, rng, s.next_atom);
  s.jumps.entries.insert(s.jumps.entries.end(), fresh.entries.begin(), fresh.entries.end());
  s.jumps.threshold = 0.0;

  s.v = sample_v(s, n, rng);
  if (s.sample_mass) s.params.mass = sample_mass(s, s.jumps.size(), rng);

  std::vector<double> lw;
  std::vector<AtomId> ids;
  for (long i = 0; i < n; ++i) {
    const AtomId old = s.alloc[i];
    model.remove(static_cast<std::size_t>(i), old);
    if (--s.counts[old] == 0) s.counts.erase(old);
    lw.clear();
    ids.clear();
    for (const auto& e : s.jumps.entries) {
      if (!(e.jump > s.u[i])) continue;
      lw.push_back(model.log_predictive(static_cast<std::size_t>(i), e.atom));
      ids.push_back(e.atom);
    }
    if (ids.empty()) throw std::logic_error("slice_sweep: slice consistency violated");
    const AtomId k = ids[log_categorical(rng, lw)];
    s.alloc[i] = k;
    ++s.counts[k];
    model.add(static_cast<std::size_t>(i), k);
  }
}

}  // namespace dhnrm
