// Apache License, Version 2.0, refer to LICENSE.txt

// Levy-measure mathematics for the generalized Gamma process and its
// Dirichlet-process limit, plus the finite jump representation of a
// completely random measure (CRM) and its normalization.
//
// Intensity convention: rho(t) = e^{-bt} t^{-1-a}, and the Levy measure is
// M rho(t) dt H(dx). The DP kind is a = 0 and keeps its own closed forms.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/expint.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace dhnrm {

enum class ProcessKind { kNgg, kDp };

inline const char* to_string(ProcessKind kind) {
  return kind == ProcessKind::kDp ? "DP" : "NGG";
}

/// Raised for operations that have no meaning for the requested kind.
class unsupported_operation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct LevyParams {
  double mass = 1.0;
  double a = 0.5;
  double b = 1.0;

  ProcessKind kind() const { return a == 0.0 ? ProcessKind::kDp : ProcessKind::kNgg; }

  void validate() const {
    if (!(mass > 0.0) || !std::isfinite(mass))
      throw std::invalid_argument("LevyParams: mass must be positive");
    if (!(b > 0.0) || !std::isfinite(b))
      throw std::invalid_argument("LevyParams: b must be positive");
    if (!(a >= 0.0 && a < 1.0))
      throw std::invalid_argument("LevyParams: a must lie in [0, 1)");
  }

  static LevyParams ngg(double mass, double a, double b = 1.0) {
    LevyParams p{mass, a, b};
    p.validate();
    return p;
  }
  static LevyParams dp(double mass, double b = 1.0) {
    LevyParams p{mass, 0.0, b};
    p.validate();
    return p;
  }

  LevyParams with_mass(double m) const { return LevyParams{m, a, b}; }
};

using AtomId = std::uint64_t;

struct CrmEntry {
  double jump;
  AtomId atom;

  friend bool operator==(const CrmEntry&, const CrmEntry&) = default;
};

/// Finitely many (jump, atom) pairs standing for a CRM above `threshold`.
struct CrmState {
  std::vector<CrmEntry> entries;
  double threshold = 0.0;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }

  double total_mass() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.jump;
    return s;
  }

  /// Throws if a jump is not above the threshold or an atom repeats.
  void validate() const {
    if (!(threshold >= 0.0)) throw std::invalid_argument("CrmState: negative threshold");
    std::unordered_set<AtomId> seen;
    for (const auto& e : entries) {
      if (!(e.jump > threshold) || !std::isfinite(e.jump))
        throw std::invalid_argument("CrmState: jump " + std::to_string(e.jump) +
                                    " not above threshold");
      if (!seen.insert(e.atom).second)
        throw std::invalid_argument("CrmState: duplicate atom " + std::to_string(e.atom));
    }
  }

  friend bool operator==(const CrmState&, const CrmState&) = default;
};

struct NrmWeight {
  double probability;
  AtomId atom;
};

using NrmWeights = std::vector<NrmWeight>;

namespace detail {

inline void require_nonnegative(double x, const char* what) {
  if (!(x >= 0.0) || std::isnan(x))
    throw std::invalid_argument(std::string(what) + " must be nonnegative");
}

// Upper incomplete gamma at negative order, Gamma(-a, x) for 0 < a < 1, from
// Gamma(-a, x) = (x^{-a} e^{-x} - Gamma(1 - a, x)) / a.
inline double upper_gamma_negative_order(double a, double x) {
  if (x > 740.0) return 0.0;
  const double lead = std::exp(-a * std::log(x) - x);
  const double upper = boost::math::tgamma(1.0 - a, x);
  return (lead - upper) / a;
}

// M-free integral over (L, inf) of e^{-vt} rho(t), by quadrature in u = log(t/L).
inline double tail_unit_quadrature(double a, double b, double L, double v) {
  const double c = b + v;
  auto f = [&](double u) {
    const double t = L * std::exp(u);
    return std::exp(-c * t - a * std::log(t));
  };
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, 0.0, std::numeric_limits<double>::infinity(), 20, 1e-13, &err);
}

}  // namespace detail

/// log rho(t) + log M, valid for both kinds.
inline double log_intensity(const LevyParams& p, double t) {
  return std::log(p.mass) - p.b * t - (1.0 + p.a) * std::log(t);
}

/// M e^{-bt} t^{-(1+a)}; only defined for the NGG kind.
inline double levy_density(const LevyParams& p, double t) {
  p.validate();
  if (p.kind() == ProcessKind::kDp)
    throw unsupported_operation("levy_density: not defined for the DP kind");
  if (!(t > 0.0)) throw std::invalid_argument("levy_density: t must be positive");
  return p.mass * std::exp(-p.b * t) * std::pow(t, -(1.0 + p.a));
}

/// Unit-mass Laplace exponent: integral over (0, inf) of (1 - e^{-vt}) rho(t).
inline double laplace_exponent_unit(double a, double b, double v) {
  detail::require_nonnegative(v, "laplace_exponent: v");
  if (a == 0.0) return std::log1p(v / b);
  // (b+v)^a - b^a written as b^a expm1(a log1p(v/b)) to survive small a.
  return boost::math::tgamma(1.0 - a) * std::pow(b, a) *
         std::expm1(a * std::log1p(v / b)) / a;
}

inline double laplace_exponent(const LevyParams& p, double v) {
  p.validate();
  return p.mass * laplace_exponent_unit(p.a, p.b, v);
}

namespace detail {

// Termwise integral over (0, L) of e^{-bt} - e^{-(b+v)t} against t^{-1-a}.
// Accurate to rounding for (b+v)L up to a few units.
inline double partial_exponent_series(double a, double b, double v, double L) {
  const double log_ratio = std::log1p(v / b);
  double sum = 0.0;
  double bl_pow = 1.0;  // (bL)^n / n!
  for (int n = 1; n < 80; ++n) {
    bl_pow *= b * L / n;
    // (c^n - b^n) L^n / n! with c = b + v, signed (-1)^{n+1}.
    const double diff = bl_pow * std::expm1(n * log_ratio);
    const double term = ((n % 2) ? diff : -diff) / (n - a);
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return sum * std::pow(L, -a);
}

}  // namespace detail

/// Unit-mass integral over (0, L) of (1 - e^{-vt}) rho(t).
///
/// The stretch (0, min(L, 2/(b+v))) is integrated termwise from the power
/// series of e^{-bt} - e^{-(b+v)t}, which handles the t^{-a} singularity
/// exactly. Anything beyond is smooth and goes to adaptive Gauss-Kronrod in
/// log t.
inline double partial_exponent_unit(double a, double b, double v, double L) {
  detail::require_nonnegative(v, "partial_exponent: v");
  detail::require_nonnegative(L, "partial_exponent: L");
  if (v == 0.0 || L == 0.0) return 0.0;
  if (std::isinf(L)) return laplace_exponent_unit(a, b, v);
  const double split = std::min(L, 2.0 / (b + v));
  double total = detail::partial_exponent_series(a, b, v, split);
  if (L > split) {
    auto f = [&](double u) {
      const double t = std::exp(u);
      return -std::expm1(-v * t) * std::exp(-b * t - a * u);
    };
    double err = 0.0;
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        f, std::log(split), std::log(L), 15, 1e-13, &err);
  }
  return total;
}

inline double partial_exponent(const LevyParams& p, double v, double L) {
  p.validate();
  return p.mass * partial_exponent_unit(p.a, p.b, v, L);
}

/// Unit-mass integral over (L, inf) of e^{-vt} rho(t).
inline double tail_mass_unit(double a, double b, double L, double v) {
  if (!(L > 0.0)) throw std::invalid_argument("tail_mass: L must be positive");
  detail::require_nonnegative(v, "tail_mass: v");
  const double c = b + v;
  const double x = c * L;
  if (a == 0.0) return x > 740.0 ? 0.0 : boost::math::expint(1, x);
  // The recurrence loses about log10(1/a) digits; very small a goes to quadrature.
  if (a < 1e-4) return detail::tail_unit_quadrature(a, b, L, v);
  return std::pow(c, a) * detail::upper_gamma_negative_order(a, x);
}

inline double tail_mass(const LevyParams& p, double L, double v) {
  p.validate();
  return p.mass * tail_mass_unit(p.a, p.b, L, v);
}

/// Unit-mass integral over (L, inf) of t e^{-vt} rho(t), the expected
/// total of the jumps above L.
inline double tail_first_moment_unit(double a, double b, double L, double v) {
  const double c = b + v;
  const double s = 1.0 - a;
  return std::pow(c, -s) * boost::math::tgamma(s, c * L);
}

/// Expected total mass M Gamma(1-a) b^{a-1} of the untruncated CRM.
inline double mean_total_mass(const LevyParams& p) {
  p.validate();
  return p.mass * boost::math::tgamma(1.0 - p.a) * std::pow(p.b, p.a - 1.0);
}

inline NrmWeights normalize(const CrmState& crm) {
  if (crm.empty()) throw std::invalid_argument("normalize: empty CrmState");
  const double total = crm.total_mass();
  if (!(total > 0.0)) throw std::invalid_argument("normalize: total mass must be positive");
  NrmWeights out;
  out.reserve(crm.size());
  for (const auto& e : crm.entries) out.push_back({e.jump / total, e.atom});
  return out;
}

}  // namespace dhnrm
