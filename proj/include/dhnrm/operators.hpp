// Apache License, Version 2.0, refer to LICENSE.txt

// Operations on CRM jump representations: superposition, subsampling (explicit
// thinning and its integrated, jump-scaling form), point transition, and the
// dependent chain built from them.

#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "dhnrm/measures.hpp"
#include "dhnrm/random.hpp"

namespace dhnrm {

/// Maps an atom to its replacement. The Rng passed in is a substream
/// private to (transition step, atom), so results do not depend on the
/// order in which atoms are visited.
using TransitionKernel = std::function<AtomId(AtomId, Rng&)>;

inline TransitionKernel identity_kernel() {
  return [](AtomId a, Rng&) { return a; };
}

struct ChainSpec {
  std::vector<CrmState> epochs;
  double q = 1.0;
  TransitionKernel kernel = identity_kernel();
  Rng rng{0};
};

namespace detail {
inline void require_probability(double q, const char* what) {
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument(std::string(what) + ": q outside [0, 1]");
}
}  // namespace detail

inline CrmState superpose(const std::vector<CrmState>& parts) {
  CrmState out;
  std::unordered_set<AtomId> seen;
  bool first = true;
  for (const auto& p : parts) {
    for (const auto& e : p.entries) {
      if (!seen.insert(e.atom).second)
        throw std::invalid_argument("superpose: duplicate atom " + std::to_string(e.atom));
      out.entries.push_back(e);
    }
    if (!p.empty()) {
      out.threshold = first ? p.threshold : std::min(out.threshold, p.threshold);
      first = false;
    }
  }
  return out;
}

inline CrmState superpose(const CrmState& a, const CrmState& b) { return superpose({a, b}); }

/// Keeps each entry independently with probability q.
inline CrmState subsample_explicit(const CrmState& crm, double q, Rng& rng) {
  detail::require_probability(q, "subsample_explicit");
  CrmState out;
  out.threshold = crm.threshold;
  for (const auto& e : crm.entries)
    if (bernoulli(rng, q)) out.entries.push_back(e);
  return out;
}

/// Every jump scaled by q; jumps scaled to zero are dropped.
inline CrmState subsample_integrated(const CrmState& crm, double q) {
  detail::require_probability(q, "subsample_integrated");
  CrmState out;
  out.threshold = q * crm.threshold;
  if (q == 0.0) return out;
  out.entries.reserve(crm.size());
  for (const auto& e : crm.entries) out.entries.push_back({q * e.jump, e.atom});
  return out;
}

/// Jumps kept, atoms replaced. `step` keys the kernel randomness.
inline CrmState point_transition(const CrmState& crm, const TransitionKernel& kernel,
                                 const Rng& rng, std::uint64_t step = 0) {
  CrmState out = crm;
  for (auto& e : out.entries) {
    Rng sub = rng.substream(step, e.atom);
    e.atom = kernel(e.atom, sub);
  }
  return out;
}

namespace detail {
inline void require_disjoint(const std::vector<CrmState>& epochs) {
  std::unordered_set<AtomId> seen;
  for (const auto& c : epochs)
    for (const auto& e : c.entries)
      if (!seen.insert(e.atom).second)
        throw std::invalid_argument("chain: atom " + std::to_string(e.atom) +
                                    " appears in two epochs");
}
}  // namespace detail

/// mu'_1 = mu_1, mu'_m = T(S^q(mu'_{m-1})) + mu_m. Kernel randomness for the
/// move into epoch m (0-based) uses step m.
inline std::vector<CrmState> build_chain_recursive(const ChainSpec& spec) {
  detail::require_probability(spec.q, "build_chain_recursive");
  detail::require_disjoint(spec.epochs);
  std::vector<CrmState> out;
  for (std::size_t m = 0; m < spec.epochs.size(); ++m) {
    if (m == 0) {
      out.push_back(spec.epochs[0]);
      continue;
    }
    CrmState carried = point_transition(subsample_integrated(out.back(), spec.q), spec.kernel,
                                        spec.rng, m);
    out.push_back(superpose(carried, spec.epochs[m]));
  }
  return out;
}

/// Epoch m holds (q^{m-j} J, T^{m-j}(atom)) for every (J, atom) of epoch j <= m.
inline std::vector<CrmState> build_chain_closed_form(const ChainSpec& spec) {
  detail::require_probability(spec.q, "build_chain_closed_form");
  detail::require_disjoint(spec.epochs);
  std::vector<CrmState> out(spec.epochs.size());
  for (std::size_t m = 0; m < spec.epochs.size(); ++m) {
    std::vector<CrmState> parts;
    for (std::size_t j = 0; j <= m; ++j) {
      const double scale = std::pow(spec.q, static_cast<double>(m - j));
      CrmState part;
      part.threshold = scale * spec.epochs[j].threshold;
      if (scale > 0.0) {
        for (const auto& e : spec.epochs[j].entries) {
          AtomId atom = e.atom;
          for (std::size_t step = j + 1; step <= m; ++step) {
            Rng sub = spec.rng.substream(step, atom);
            atom = spec.kernel(atom, sub);
          }
          part.entries.push_back({scale * e.jump, atom});
        }
      }
      parts.push_back(std::move(part));
    }
    out[m] = superpose(parts);
  }
  return out;
}

}  // namespace dhnrm
