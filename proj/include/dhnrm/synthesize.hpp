// Apache License, Version 2.0, refer to LICENSE.txt

// Forward simulation of the dependent topic model: epoch CRMs above a
// truncation, q-scaled inheritance, per-document seating by the normalized
// predictive, words from Dirichlet topics.

#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "dhnrm/corpus.hpp"
#include "dhnrm/dtm.hpp"
#include "dhnrm/gibbs_type.hpp"
#include "dhnrm/measures.hpp"
#include "dhnrm/random.hpp"
#include "dhnrm/slice_sampler.hpp"

namespace dhnrm {

struct GroundTruth {
  double truncation = 0.0;
  std::vector<double> masses;                  // per epoch
  std::vector<double> discarded_mass;          // expected mass below truncation, per epoch
  std::vector<std::vector<CrmEntry>> jumps;    // every atom, per birth epoch
  std::vector<double> v_top;                   // Gamma(N'_m, T'_m) draws
  std::vector<std::vector<int>> tokens;        // generation order
  std::vector<std::vector<AtomId>> z;
  std::vector<std::map<AtomId, long>> tables;  // per document
  std::map<AtomId, std::vector<double>> theta;  // used topics only
  AtomId next_atom = 0;
};

struct Synthetic {
  Corpus corpus;
  GroundTruth truth;
};

/// Default truncation: 1e-8 of the expected epoch total mass.
inline double default_truncation(const Hyper& h) {
  const double m = h.sample_mass ? h.mass_prior.shape / h.mass_prior.rate : h.m0;
  return 1e-8 * mean_total_mass(h.epoch_params(m));
}

/// `truncation` <= 0 selects default_truncation. h.V must be set.
inline Synthetic synthesize(const Hyper& h, std::size_t epochs, std::size_t docs_per_epoch,
                            std::size_t doc_length, Rng& rng, double truncation = 0.0) {
  h.validate();
  if (epochs < 1) throw std::invalid_argument("synthesize: need at least one epoch");
  const double L0 = truncation > 0.0 ? truncation : default_truncation(h);
  Synthetic out;
  GroundTruth& g = out.truth;
  g.truncation = L0;
  const std::size_t V = h.V;
  std::vector<double> qpow(epochs + 1, 1.0);
  for (std::size_t i = 1; i <= epochs; ++i) qpow[i] = qpow[i - 1] * h.q;

  GibbsTypePredictive pred(h.doc_params());
  std::vector<long> epoch_tables(epochs, 0);

  for (std::size_t m = 0; m < epochs; ++m) {
    const double mass = h.sample_mass ? gamma(rng, h.mass_prior.shape, h.mass_prior.rate) : h.m0;
    g.masses.push_back(mass);
    g.discarded_mass.push_back(mass * tail_first_moment_unit(h.eff_a(), h.b, 0.0, 0.0) -
                               mass * tail_first_moment_unit(h.eff_a(), h.b, L0, 0.0));
    CrmState crm = sample_new_jumps(h.epoch_params(mass), 0.0, L0, rng, g.next_atom);
    g.jumps.push_back(crm.entries);
    std::vector<AtomId> atoms;
    std::vector<double> weights;
    for (std::size_t j = 0; j <= m; ++j)
      for (const auto& e : g.jumps[j]) {
        atoms.push_back(e.atom);
        weights.push_back(qpow[m - j] * e.jump);
      }
    double total = 0.0;
    for (double w : weights) total += w;
    if (docs_per_epoch > 0 && doc_length > 0 && !(total > 0.0))
      throw std::runtime_error("synthesize: epoch " + std::to_string(m) + " has no jumps above the truncation");

    for (std::size_t d = 0; d < docs_per_epoch; ++d) {
      std::vector<long> sizes;
      std::vector<AtomId> dish;
      std::vector<int> toks;
      std::vector<AtomId> zs;
      std::map<AtomId, long> tables;
      for (std::size_t i = 0; i < doc_length; ++i) {
        const std::size_t c = pred.seat(sizes, static_cast<long>(i), rng);
        if (c == sizes.size()) {
          sizes.push_back(0);
          dish.push_back(atoms[categorical(rng, weights)]);
          ++tables[dish.back()];
        }
        ++sizes[c];
        const AtomId k = dish[c];
        auto it = g.theta.find(k);
        if (it == g.theta.end()) {
          std::vector<double> th(V);
          double s = 0.0;
          for (auto& x : th) s += (x = gamma(rng, h.gamma, 1.0));
          for (auto& x : th) x /= s;
          it = g.theta.emplace(k, std::move(th)).first;
        }
        toks.push_back(static_cast<int>(categorical(rng, it->second)));
        zs.push_back(k);
      }
      for (const auto& [k, t] : tables) epoch_tables[m] += t;
      std::map<int, int> counts;
      for (int w : toks) ++counts[w];
      Document doc{out.corpus.documents.size() + 1, m, {}};
      for (auto [w, c] : counts) doc.entries.emplace_back(w, c);
      out.corpus.documents.push_back(std::move(doc));
      g.tokens.push_back(std::move(toks));
      g.z.push_back(std::move(zs));
      g.tables.push_back(std::move(tables));
    }
    g.v_top.push_back(epoch_tables[m] > 0 ? gamma(rng, static_cast<double>(epoch_tables[m]), total) : 0.0);
  }
  out.corpus.num_epochs = epochs;
  for (std::size_t w = 0; w < V; ++w) out.corpus.vocabulary.push_back("w" + std::to_string(w));
  return out;
}

/// log p(words | z, theta) of the ground truth.
inline double complete_data_loglik(const GroundTruth& g) {
  double ll = 0.0;
  for (std::size_t d = 0; d < g.tokens.size(); ++d)
    for (std::size_t i = 0; i < g.tokens[d].size(); ++i)
      ll += std::log(g.theta.at(g.z[d][i])[static_cast<std::size_t>(g.tokens[d][i])]);
  return ll;
}

/// Sampler state equal to the ground truth, tokens kept in generation order.
/// Document auxiliaries start at 1.
inline DtmModel::Snapshot snapshot_from_truth(const GroundTruth& g, const Hyper& h,
                                              const std::vector<std::size_t>& doc_epochs) {
  DtmModel::Snapshot s;
  std::map<AtomId, long> tilde;
  for (const auto& t : g.tables)
    for (const auto& [k, c] : t) tilde[k] += c;
  s.epochs.resize(g.jumps.size());
  for (std::size_t j = 0; j < g.jumps.size(); ++j) {
    s.epochs[j].mass = g.masses[j];
    s.epochs[j].v_top = g.v_top[j];
    for (const auto& e : g.jumps[j]) {
      if (tilde.count(e.atom)) {
        Topic t;
        t.id = e.atom;
        t.birth = j;
        t.jump = e.jump;
        t.words.assign(h.V, 0);
        t.tilde_n = tilde[e.atom];
        s.topics.emplace(e.atom, std::move(t));
      } else {
        s.epochs[j].unalloc.push_back(e);
      }
    }
  }
  for (std::size_t d = 0; d < g.tokens.size(); ++d) {
    DocState ds;
    ds.source = d;
    ds.epoch = doc_epochs[d];
    ds.tokens = g.tokens[d];
    ds.z = g.z[d];
    for (std::size_t i = 0; i < ds.z.size(); ++i) {
      ++ds.n[ds.z[i]];
      Topic& t = s.topics.at(ds.z[i]);
      ++t.words[static_cast<std::size_t>(ds.tokens[i])];
      ++t.total;
    }
    ds.tables = g.tables[d];
    s.docs.push_back(std::move(ds));
  }
  s.next_atom = g.next_atom;
  return s;
}

}  // namespace dhnrm
