// Apache License, Version 2.0, refer to LICENSE.txt

// Joint-distribution test: forward draws of (latents, words) against a
// chain that alternates a Gibbs sweep with redrawing the words.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "dhnrm/dtm.hpp"
#include "dhnrm/synthesize.hpp"

namespace dhnrm {

struct GewekeConfig {
  Hyper hyper;
  std::size_t epochs = 2;
  std::size_t docs_per_epoch = 2;
  std::size_t doc_length = 5;
  long forward_draws = 100000;
  long gibbs_sweeps = 220000;  // per chain, after burn-in
  long burnin = 1000;
  int chains = 4;
  int batches = 50;  // per chain, for batch-means variance

  static GewekeConfig tiny() {
    GewekeConfig c;
    Hyper& h = c.hyper;
    h.kind = ProcessKind::kNgg;
    h.a = 0.5;
    h.b = 1.0;
    h.q = 0.5;
    h.doc_mass = 1.0;
    h.gamma = 0.5;
    h.V = 5;
    h.truncation = 0.05;
    h.sample_mass = true;
    h.mass_prior = {10.0, 2.0};
    h.m0 = 5.0;
    return c;
  }
};

inline std::vector<std::string> geweke_stat_names(std::size_t epochs) {
  std::vector<std::string> n{"total_tables", "mean_allocated_jump", "alive_topics", "first_topic_entropy",
                             "epoch0_mass"};
  for (std::size_t m = 0; m < epochs; ++m) n.push_back("v_top_" + std::to_string(m));
  return n;
}

inline std::vector<double> geweke_stats(const DtmModel& model) {
  std::vector<double> s;
  long tables = 0;
  for (const auto& d : model.docs())
    for (const auto& [k, t] : d.tables) tables += t;
  s.push_back(static_cast<double>(tables));
  double jumps = 0.0;
  for (const auto& [id, t] : model.topics()) jumps += t.jump;
  s.push_back(model.topics().empty() ? 0.0 : jumps / static_cast<double>(model.topics().size()));
  s.push_back(static_cast<double>(model.topics().size()));
  double ent = 0.0;
  const auto& d0 = model.docs().front();
  if (!d0.z.empty()) {
    const Topic& t = model.topics().at(d0.z.front());
    for (int c : t.words)
      if (c > 0) {
        const double p = static_cast<double>(c) / static_cast<double>(t.total);
        ent -= p * std::log(p);
      }
  }
  s.push_back(ent);
  s.push_back(model.epochs().front().mass);
  for (const auto& e : model.epochs()) s.push_back(e.v_top);
  return s;
}

struct GewekeStat {
  std::string name;
  double forward_mean = 0.0, forward_var = 0.0;
  double gibbs_mean = 0.0, gibbs_var = 0.0;
  double gibbs_ess = 0.0;
  double z = 0.0;
};

struct GewekeReport {
  std::vector<GewekeStat> stats;
  long forward_rejected = 0;  // forward draws with an empty epoch measure
  std::string chain_error;    // first failure among the Gibbs chains
  double max_abs_z() const {
    double m = 0.0;
    for (const auto& s : stats) m = std::max(m, std::abs(s.z));
    return m;
  }
};

namespace detail {

inline Corpus geweke_shell(const GewekeConfig& c) {
  Corpus shell;
  for (std::size_t w = 0; w < c.hyper.V; ++w) shell.vocabulary.push_back("w" + std::to_string(w));
  shell.num_epochs = c.epochs;
  for (std::size_t m = 0; m < c.epochs; ++m)
    for (std::size_t d = 0; d < c.docs_per_epoch; ++d)
      shell.documents.push_back({shell.documents.size() + 1, m, {{0, static_cast<int>(c.doc_length)}}});
  return shell;
}

inline std::vector<std::size_t> geweke_epochs(const GewekeConfig& c) {
  std::vector<std::size_t> e;
  for (std::size_t m = 0; m < c.epochs; ++m) e.insert(e.end(), c.docs_per_epoch, m);
  return e;
}

// Draws one forward sample into `model`; returns the number of rejected draws.
inline long forward_draw(const GewekeConfig& c, DtmModel& model, Rng& rng) {
  long rejected = 0;
  for (;;) {
    try {
      auto syn = synthesize(c.hyper, c.epochs, c.docs_per_epoch, c.doc_length, rng, c.hyper.truncation);
      model.restore(snapshot_from_truth(syn.truth, c.hyper, geweke_epochs(c)));
      return rejected;
    } catch (const std::runtime_error&) {
      ++rejected;
    }
  }
}

struct ChainOutput {
  std::vector<std::vector<double>> batch_means;  // [stat][batch]
  std::vector<double> sum, sumsq;
  long n = 0;
  std::string error;
};

inline ChainOutput run_gibbs_chain_or_throw(const GewekeConfig& c, Rng rng) {
  const Corpus shell = geweke_shell(c);
  DtmModel model(shell, c.hyper);
  forward_draw(c, model, rng);
  for (long i = 0; i < c.burnin; ++i) {
    model.sweep(rng);
    model.resample_words(rng);
  }
  const std::size_t ns = geweke_stat_names(c.epochs).size();
  ChainOutput out;
  out.sum.assign(ns, 0.0);
  out.sumsq.assign(ns, 0.0);
  out.batch_means.assign(ns, {});
  const long per_batch = std::max<long>(1, c.gibbs_sweeps / c.batches);
  std::vector<double> acc(ns, 0.0);
  long in_batch = 0;
  for (long i = 0; i < per_batch * c.batches; ++i) {
    model.sweep(rng);
    model.resample_words(rng);
    const auto s = geweke_stats(model);
    for (std::size_t k = 0; k < ns; ++k) {
      out.sum[k] += s[k];
      out.sumsq[k] += s[k] * s[k];
      acc[k] += s[k];
    }
    ++out.n;
    if (++in_batch == per_batch) {
      for (std::size_t k = 0; k < ns; ++k) {
        out.batch_means[k].push_back(acc[k] / static_cast<double>(per_batch));
        acc[k] = 0.0;
      }
      in_batch = 0;
    }
  }
  return out;
}

// A chain that breaks down is reported, not propagated.
inline ChainOutput run_gibbs_chain(const GewekeConfig& c, Rng rng) {
  try {
    return run_gibbs_chain_or_throw(c, rng);
  } catch (const std::exception& e) {
    ChainOutput out;
    out.error = e.what();
    return out;
  }
}

}  // namespace detail

inline GewekeReport run_geweke(const GewekeConfig& c, Rng& rng) {
  c.hyper.validate();
  const auto names = geweke_stat_names(c.epochs);
  const std::size_t ns = names.size();
  GewekeReport rep;

  // forward draws
  std::vector<double> fs(ns, 0.0), fss(ns, 0.0);
  {
    const Corpus shell = detail::geweke_shell(c);
    DtmModel model(shell, c.hyper);
    Rng frng = rng.substream(1);
    for (long i = 0; i < c.forward_draws; ++i) {
      rep.forward_rejected += detail::forward_draw(c, model, frng);
      const auto s = geweke_stats(model);
      for (std::size_t k = 0; k < ns; ++k) {
        fs[k] += s[k];
        fss[k] += s[k] * s[k];
      }
    }
  }

  // successive-conditional chains, one thread each
  std::vector<detail::ChainOutput> chains(static_cast<std::size_t>(c.chains));
  {
    std::vector<std::thread> workers;
    for (int ch = 0; ch < c.chains; ++ch)
      workers.emplace_back([&, ch] { chains[ch] = detail::run_gibbs_chain(c, rng.substream(2, ch)); });
    for (auto& w : workers) w.join();
  }

  for (const auto& ch : chains)
    if (!ch.error.empty() && rep.chain_error.empty()) rep.chain_error = ch.error;
  const double inf = std::numeric_limits<double>::infinity();
  const double nf = static_cast<double>(c.forward_draws);
  for (std::size_t k = 0; k < ns; ++k) {
    GewekeStat st;
    st.name = names[k];
    st.forward_mean = fs[k] / nf;
    st.forward_var = std::max(0.0, fss[k] / nf - st.forward_mean * st.forward_mean);
    if (!rep.chain_error.empty()) {
      st.z = inf;
      rep.stats.push_back(st);
      continue;
    }
    double sum = 0.0, sumsq = 0.0, n = 0.0, var_of_mean = 0.0;
    for (const auto& ch : chains) {
      sum += ch.sum[k];
      sumsq += ch.sumsq[k];
      n += static_cast<double>(ch.n);
    }
    st.gibbs_mean = sum / n;
    st.gibbs_var = std::max(0.0, sumsq / n - st.gibbs_mean * st.gibbs_mean);
    // batch means pooled over chains, around the pooled mean
    std::size_t nb = 0;
    double bss = 0.0;
    for (const auto& ch : chains)
      for (double b : ch.batch_means[k]) {
        bss += (b - st.gibbs_mean) * (b - st.gibbs_mean);
        ++nb;
      }
    var_of_mean = nb > 1 ? bss / static_cast<double>(nb - 1) / static_cast<double>(nb) : 0.0;
    st.gibbs_ess = var_of_mean > 0.0 ? st.gibbs_var / var_of_mean : n;
    const double se = std::sqrt(st.forward_var / nf + var_of_mean);
    if (!std::isfinite(st.gibbs_mean) || !std::isfinite(se)) st.z = inf;
    else st.z = se > 0.0 ? (st.gibbs_mean - st.forward_mean) / se : 0.0;
    rep.stats.push_back(st);
  }
  return rep;
}

}  // namespace dhnrm
