// Apache License, Version 2.0, refer to LICENSE.txt

// Train / evaluate driver shared by the command line and the benchmarks.

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dhnrm/corpus.hpp"
#include "dhnrm/dtm.hpp"
#include "dhnrm/random.hpp"

namespace dhnrm {

struct TrainOptions {
  long burnin = 2000;
  long samples = 200;
  long eval_every = 10;  // over collected sweeps
  std::uint64_t seed = 1;
};

struct TrainResult {
  double train_loglik = 0.0;
  std::vector<double> heldout_per_doc;  // averaged over evaluations
  double heldout_total = 0.0;
  long evaluations = 0;
  std::size_t topics = 0;
};

/// Streams: 1 drives the sampler, 2 the held-out scoring.
inline Rng train_stream(std::uint64_t seed) { return Rng(seed, 1); }
inline Rng eval_stream(std::uint64_t seed, long iteration) {
  return Rng(seed, 2).substream(static_cast<std::uint64_t>(iteration));
}

using SweepHook = std::function<void(const DtmModel&)>;

/// Held-out scores are averaged in log space over every `eval_every`-th
/// collected sweep; the final sweep is always scored.
inline TrainResult train_model(DtmModel& model, Rng& rng, const Corpus* test, const TrainOptions& o,
                               const SweepHook& hook = {}) {
  TrainResult r;
  if (test) r.heldout_per_doc.assign(test->documents.size(), 0.0);
  const long total = o.burnin + o.samples;
  for (long it = 0; it < total; ++it) {
    model.sweep(rng);
    if (hook) hook(model);
    const long collected = it - o.burnin;
    const bool last = it + 1 == total;
    if (test && collected >= 0 && (last || (o.eval_every > 0 && collected % o.eval_every == 0))) {
      Rng er = eval_stream(o.seed, model.iteration());
      const auto ll = model.heldout_loglik(*test, er);
      for (std::size_t d = 0; d < ll.size(); ++d) r.heldout_per_doc[d] += ll[d];
      ++r.evaluations;
    }
  }
  if (r.evaluations > 0)
    for (auto& x : r.heldout_per_doc) x /= static_cast<double>(r.evaluations);
  for (double x : r.heldout_per_doc) r.heldout_total += x;
  r.train_loglik = model.train_loglik();
  r.topics = model.topics().size();
  return r;
}

inline TrainResult train_fresh(const Corpus& train, const Corpus* test, const Hyper& h, const TrainOptions& o,
                               const SweepHook& hook = {}) {
  DtmModel model(train, h);
  Rng rng = train_stream(o.seed);
  model.initialize(rng);
  return train_model(model, rng, test, o, hook);
}

/// Every document moved into epoch 0: one shared pool.
inline Corpus pooled(const Corpus& c) {
  Corpus p = c;
  p.num_epochs = 1;
  for (auto& d : p.documents) d.epoch = 0;
  return p;
}

}  // namespace dhnrm
