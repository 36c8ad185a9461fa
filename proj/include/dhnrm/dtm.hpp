// Apache License, Version 2.0, refer to LICENSE.txt

// Dependent hierarchical NGG topic model over epochs.
//
// Epoch m owns a CRM mu_m with every jump above the truncation L0
// represented. The base of the documents at epoch m is
//   mu'_m = sum_{j <= m} q^{m-j} mu_j,   r_mk = J'_mk / T'_m,
// and each document draws an NGG (or DP) over the atoms of mu'_m. Topics
// are collapsed Dirichlet-multinomials whose counts accumulate across
// epochs.
//
// Sampler state per document: allocations z, topic counts n_k, table
// counts t_k and the auxiliary v. Per epoch: the CRM (topics born there plus
// unallocated jumps), its mass M0 and the auxiliary v_top that absorbs the
// 1/T'^{N'} normalizer. Word allocations integrate the tables out through
// generalized Stirling numbers.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "dhnrm/corpus.hpp"
#include "dhnrm/measures.hpp"
#include "dhnrm/random.hpp"
#include "dhnrm/slice_sampler.hpp"
#include "dhnrm/stirling.hpp"

namespace dhnrm {

struct Hyper {
  ProcessKind kind = ProcessKind::kNgg;
  double a = 0.2;  // forced to 0 for the DP kind
  double b = 1.0;
  double m0 = 1.0;         // epoch-level mass, initial value
  MassPrior mass_prior{};  // prior on the epoch-level masses
  bool sample_mass = true;
  double doc_mass = 1.0;  // document-level mass, shared by every epoch
  double q = 0.5;
  double gamma = 0.1;  // topic Dirichlet smoothing
  std::size_t V = 0;
  double truncation = 1e-4;  // L0
  bool skip_jump_floor = false;  // mutation hook for the Geweke harness

  double eff_a() const { return kind == ProcessKind::kDp ? 0.0 : a; }
  LevyParams epoch_params(double mass) const { return LevyParams{mass, eff_a(), b}; }
  LevyParams doc_params() const { return LevyParams{doc_mass, eff_a(), b}; }

  void validate() const {
    if (kind == ProcessKind::kNgg && !(a > 0.0 && a < 1.0))
      throw std::invalid_argument("hyper: a must lie in (0, 1) for NGG");
    if (!(b > 0.0)) throw std::invalid_argument("hyper: b must be positive");
    if (!(m0 > 0.0) || !(doc_mass > 0.0)) throw std::invalid_argument("hyper: masses must be positive");
    if (!(mass_prior.shape > 0.0 && mass_prior.rate > 0.0))
      throw std::invalid_argument("hyper: mass prior must have positive shape and rate");
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("hyper: q must lie in [0, 1]");
    if (!(gamma > 0.0)) throw std::invalid_argument("hyper: gamma must be positive");
    if (V < 1) throw std::invalid_argument("hyper: V must be at least 1");
    if (!(truncation > 0.0)) throw std::invalid_argument("hyper: truncation must be positive");
  }
};

struct Topic {
  AtomId id = 0;
  std::size_t birth = 0;
  double jump = 0.0;
  std::vector<int> words;
  long total = 0;
  long tilde_n = 0;  // tables across all epochs
};

struct DocState {
  std::size_t source = 0;  // index into the corpus
  std::size_t epoch = 0;
  std::vector<int> tokens;
  std::vector<AtomId> z;
  std::map<AtomId, long> n;
  std::map<AtomId, long> tables;
  double v = 1.0;
};

struct EpochState {
  double mass = 1.0;
  double v_top = 0.0;
  std::vector<CrmEntry> unalloc;
  double unalloc_sum = 0.0;
};

/// Weights over candidate topics for one token (token already removed).
struct AllocationWeights {
  std::vector<AtomId> atoms;
  std::vector<double> weights;  // includes the word likelihood
  double new_weight = 0.0;      // all unallocated atoms together
};

inline double collapsed_word_prob(const Topic& t, int w, double gamma, std::size_t V) {
  if (w < 0 || static_cast<std::size_t>(w) >= V)
    throw std::out_of_range("collapsed_word_prob: word index out of range");
  const double c = t.words.empty() ? 0.0 : t.words[static_cast<std::size_t>(w)];
  return (c + gamma) / (static_cast<double>(t.total) + static_cast<double>(V) * gamma);
}

class DtmModel {
 public:
  static constexpr const char* kCheckpointMagic = "dhnrm-checkpoint";
  static constexpr int kCheckpointVersion = 1;

  DtmModel(const Corpus& corpus, const Hyper& h) : h_(h), stirling_(h.eff_a()) {
    h_.V = corpus.vocab_size();
    h_.validate();
    if (h_.kind == ProcessKind::kDp) h_.a = 0.0;
    epochs_.resize(std::max<std::size_t>(corpus.num_epochs, 1));
    for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
      DocState s;
      s.source = d;
      s.epoch = corpus.documents[d].epoch;
      s.tokens = corpus.documents[d].tokens();
      docs_.push_back(std::move(s));
    }
    g1a_ = boost::math::tgamma(1.0 - h_.eff_a());
    refresh_powers();
  }

  const Hyper& hyper() const { return h_; }
  std::size_t num_epochs() const { return epochs_.size(); }
  const std::vector<DocState>& docs() const { return docs_; }
  const std::map<AtomId, Topic>& topics() const { return topics_; }
  const std::vector<EpochState>& epochs() const { return epochs_; }
  long iteration() const { return iteration_; }

  /// Prior draw of the epoch CRMs, then sequential allocation of every token.
  void initialize(Rng& rng) {
    for (auto& e : epochs_) {
      e.mass = h_.m0;
      set_unallocated(e, sample_new_jumps(h_.epoch_params(e.mass), 0.0, h_.truncation, rng, next_atom_));
    }
    refresh_totals();
    for (auto& d : docs_) {
      d.z.assign(d.tokens.size(), 0);
      d.n.clear();
      d.v = 1.0;
    }
    for (std::size_t di = 0; di < docs_.size(); ++di) {
      std::map<AtomId, double> cache;
      for (std::size_t i = 0; i < docs_[di].tokens.size(); ++i) place_token(di, i, rng, cache);
    }
    sample_tables(rng);
    iteration_ = 0;
  }

  /// One full Gibbs pass.
  void sweep(Rng& rng) {
    for (std::size_t di = 0; di < docs_.size(); ++di) {
      std::map<AtomId, double> cache;
      for (std::size_t i = 0; i < docs_[di].tokens.size(); ++i) {
        remove_token(di, i, cache);
        place_token(di, i, rng, cache);
      }
    }
    sample_tables(rng);
    for (auto& d : docs_) sample_doc_auxiliary(d, rng);
    sample_epoch_auxiliaries(rng);
    resample_epoch_crms(rng);
    ++iteration_;
  }

  /// Candidate weights for word w in document di; the token must already
  /// be removed. `cache` holds Stirling ratios per topic for this document.
  AllocationWeights allocation_weights(std::size_t di, int w,
                                       std::map<AtomId, double>* cache = nullptr) const {
    const DocState& d = docs_[di];
    const std::size_t m = d.epoch;
    const double wd = doc_weight(d.v);
    const double tp = t_prime_[m];
    AllocationWeights out;
    for (const auto& [id, t] : topics_) {
      if (t.birth > m) continue;
      const double jp = qpow_[m - t.birth] * t.jump;
      if (!(jp > 0.0)) continue;
      const double x = wd * jp / tp;
      auto it = d.n.find(id);
      double ratio;
      if (it == d.n.end()) {
        ratio = x;
      } else if (cache) {
        auto c = cache->find(id);
        if (c == cache->end()) c = cache->emplace(id, stirling_.ratio(it->second, x)).first;
        ratio = c->second;
      } else {
        ratio = stirling_.ratio(it->second, x);
      }
      out.atoms.push_back(id);
      out.weights.push_back(ratio * collapsed_word_prob(t, w, h_.gamma, h_.V));
    }
    out.new_weight = wd * u_prime_[m] / tp / static_cast<double>(h_.V);
    return out;
  }

  /// r_mk over every atom of mu'_m: topics first (id order), then the
  /// unallocated jumps of epochs 0..m.
  std::vector<std::pair<AtomId, double>> inherited_weights(std::size_t m) const {
    std::vector<std::pair<AtomId, double>> r;
    for (const auto& [id, t] : topics_)
      if (t.birth <= m) r.emplace_back(id, qpow_[m - t.birth] * t.jump / t_prime_[m]);
    for (std::size_t j = 0; j <= m; ++j)
      for (const auto& e : epochs_[j].unalloc) r.emplace_back(e.atom, qpow_[m - j] * e.jump / t_prime_[m]);
    return r;
  }

  /// Collapsed log p(words | allocations).
  double train_loglik() const {
    const double vg = static_cast<double>(h_.V) * h_.gamma;
    const double lg = std::lgamma(h_.gamma);
    double ll = 0.0;
    for (const auto& [id, t] : topics_) {
      if (t.total == 0) continue;
      ll += std::lgamma(vg) - std::lgamma(t.total + vg);
      for (int c : t.words)
        if (c > 0) ll += std::lgamma(c + h_.gamma) - lg;
    }
    return ll;
  }

  /// Distinct topics holding words in each epoch.
  std::vector<std::size_t> topics_per_epoch() const {
    std::vector<std::map<AtomId, bool>> seen(epochs_.size());
    for (const auto& d : docs_)
      for (const auto& [k, c] : d.n) seen[d.epoch][k] = true;
    std::vector<std::size_t> out;
    for (const auto& s : seen) out.push_back(s.size());
    return out;
  }

  /// Held-out log-likelihood of `test` by sequential add-in in file order.
  /// Each test document starts empty at v = mean training v of its epoch.
  std::vector<double> heldout_loglik(const Corpus& test, Rng& rng) const {
    if (test.vocab_size() != h_.V)
      throw std::invalid_argument("heldout: vocabulary size differs from the trained model");
    std::vector<double> out;
    for (std::size_t td = 0; td < test.documents.size(); ++td) {
      const auto& doc = test.documents[td];
      if (doc.epoch >= epochs_.size())
        throw std::invalid_argument("heldout: document epoch beyond the trained epochs");
      Rng r = rng.substream(td);
      out.push_back(heldout_doc(doc.epoch, doc.tokens(), r));
    }
    return out;
  }

  /// Throws std::logic_error on any broken invariant.
  void audit() const {
    std::map<AtomId, std::vector<int>> words;
    std::map<AtomId, long> tilde;
    for (const auto& d : docs_) {
      std::map<AtomId, long> n;
      for (std::size_t i = 0; i < d.tokens.size(); ++i) {
        ++n[d.z[i]];
        auto& w = words[d.z[i]];
        if (w.empty()) w.assign(h_.V, 0);
        ++w[static_cast<std::size_t>(d.tokens[i])];
        auto it = topics_.find(d.z[i]);
        if (it == topics_.end()) throw std::logic_error("audit: token on a missing topic");
        if (it->second.birth > d.epoch) throw std::logic_error("audit: topic used before its birth");
      }
      if (n != d.n) throw std::logic_error("audit: document counts disagree with allocations");
      for (const auto& [k, c] : d.n) {
        auto t = d.tables.find(k);
        const long tables = t == d.tables.end() ? 0 : t->second;
        if (tables < 1 || tables > c) throw std::logic_error("audit: table count out of range");
        tilde[k] += tables;
      }
      if (d.tables.size() != d.n.size()) throw std::logic_error("audit: tables on empty dish");
      if (!(d.v > 0.0)) throw std::logic_error("audit: nonpositive document auxiliary");
    }
    for (const auto& [id, t] : topics_) {
      const auto it = words.find(id);
      const long total = it == words.end() ? 0 : std::accumulate(it->second.begin(), it->second.end(), 0L);
      if (total != t.total) throw std::logic_error("audit: topic total disagrees");
      if (it != words.end() && it->second != t.words) throw std::logic_error("audit: topic words disagree");
      if (tilde[id] != t.tilde_n) throw std::logic_error("audit: birth count disagrees with tables");
      if (!(t.jump > 0.0)) throw std::logic_error("audit: nonpositive jump");
    }
    for (std::size_t m = 0; m < epochs_.size(); ++m) {
      double s = 0.0;
      for (const auto& [k, r] : inherited_weights(m)) s += r;
      if (t_prime_[m] > 0.0 && std::abs(s - 1.0) > 1e-12) throw std::logic_error("audit: r does not sum to 1");
    }
  }

  /// Redraws every word given the allocations (topics collapsed).
  void resample_words(Rng& rng) {
    for (auto& [id, t] : topics_) {
      std::fill(t.words.begin(), t.words.end(), 0);
      t.total = 0;
    }
    std::vector<double> p(h_.V);
    for (auto& d : docs_) {
      for (std::size_t i = 0; i < d.tokens.size(); ++i) {
        Topic& t = topics_.at(d.z[i]);
        for (std::size_t w = 0; w < h_.V; ++w) p[w] = t.words[w] + h_.gamma;
        const int w = static_cast<int>(categorical(rng, p));
        d.tokens[i] = w;
        ++t.words[static_cast<std::size_t>(w)];
        ++t.total;
      }
    }
  }

  /// Replaces allocations, tables, jumps and masses wholesale (forward draws).
  struct Snapshot {
    std::map<AtomId, Topic> topics;
    std::vector<EpochState> epochs;
    std::vector<DocState> docs;
    AtomId next_atom = 0;
  };
  void restore(Snapshot s) {
    topics_ = std::move(s.topics);
    epochs_ = std::move(s.epochs);
    docs_ = std::move(s.docs);
    next_atom_ = s.next_atom;
    for (auto& e : epochs_) {
      e.unalloc_sum = 0.0;
      for (const auto& x : e.unalloc) e.unalloc_sum += x.jump;
    }
    refresh_powers();
    refresh_totals();
  }

  // Checkpoint: sections of whitespace-separated fields, doubles in hexfloat.
  std::string checkpoint(const Rng& rng, std::uint64_t vocab_hash) const {
    std::ostringstream os;
    os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    os << "hyper " << to_string(h_.kind) << ' ' << hex(h_.a) << ' ' << hex(h_.b) << ' ' << hex(h_.m0) << ' '
       << hex(h_.mass_prior.shape) << ' ' << hex(h_.mass_prior.rate) << ' ' << h_.sample_mass << ' '
       << hex(h_.doc_mass) << ' ' << hex(h_.q) << ' ' << hex(h_.gamma) << ' ' << h_.V << ' '
       << hex(h_.truncation) << '\n';
    os << "rng " << rng.serialize() << '\n';
    os << "state " << iteration_ << ' ' << next_atom_ << ' ' << vocab_hash << ' ' << docs_.size() << '\n';
    os << "epochs " << epochs_.size() << '\n';
    for (const auto& e : epochs_) {
      os << "epoch " << hex(e.mass) << ' ' << hex(e.v_top) << ' ' << e.unalloc.size();
      for (const auto& x : e.unalloc) os << ' ' << x.atom << ' ' << hex(x.jump);
      os << '\n';
    }
    os << "topics " << topics_.size() << '\n';
    for (const auto& [id, t] : topics_) {
      std::size_t nnz = 0;
      for (int c : t.words) nnz += c > 0;
      os << "topic " << id << ' ' << t.birth << ' ' << hex(t.jump) << ' ' << t.tilde_n << ' ' << t.total
         << ' ' << nnz;
      for (std::size_t w = 0; w < t.words.size(); ++w)
        if (t.words[w] > 0) os << ' ' << w << ':' << t.words[w];
      os << '\n';
    }
    os << "docs " << docs_.size() << '\n';
    for (const auto& d : docs_) {
      os << "doc " << d.source << ' ' << d.epoch << ' ' << hex(d.v) << ' ' << d.tokens.size();
      // allocations as (run length, topic) pairs
      std::vector<std::pair<std::size_t, AtomId>> runs;
      for (AtomId k : d.z) {
        if (!runs.empty() && runs.back().second == k) ++runs.back().first;
        else runs.emplace_back(1, k);
      }
      os << ' ' << runs.size();
      for (const auto& [len, k] : runs) os << ' ' << len << 'x' << k;
      os << ' ' << d.tables.size();
      for (const auto& [k, t] : d.tables) os << ' ' << k << ':' << t;
      os << '\n';
    }
    os << "end\n";
    return os.str();
  }

  /// Rebuilds a model from a checkpoint against the same training corpus.
  /// Returns the stored RNG state through `rng`.
  static DtmModel from_checkpoint(const std::string& text, const Corpus& corpus, Rng& rng) {
    std::istringstream is(text);
    auto expect = [&](const char* word) {
      std::string w;
      if (!(is >> w) || w != word) throw std::invalid_argument(std::string("checkpoint: expected '") + word + "'");
    };
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != kCheckpointMagic)
      throw std::invalid_argument("checkpoint: not a checkpoint file");
    if (version != kCheckpointVersion)
      throw std::invalid_argument("checkpoint: unsupported version " + std::to_string(version));
    Hyper h;
    std::string kind, a, b, m0, shape, rate, dm, q, g, trunc;
    expect("hyper");
    is >> kind >> a >> b >> m0 >> shape >> rate >> h.sample_mass >> dm >> q >> g >> h.V >> trunc;
    h.kind = kind == "DP" ? ProcessKind::kDp : ProcessKind::kNgg;
    h.a = unhex(a);
    h.b = unhex(b);
    h.m0 = unhex(m0);
    h.mass_prior = {unhex(shape), unhex(rate)};
    h.doc_mass = unhex(dm);
    h.q = unhex(q);
    h.gamma = unhex(g);
    h.truncation = unhex(trunc);
    if (h.kind == ProcessKind::kDp) h.a = 0.5;  // placeholder; eff_a() is 0
    if (h.V != corpus.vocab_size())
      throw std::invalid_argument("checkpoint: vocabulary size differs from the corpus");
    expect("rng");
    std::string s0, s1, s2, s3;
    is >> s0 >> s1 >> s2 >> s3;
    rng = Rng::deserialize(s0 + ' ' + s1 + ' ' + s2 + ' ' + s3);
    DtmModel model(corpus, h);
    std::uint64_t hash = 0;
    std::size_t ndocs = 0;
    expect("state");
    is >> model.iteration_ >> model.next_atom_ >> hash >> ndocs;
    if (hash != corpus.vocab_hash()) throw std::invalid_argument("checkpoint: vocabulary differs from the corpus");
    if (ndocs != corpus.documents.size()) throw std::invalid_argument("checkpoint: document count differs");
    std::size_t ne = 0;
    expect("epochs");
    is >> ne;
    model.epochs_.assign(ne, {});
    for (auto& e : model.epochs_) {
      std::string mass, vt;
      std::size_t nu = 0;
      expect("epoch");
      is >> mass >> vt >> nu;
      e.mass = unhex(mass);
      e.v_top = unhex(vt);
      for (std::size_t i = 0; i < nu; ++i) {
        AtomId id;
        std::string j;
        is >> id >> j;
        e.unalloc.push_back({unhex(j), id});
      }
    }
    std::size_t nt = 0;
    expect("topics");
    is >> nt;
    for (std::size_t i = 0; i < nt; ++i) {
      Topic t;
      std::string j;
      std::size_t nnz = 0;
      expect("topic");
      is >> t.id >> t.birth >> j >> t.tilde_n >> t.total >> nnz;
      t.jump = unhex(j);
      t.words.assign(h.V, 0);
      for (std::size_t k = 0; k < nnz; ++k) {
        std::string wc;
        is >> wc;
        const auto colon = wc.find(':');
        t.words.at(std::stoul(wc.substr(0, colon))) = std::stoi(wc.substr(colon + 1));
      }
      model.topics_.emplace(t.id, std::move(t));
    }
    expect("docs");
    is >> ndocs;
    for (auto& d : model.docs_) {
      std::string v;
      std::size_t src, ep, len, nruns, ntab;
      expect("doc");
      is >> src >> ep >> v >> len >> nruns;
      if (src != d.source || ep != d.epoch || len != d.tokens.size())
        throw std::invalid_argument("checkpoint: document layout differs from the corpus");
      d.v = unhex(v);
      d.z.clear();
      for (std::size_t r = 0; r < nruns; ++r) {
        std::string run;
        is >> run;
        const auto x = run.find('x');
        const std::size_t n = std::stoul(run.substr(0, x));
        d.z.insert(d.z.end(), n, std::stoull(run.substr(x + 1)));
      }
      if (d.z.size() != d.tokens.size()) throw std::invalid_argument("checkpoint: allocation length mismatch");
      d.n.clear();
      for (AtomId k : d.z) ++d.n[k];
      is >> ntab;
      for (std::size_t r = 0; r < ntab; ++r) {
        std::string kt;
        is >> kt;
        const auto colon = kt.find(':');
        d.tables[std::stoull(kt.substr(0, colon))] = std::stol(kt.substr(colon + 1));
      }
    }
    expect("end");
    for (auto& e : model.epochs_) {
      e.unalloc_sum = 0.0;
      for (const auto& x : e.unalloc) e.unalloc_sum += x.jump;
    }
    model.refresh_powers();
    model.refresh_totals();
    model.audit();
    return model;
  }

  // Individual conditional updates, public for tests.

  void sample_tables(Rng& rng) {
    for (auto& [id, t] : topics_) t.tilde_n = 0;
    for (auto& d : docs_) {
      d.tables.clear();
      const double wd = doc_weight(d.v);
      for (const auto& [k, c] : d.n) {
        Topic& t = topics_.at(k);
        const double x = wd * qpow_[d.epoch - t.birth] * t.jump / t_prime_[d.epoch];
        const long tables = stirling_.sample_tables(c, x, rng);
        d.tables[k] = tables;
        t.tilde_n += tables;
      }
    }
  }

  /// v from its conditional given tables:
  /// v^{N-1} (b+v)^{aT-N} exp(-M psi(v)).
  void sample_doc_auxiliary(DocState& d, Rng& rng) const {
    const long n = static_cast<long>(d.tokens.size());
    if (n == 0) return;
    long tables = 0;
    for (const auto& [k, t] : d.tables) tables += t;
    const double a = h_.eff_a(), b = h_.b, mass = h_.doc_mass;
    auto logf = [&](double y) {
      const double v = std::exp(y);
      return n * y + (a * tables - n) * std::log(b + v) - mass * laplace_exponent_unit(a, b, v);
    };
    d.v = std::exp(slice_update(std::log(d.v), logf, 1.0, rng));
  }

  void sample_epoch_auxiliaries(Rng& rng) {
    std::vector<long> tables(epochs_.size(), 0);
    for (const auto& d : docs_)
      for (const auto& [k, t] : d.tables) tables[d.epoch] += t;
    for (std::size_t m = 0; m < epochs_.size(); ++m)
      epochs_[m].v_top = tables[m] > 0 ? gamma(rng, static_cast<double>(tables[m]), t_prime_[m]) : 0.0;
  }

  /// Jumps of topics from Gamma(tilde_n - a, b + V_j) above L0, then the
  /// mass with unallocated jumps integrated out, then fresh unallocated jumps.
  /// V_j = sum_{m >= j} q^{m-j} v_top[m] collects every epoch's tilt.
  void resample_epoch_crms(Rng& rng) {
    const std::size_t E = epochs_.size();
    for (std::size_t j = 0; j < E; ++j) {
      double tilt = 0.0;
      for (std::size_t m = j; m < E; ++m) tilt += qpow_[m - j] * epochs_[m].v_top;
      std::size_t allocated = 0;
      for (auto it = topics_.begin(); it != topics_.end();) {
        Topic& t = it->second;
        if (t.birth != j) { ++it; continue; }
        if (t.tilde_n == 0) { it = topics_.erase(it); continue; }
        const double floor = h_.skip_jump_floor ? 0.0 : h_.truncation;
        t.jump = sample_allocated_jump(t.tilde_n, floor, tilt, h_.epoch_params(epochs_[j].mass), rng);
        ++allocated;
        ++it;
      }
      EpochState& e = epochs_[j];
      if (h_.sample_mass) {
        const double a = h_.eff_a(), L0 = h_.truncation;
        const double rate = h_.mass_prior.rate + tail_mass_unit(a, h_.b, L0, 0.0) - tail_mass_unit(a, h_.b, L0, tilt);
        e.mass = gamma(rng, h_.mass_prior.shape + static_cast<double>(allocated), rate);
      }
      set_unallocated(e, sample_new_jumps(h_.epoch_params(e.mass), tilt, h_.truncation, rng, next_atom_));
    }
    refresh_totals();
  }

  double t_prime(std::size_t m) const { return t_prime_[m]; }
  double u_prime(std::size_t m) const { return u_prime_[m]; }
  AtomId next_atom() const { return next_atom_; }

  /// Document-level new-table scale: M Gamma(1-a) (b+v)^a, or M for the DP.
  double doc_weight(double v) const {
    if (h_.kind == ProcessKind::kDp) return h_.doc_mass;
    return h_.doc_mass * g1a_ * std::pow(h_.b + v, h_.a);
  }

 private:
  static std::string hex(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", x);
    return buf;
  }
  static double unhex(const std::string& s) {
    char* end = nullptr;
    const double x = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw std::invalid_argument("checkpoint: bad number '" + s + "'");
    return x;
  }

  void refresh_powers() {
    qpow_.assign(epochs_.size() + 1, 1.0);
    for (std::size_t i = 1; i < qpow_.size(); ++i) qpow_[i] = qpow_[i - 1] * h_.q;
  }

  void set_unallocated(EpochState& e, const CrmState& crm) {
    e.unalloc = crm.entries;
    e.unalloc_sum = 0.0;
    for (const auto& x : e.unalloc) e.unalloc_sum += x.jump;
  }

  void refresh_totals() {
    const std::size_t E = epochs_.size();
    std::vector<double> own(E, 0.0);
    for (const auto& [id, t] : topics_) own[t.birth] += t.jump;
    t_prime_.assign(E, 0.0);
    u_prime_.assign(E, 0.0);
    for (std::size_t m = 0; m < E; ++m)
      for (std::size_t j = 0; j <= m; ++j) {
        t_prime_[m] += qpow_[m - j] * (own[j] + epochs_[j].unalloc_sum);
        u_prime_[m] += qpow_[m - j] * epochs_[j].unalloc_sum;
      }
  }

  void remove_token(std::size_t di, std::size_t i, std::map<AtomId, double>& cache) {
    DocState& d = docs_[di];
    const AtomId k = d.z[i];
    Topic& t = topics_.at(k);
    --t.words[static_cast<std::size_t>(d.tokens[i])];
    --t.total;
    if (--d.n[k] == 0) d.n.erase(k);
    cache.erase(k);
  }

  void place_token(std::size_t di, std::size_t i, Rng& rng, std::map<AtomId, double>& cache) {
    DocState& d = docs_[di];
    const int w = d.tokens[i];
    if (!(t_prime_[d.epoch] > 0.0))
      throw std::logic_error("dtm: epoch " + std::to_string(d.epoch) + " has no mass to allocate from");
    AllocationWeights aw = allocation_weights(di, w, &cache);
    aw.weights.push_back(aw.new_weight);
    const std::size_t pick = categorical(rng, aw.weights);
    AtomId k;
    if (pick + 1 == aw.weights.size()) k = birth_topic(d.epoch, rng);
    else k = aw.atoms[pick];
    Topic& t = topics_.at(k);
    ++t.words[static_cast<std::size_t>(w)];
    ++t.total;
    ++d.n[k];
    d.z[i] = k;
    cache.erase(k);
  }

  // Promotes an unallocated atom visible at epoch m to a topic.
  AtomId birth_topic(std::size_t m, Rng& rng) {
    std::vector<double> w(m + 1);
    for (std::size_t j = 0; j <= m; ++j) w[j] = qpow_[m - j] * epochs_[j].unalloc_sum;
    const std::size_t j = categorical(rng, w);
    EpochState& e = epochs_[j];
    std::vector<double> jumps;
    jumps.reserve(e.unalloc.size());
    for (const auto& x : e.unalloc) jumps.push_back(x.jump);
    const std::size_t pick = categorical(rng, jumps);
    Topic t;
    t.id = e.unalloc[pick].atom;
    t.birth = j;
    t.jump = e.unalloc[pick].jump;
    t.words.assign(h_.V, 0);
    e.unalloc.erase(e.unalloc.begin() + static_cast<std::ptrdiff_t>(pick));
    e.unalloc_sum = 0.0;
    for (const auto& x : e.unalloc) e.unalloc_sum += x.jump;
    const AtomId id = t.id;
    topics_.emplace(id, std::move(t));
    refresh_totals();
    return id;
  }

  double heldout_doc(std::size_t m, const std::vector<int>& tokens, Rng& rng) const {
    if (tokens.empty()) return 0.0;
    // starting v: mean over the training documents of the epoch
    double v = 0.0;
    std::size_t cnt = 0;
    for (const auto& d : docs_)
      if (d.epoch == m && !d.tokens.empty()) { v += d.v; ++cnt; }
    v = cnt ? v / static_cast<double>(cnt) : 1.0;
    const double wd = doc_weight(v), tp = t_prime_[m];
    if (!(tp > 0.0)) throw std::logic_error("heldout: epoch has no mass");

    struct Cand { double jp; const Topic* topic; std::map<int, int> local; long local_total = 0; };
    std::map<AtomId, Cand> cands;
    for (const auto& [id, t] : topics_)
      if (t.birth <= m && qpow_[m - t.birth] * t.jump > 0.0) cands[id] = {qpow_[m - t.birth] * t.jump, &t, {}, 0};
    std::vector<std::vector<CrmEntry>> unalloc(m + 1);
    for (std::size_t j = 0; j <= m; ++j) unalloc[j] = epochs_[j].unalloc;
    std::map<AtomId, long> n;
    double ll = 0.0;
    const double vg = static_cast<double>(h_.V) * h_.gamma;
    for (int w : tokens) {
      if (w < 0 || static_cast<std::size_t>(w) >= h_.V) throw std::out_of_range("heldout: word out of vocabulary");
      std::vector<double> omega, lik;
      std::vector<AtomId> ids;
      for (const auto& [id, c] : cands) {
        auto it = n.find(id);
        const double x = wd * c.jp / tp;
        omega.push_back(it == n.end() ? x : stirling_.ratio(it->second, x));
        const double base_c = c.topic ? c.topic->words[static_cast<std::size_t>(w)] : 0.0;
        const double base_t = c.topic ? static_cast<double>(c.topic->total) : 0.0;
        auto lw = c.local.find(w);
        const double lc = lw == c.local.end() ? 0.0 : lw->second;
        lik.push_back((base_c + lc + h_.gamma) / (base_t + c.local_total + vg));
        ids.push_back(id);
      }
      double up = 0.0;
      std::vector<double> ew(m + 1);
      for (std::size_t j = 0; j <= m; ++j) {
        double s = 0.0;
        for (const auto& e : unalloc[j]) s += e.jump;
        ew[j] = qpow_[m - j] * s;
        up += ew[j];
      }
      double num = 0.0, den = 0.0;
      for (std::size_t c = 0; c < omega.size(); ++c) {
        num += omega[c] * lik[c];
        den += omega[c];
      }
      const double new_omega = wd * up / tp;
      num += new_omega / static_cast<double>(h_.V);
      den += new_omega;
      ll += std::log(num / den);

      std::vector<double> post(omega.size() + 1);
      for (std::size_t c = 0; c < omega.size(); ++c) post[c] = omega[c] * lik[c];
      post.back() = new_omega / static_cast<double>(h_.V);
      const std::size_t pick = categorical(rng, post);
      AtomId k;
      if (pick == omega.size()) {
        const std::size_t j = categorical(rng, ew);
        std::vector<double> js;
        for (const auto& e : unalloc[j]) js.push_back(e.jump);
        const std::size_t e = categorical(rng, js);
        k = unalloc[j][e].atom;
        cands[k] = {qpow_[m - j] * unalloc[j][e].jump, nullptr, {}, 0};
        unalloc[j].erase(unalloc[j].begin() + static_cast<std::ptrdiff_t>(e));
      } else {
        k = ids[pick];
      }
      ++n[k];
      ++cands[k].local[w];
      ++cands[k].local_total;
    }
    return ll;
  }

  Hyper h_;
  mutable GenStirling stirling_;
  double g1a_ = 1.0;
  std::vector<DocState> docs_;
  std::vector<EpochState> epochs_;
  std::map<AtomId, Topic> topics_;
  std::vector<double> qpow_, t_prime_, u_prime_;
  AtomId next_atom_ = 0;
  long iteration_ = 0;
};

}  // namespace dhnrm
