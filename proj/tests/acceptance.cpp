// Apache License, Version 2.0, refer to LICENSE.txt

// Acceptance suite. One line per criterion:
//   criterion N: PASS|FAIL <detail> [seconds]
// Usage: acceptance [N ...]   (default: all)

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "dhnrm/geweke.hpp"
#include "dhnrm/gibbs_type.hpp"
#include "dhnrm/measures.hpp"
#include "dhnrm/operators.hpp"
#include "dhnrm/powerlaw.hpp"
#include "dhnrm/runner.hpp"
#include "dhnrm/slice_sampler.hpp"
#include "dhnrm/synthesize.hpp"
#include "support/quadrature_oracle.hpp"

using namespace dhnrm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  bool known = false;  // documented, expected failure
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

// 1: closed-form Laplace exponent against quadrature
Outcome laplace_vs_quadrature() {
  double worst = 0.0;
  int cases = 0;
  for (int ai = 1; ai <= 9; ++ai)
    for (double v : {0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0}) {
      const double a = ai / 10.0;
      const double closed = laplace_exponent_unit(a, 1.0, v);
      const double quad = oracle::exponent_integral(a, 1.0, v, 0.0, std::numeric_limits<double>::infinity());
      worst = std::max(worst, std::abs(closed - quad) / quad);
      ++cases;
    }
  return {worst <= 1e-8, std::to_string(cases) + " cases, worst relative error " + fmt("%.2e", worst) +
                             " (limit 1e-8)"};
}

double ks_gamma(std::vector<double>& x, double shape, double rate) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = boost::math::gamma_p(shape, rate * x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

// 2: allocated-jump conditional, KS against Gamma(n - a, b + v)
Outcome allocated_jump_ks() {
  double worst = 0.0;
  int cases = 0;
  Rng base(2024);
  for (long n : {1L, 3L, 10L, 50L})
    for (double a : {0.1, 0.5, 0.9})
      for (double b : {0.5, 1.0, 2.0})
        for (double v : {0.0, 0.7, 5.0}) {
          Rng rng = base.substream(static_cast<std::uint64_t>(cases));
          const LevyParams p{1.0, a, b};
          std::vector<double> draws(100000);
          for (auto& t : draws) t = sample_allocated_jump(n, 0.0, v, p, rng);
          worst = std::max(worst, ks_gamma(draws, n - a, b + v));
          ++cases;
        }
  return {worst < 0.01, std::to_string(cases) + " grid points x 1e5 draws, worst KS " + fmt("%.4f", worst) +
                            " (limit 0.01)"};
}

// NGG jumps above a small floor, at most `size` of them
CrmState random_crm(Rng& rng, int size, AtomId first) {
  AtomId next = first;
  CrmState c = sample_new_jumps(LevyParams{20.0, 0.5, 1.0}, 0.0, 1e-4, rng, next);
  if (c.entries.size() > static_cast<std::size_t>(size)) c.entries.resize(static_cast<std::size_t>(size));
  return c;
}

// 3: recursive and closed-form chains agree
Outcome chain_equivalence() {
  Rng rng(3);
  double worst = 0.0, worst_rel = 0.0;
  long jumps = 0;
  bool atoms_equal = true;
  const TransitionKernel kernel = [](AtomId a, Rng& r) { return uniform01(r) < 0.5 ? a : a + 1000000; };
  for (int rep = 0; rep < 100; ++rep) {
    ChainSpec spec;
    const int n = 1 + static_cast<int>(uniform01(rng) * 5);
    spec.q = uniform01(rng);
    spec.rng = Rng(static_cast<std::uint64_t>(rep), 9);
    spec.kernel = rep % 2 ? kernel : identity_kernel();
    for (int m = 0; m < n; ++m)
      spec.epochs.push_back(random_crm(rng, static_cast<int>(uniform01(rng) * 201), 10000 * (m + 1)));
    const auto rec = build_chain_recursive(spec), closed = build_chain_closed_form(spec);
    if (rec.size() != closed.size()) atoms_equal = false;
    for (std::size_t m = 0; m < std::min(rec.size(), closed.size()); ++m) {
      if (rec[m].size() != closed[m].size()) {
        atoms_equal = false;
        continue;
      }
      for (std::size_t i = 0; i < rec[m].size(); ++i) {
        atoms_equal = atoms_equal && rec[m].entries[i].atom == closed[m].entries[i].atom;
        const double gap = std::abs(rec[m].entries[i].jump - closed[m].entries[i].jump);
        worst = std::max(worst, gap);
        if (closed[m].entries[i].jump > 0) worst_rel = std::max(worst_rel, gap / closed[m].entries[i].jump);
        ++jumps;
      }
    }
  }
  return {atoms_equal && worst <= 1e-12, "100 specs, " + std::to_string(jumps) + " jumps compared, atoms " +
                                             (atoms_equal ? "equal" : "DIFFER") + ", worst jump gap " +
                                             fmt("%.1e", worst) + " (limit 1e-12), relative " + fmt("%.1e", worst_rel)};
}

// 4: subsampling
Outcome subsampling() {
  Rng rng(4);
  AtomId next = 0;
  const CrmState crm = sample_new_jumps(LevyParams{20.0, 0.5, 1.0}, 0.0, 1e-4, rng, next);
  const double total = crm.total_mass();
  double sq = 0.0;
  for (const auto& e : crm.entries) sq += e.jump * e.jump;
  double worst = 0.0, worst_se = 0.0;
  for (double q : {0.1, 0.5, 0.9}) {
    double kept = 0.0;
    Rng r = rng.substream(static_cast<std::uint64_t>(q * 100));
    for (int t = 0; t < 10000; ++t) kept += subsample_explicit(crm, q, r).total_mass();
    const double gap = std::abs(kept / 10000 / (q * total) - 1.0);
    if (gap > worst) {
      worst = gap;
      worst_se = std::sqrt((1.0 - q) / q * sq) / total / 100.0;
    }
  }
  bool exact = true;
  for (double q1 : {0.0, 0.1, 0.3, 0.5, 0.9, 1.0})
    for (double q2 : {0.0, 0.2, 0.5, 0.7, 1.0}) {
      const CrmState two = subsample_integrated(subsample_integrated(crm, q2), q1);
      const CrmState one = subsample_integrated(crm, q1 * q2);
      if (two.size() != one.size()) {
        exact = false;
        continue;
      }
      for (std::size_t i = 0; i < one.size(); ++i)
        exact = exact && one.entries[i].atom == two.entries[i].atom &&
                std::abs(one.entries[i].jump - two.entries[i].jump) <= 1e-15 * one.entries[i].jump;
    }
  return {worst <= 0.02 && exact, "worst relative gap of mean kept mass " + fmt("%.4f", worst) +
                                      " (limit 0.02, standard error " + fmt("%.4f", worst_se) + ", " +
                                      std::to_string(crm.size()) + " jumps); integrated composition " + (exact ? "exact" : "NOT exact")};
}

// 5: power-law growth
Outcome power_law() {
  std::vector<double> slopes(10), ratios(10);
  std::vector<std::thread> workers;
  for (int s = 0; s < 10; ++s) {
    workers.emplace_back([&, s] {
      Rng r1 = Rng(5, 1).substream(static_cast<std::uint64_t>(s));
      slopes[s] = final_decade_slope(simulate_partition(LevyParams{1.0, 0.5, 1.0}, 50000, r1));
      Rng r2 = Rng(5, 2).substream(static_cast<std::uint64_t>(s));
      ratios[s] = simulate_partition(LevyParams{10.0, 0.0, 1.0}, 100000, r2).clusters / std::log(1e5);
    });
  }
  for (auto& w : workers) w.join();
  double slope = 0.0, ratio = 0.0;
  for (int s = 0; s < 10; ++s) {
    slope += slopes[s] / 10;
    ratio += ratios[s] / 10;
  }
  const double exact = dp_expected_clusters(10.0, 100000) / std::log(1e5);
  double var = 0.0;  // Var K_n, sum of Bernoulli(M/(M+i)) variances
  for (int i = 0; i < 100000; ++i) var += 10.0 * i / ((10.0 + i) * (10.0 + i));
  const double z = (ratio - exact) / (std::sqrt(var / 10.0) / std::log(1e5));
  const bool ngg = slope >= 0.45 && slope <= 0.55;
  const bool dp = std::abs(ratio - 10.0) <= 1.5;
  Outcome o;
  o.pass = ngg && dp;
  o.detail = "NGG mean slope " + fmt("%.4f", slope) + " (band [0.45, 0.55]) " + (ngg ? "ok" : "out") +
             "; DP mean K_n/log n " + fmt("%.3f", ratio) + " (band [8.5, 11.5]) " + (dp ? "ok" : "out") +
             "; exact DP expectation at n=1e5 is " + fmt("%.3f", exact) + ", simulation z " + fmt("%.2f", z);
  // the DP band is below the reach of any correct sampler at this n
  o.known = ngg && !dp && std::abs(z) < 3.0;
  return o;
}

// 6: near-zero index against the DP kind
Outcome dp_limit() {
  const double a = 1e-3;
  double worst = 0.0;
  int cases = 0;
  for (double v : {0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 1000.0}) {
    worst = std::max(worst, std::abs(laplace_exponent_unit(a, 1.0, v) / laplace_exponent_unit(0.0, 1.0, v) - 1.0));
    ++cases;
  }
  // sequential predictive of a single measure
  for (double M : {0.5, 2.0, 10.0, 50.0})
    for (auto [n, k] : std::vector<std::pair<long, long>>{{1, 1}, {5, 2}, {20, 6}, {100, 10}, {500, 40}}) {
      GibbsTypePredictive ngg(LevyParams{M, a, 1.0}), dp(LevyParams{M, 0.0, 1.0});
      const double pn = ngg.p_new(n, k), pd = dp.p_new(n, k);
      const double jn = ngg.join_scale(n, k) * (1.0 - a), jd = dp.join_scale(n, k);
      worst = std::max({worst, std::abs(pn / pd - 1.0), std::abs(jn / jd - 1.0)});
      ++cases;
    }
  // word allocation probabilities in the topic model, same state under both kinds
  Hyper h;
  h.kind = ProcessKind::kDp;
  h.q = 0.6;
  h.V = 8;
  h.truncation = 1e-3;
  h.doc_mass = 1.5;
  h.sample_mass = false;
  for (int s = 0; s < 20; ++s) {
    Rng rng(600 + s);
    Synthetic syn = synthesize(h, 2, 3, 12, rng, h.truncation);
    std::vector<std::size_t> epochs;
    for (const auto& d : syn.corpus.documents) epochs.push_back(d.epoch);
    Hyper hn = h;
    hn.kind = ProcessKind::kNgg;
    hn.a = a;
    DtmModel md(syn.corpus, h), mn(syn.corpus, hn);
    md.restore(snapshot_from_truth(syn.truth, h, epochs));
    mn.restore(snapshot_from_truth(syn.truth, hn, epochs));
    const std::size_t di = static_cast<std::size_t>(s) % md.docs().size();
    const int w = s % 8;
    auto wd = md.allocation_weights(di, w), wn = mn.allocation_weights(di, w);
    double zd = wd.new_weight, zn = wn.new_weight;
    for (double x : wd.weights) zd += x;
    for (double x : wn.weights) zn += x;
    for (std::size_t i = 0; i < wd.weights.size(); ++i)
      worst = std::max(worst, std::abs((wn.weights[i] / zn) / (wd.weights[i] / zd) - 1.0));
    worst = std::max(worst, std::abs((wn.new_weight / zn) / (wd.new_weight / zd) - 1.0));
    ++cases;
  }
  return {worst < 0.01 && cases >= 50, std::to_string(cases) + " cases, worst relative difference " +
                                           fmt("%.2e", worst) + " (limit 1e-2)"};
}

// 7: Geweke joint-distribution test and its mutation
Outcome geweke() {
  GewekeConfig c = GewekeConfig::tiny();
  Rng rng(7);
  const GewekeReport rep = run_geweke(c, rng);
  const double k = static_cast<double>(rep.stats.size());
  double min_ess = std::numeric_limits<double>::infinity();
  for (const auto& s : rep.stats) min_ess = std::min(min_ess, s.gibbs_ess);
  const double mz = rep.max_abs_z();

  GewekeConfig bad = c;
  bad.hyper.skip_jump_floor = true;
  bad.forward_draws = 20000;
  bad.gibbs_sweeps = 20000;
  Rng rng2(8);
  const double bad_z = run_geweke(bad, rng2).max_abs_z();
  // two-sided family-wise 5% level over k statistics
  const double bonferroni = boost::math::erfc_inv(0.05 / k) * std::sqrt(2.0);
  std::ostringstream d;
  d << "max |z| " << fmt("%.2f", mz) << " over " << rep.stats.size() << " statistics (limit 4; Bonferroni 5% level "
    << fmt("%.2f", bonferroni) << "), min ESS " << fmt("%.0f", min_ess) << " (need 1e5); mutation max |z| "
    << (std::isfinite(bad_z) ? fmt("%.1f", bad_z) : "inf") << " (need > 6)";
  if (!rep.chain_error.empty()) d << "; chain error: " << rep.chain_error;
  return {rep.chain_error.empty() && mz < 4.0 && min_ess >= 1e5 && bad_z > 6.0, d.str()};
}

// 8: held-out ordering on a synthetic corpus
Outcome table2_analogue() {
  const int seeds = 10;
  struct Row {
    double ngg, dhdp, hdp, indep;
  };
  std::vector<Row> rows(seeds);
  auto one = [&](int s) {
    Hyper gen;
    gen.a = 0.2;
    gen.q = 0.9;
    gen.V = 200;
    gen.sample_mass = false;
    gen.m0 = 1.0;
    gen.doc_mass = 1.0;
    gen.gamma = 0.1;
    Rng rng = Rng(8, 1).substream(static_cast<std::uint64_t>(s));
    const Synthetic syn = synthesize(gen, 3, 50, 100, rng);
    auto [train, test] = split(syn.corpus, 0.2, static_cast<std::uint64_t>(s));
    TrainOptions o;
    o.burnin = 300;
    o.samples = 100;
    o.eval_every = 10;
    o.seed = static_cast<std::uint64_t>(s);
    Hyper h;
    h.gamma = 0.1;
    h.doc_mass = 1.0;
    h.truncation = 1e-4;
    Hyper ngg = h;
    ngg.kind = ProcessKind::kNgg;
    ngg.a = 0.2;
    ngg.q = 0.9;
    Hyper dhdp = h;
    dhdp.kind = ProcessKind::kDp;
    dhdp.q = 0.9;
    Hyper indep = dhdp;
    indep.q = 0.0;
    Row r;
    r.ngg = train_fresh(train, &test, ngg, o).heldout_total;
    r.dhdp = train_fresh(train, &test, dhdp, o).heldout_total;
    const Corpus ptrain = pooled(train), ptest = pooled(test);
    r.hdp = train_fresh(ptrain, &ptest, dhdp, o).heldout_total;
    r.indep = train_fresh(train, &test, indep, o).heldout_total;
    rows[s] = r;
  };
  std::vector<std::thread> workers;
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  for (int s = 0; s < seeds;) {
    for (unsigned t = 0; t < hw && s < seeds; ++t, ++s) workers.emplace_back(one, s);
    for (auto& w : workers) w.join();
    workers.clear();
  }
  int ordered = 0;
  Row mean{0, 0, 0, 0};
  for (const auto& r : rows) {
    ordered += r.ngg >= r.dhdp && r.dhdp >= r.indep;
    mean.ngg += r.ngg / seeds;
    mean.dhdp += r.dhdp / seeds;
    mean.hdp += r.hdp / seeds;
    mean.indep += r.indep / seeds;
  }
  std::ostringstream d;
  d << "ordering DHNGG >= DHDP >= independent in " << ordered << "/" << seeds << " seeds (need 8); mean held-out "
    << "DHNGG " << fmt("%.1f", mean.ngg) << ", DHDP " << fmt("%.1f", mean.dhdp) << ", pooled DP "
    << fmt("%.1f", mean.hdp) << ", independent " << fmt("%.1f", mean.indep);
  return {ordered >= 8, d.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 9: every command twice, byte-identical outputs
Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "dhnrm_acceptance_9";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cli = DHNRM_CLI_PATH;
  auto run = [&](const std::string& args, const fs::path& out) {
    const std::string cmd = cli + " " + args + " --seed 11 --out " + out.string() + " > /dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  };
  const fs::path sim = root / "sim";
  if (run("simulate --set sim_docs=8 --set sim_length=30 --set sim_vocab=25", sim) != 0)
    return {false, "simulate failed"};
  const std::string corpus = " --set docword=" + (sim / "sim.docword").string() + " --set vocab=" +
                             (sim / "sim.vocab").string() + " --set epochs=" + (sim / "sim.epochs").string();
  const std::vector<std::pair<std::string, std::string>> cmds{
      {"simulate", "simulate --set sim_docs=8 --set sim_length=30 --set sim_vocab=25"},
      {"train", "train" + corpus + " --set burnin=20 --set samples=10 --set eval_every=2 --set test_fraction=0.25"},
      {"eval", "eval" + corpus + " --set checkpoint=" + (root / "train_a/checkpoint.txt").string() +
                   " --set test_fraction=0.25"},
      {"sweep", "sweep" + corpus + " --set burnin=10 --set samples=5 --set test_fraction=0.25 --set sweep_values=0.2,0.5"},
      {"powerlaw", "powerlaw --set pl_n=3000 --set pl_repeats=2"},
      {"geweke", "geweke --set geweke_forward=500 --set geweke_sweeps=500 --set geweke_burnin=20 --set geweke_chains=2"},
  };
  std::size_t files = 0;
  for (const auto& [name, args] : cmds) {
    const fs::path a = root / (name + "_a"), b = root / (name + "_b");
    if (run(args, a) != 0 || run(args, b) != 0) return {false, name + " exited nonzero"};
    for (const auto& e : fs::directory_iterator(a)) {
      const fs::path other = b / e.path().filename();
      if (!fs::exists(other) || slurp(e.path()) != slurp(other))
        return {false, name + ": " + e.path().filename().string() + " differs between runs"};
      ++files;
    }
  }
  fs::remove_all(root);
  return {true, std::to_string(cmds.size()) + " commands run twice, " + std::to_string(files) +
                    " output files byte-identical"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::function<Outcome()>> criteria{
      {1, laplace_vs_quadrature}, {2, allocated_jump_ks}, {3, chain_equivalence},
      {4, subsampling},           {5, power_law},         {6, dp_limit},
      {7, geweke},                {8, table2_analogue},   {9, determinism}};
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  if (which.empty())
    for (const auto& [k, f] : criteria) which.push_back(k);
  int failures = 0;
  for (int k : which) {
    auto it = criteria.find(k);
    if (it == criteria.end()) {
      std::cerr << "unknown criterion " << k << '\n';
      return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << k << ": " << (o.pass ? "PASS " : o.known ? "FAIL (known) " : "FAIL ") << o.detail
              << " [" << fmt("%.1f", sec) << "s]" << std::endl;
    if (!o.pass && !o.known) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
