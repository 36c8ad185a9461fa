// Apache License, Version 2.0, refer to LICENSE.txt

// dhnrm: train, eval, sweep, powerlaw, geweke, simulate.
// Exit codes: 0 success, 1 internal failure, 2 invalid input.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dhnrm/config.hpp"
#include "dhnrm/corpus.hpp"
#include "dhnrm/dtm.hpp"
#include "dhnrm/geweke.hpp"
#include "dhnrm/powerlaw.hpp"
#include "dhnrm/runner.hpp"
#include "dhnrm/synthesize.hpp"

namespace fs = std::filesystem;
using namespace dhnrm;
using json = nlohmann::ordered_json;

namespace {

constexpr int kFormatVersion = 1;

// Bad user input: exit 2.
struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Context {
  RunConfig cfg;
  fs::path out;
  std::uint64_t seed = 1;
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw input_error("cannot open " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const std::string& required_path(const RunConfig& cfg, const std::string& key) {
  const std::string& p = cfg.str(key);
  if (p.empty()) throw input_error("config key '" + key + "' must name a file");
  if (!fs::exists(p)) throw input_error(key + ": no such file " + p);
  return p;
}

Corpus load_training(const RunConfig& cfg) {
  return load_corpus(required_path(cfg, "docword"), required_path(cfg, "vocab"), required_path(cfg, "epochs"));
}

// Held-out side: explicit test files, a split of the training files, or none.
std::pair<Corpus, std::optional<Corpus>> load_sets(const RunConfig& cfg) {
  Corpus all = load_training(cfg);
  const double frac = cfg.num("test_fraction");
  if (!cfg.str("test_docword").empty()) {
    if (frac > 0.0) throw input_error("set either test_fraction or test_docword, not both");
    Corpus test = load_corpus(required_path(cfg, "test_docword"), required_path(cfg, "vocab"),
                              required_path(cfg, "test_epochs"));
    test.num_epochs = std::max(test.num_epochs, all.num_epochs);
    if (test.num_epochs > all.num_epochs) throw input_error("test set has epochs beyond the training set");
    return {std::move(all), std::move(test)};
  }
  if (frac > 0.0) {
    auto [train, test] = split(all, frac, static_cast<std::uint64_t>(cfg.integer("seed")));
    return {std::move(train), std::move(test)};
  }
  return {std::move(all), std::nullopt};
}

json header(const Context& ctx, const std::string& command) {
  json j;
  j["format_version"] = kFormatVersion;
  j["command"] = command;
  j["seed"] = ctx.seed;
  return j;
}

void echo_config(const Context& ctx, const std::string& command) {
  json j = header(ctx, command);
  j["config"] = json::parse(ctx.cfg.to_json());
  write_file(ctx.out / "config.json", j.dump(2) + "\n");
}

Hyper hyper_for(const RunConfig& cfg, const Corpus& c) {
  Hyper h = cfg.hyper();
  h.V = c.vocab_size();
  return h;
}

TrainOptions options(const Context& ctx) {
  TrainOptions o;
  o.burnin = ctx.cfg.count("burnin");
  o.samples = ctx.cfg.count("samples");
  o.eval_every = ctx.cfg.count("eval_every");
  o.seed = ctx.seed;
  return o;
}

json trace_line(const DtmModel& m, bool walltime, double seconds) {
  json j;
  j["iteration"] = m.iteration();
  j["train_loglik"] = m.train_loglik();
  j["topics_per_epoch"] = m.topics_per_epoch();
  std::vector<double> masses;
  for (const auto& e : m.epochs()) masses.push_back(e.mass);
  j["epoch_masses"] = masses;
  if (walltime) j["wall_time"] = seconds;
  return j;
}

int cmd_train(Context& ctx) {
  auto [train, test] = load_sets(ctx.cfg);
  const Hyper h = hyper_for(ctx.cfg, train);
  echo_config(ctx, "train");
  write_file(ctx.out / "status", "running\n");
  std::ofstream trace(ctx.out / "trace.jsonl", std::ios::binary);
  trace << json{{"format_version", kFormatVersion}, {"kind", "trace"}}.dump() << '\n';
  const bool walltime = ctx.cfg.flag("trace_walltime");
  const auto start = std::chrono::steady_clock::now();
  DtmModel model(train, h);
  Rng rng = train_stream(ctx.seed);
  model.initialize(rng);
  const TrainOptions o = options(ctx);
  TrainResult r = train_model(model, rng, test ? &*test : nullptr, o, [&](const DtmModel& m) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    trace << trace_line(m, walltime, s).dump() << '\n';
  });
  trace.close();
  write_file(ctx.out / "checkpoint.txt", model.checkpoint(rng, train.vocab_hash()));
  json s = header(ctx, "train");
  s["iterations"] = model.iteration();
  s["train_loglik"] = r.train_loglik;
  s["topics"] = r.topics;
  if (test) {
    s["heldout_docs"] = test->documents.size();
    s["heldout_words"] = test->total_words();
    s["heldout_evaluations"] = r.evaluations;
    s["heldout_loglik"] = r.heldout_total;
  }
  write_file(ctx.out / "summary.json", s.dump(2) + "\n");
  write_file(ctx.out / "status", "ok\n");
  std::cout << "train: " << model.iteration() << " sweeps, train loglik " << r.train_loglik;
  if (test) std::cout << ", held-out loglik " << r.heldout_total;
  std::cout << '\n';
  return 0;
}

int cmd_eval(Context& ctx) {
  auto [train, held] = load_sets(ctx.cfg);
  if (!held) throw input_error("eval needs test_docword or test_fraction");
  const Corpus& test = *held;
  const std::string text = read_file(required_path(ctx.cfg, "checkpoint"));
  Rng stored(0);
  DtmModel model = [&] {
    try {
      return DtmModel::from_checkpoint(text, train, stored);
    } catch (const std::invalid_argument& e) {
      throw input_error(e.what());
    }
  }();
  if (test.num_epochs > model.num_epochs()) throw input_error("test set has epochs beyond the checkpoint");
  echo_config(ctx, "eval");
  Rng er = eval_stream(ctx.seed, model.iteration());
  const auto ll = model.heldout_loglik(test, er);
  json j = header(ctx, "eval");
  j["iteration"] = model.iteration();
  double total = 0.0;
  json docs = json::array();
  for (std::size_t d = 0; d < ll.size(); ++d) {
    docs.push_back({{"doc", test.documents[d].id}, {"words", test.documents[d].length()}, {"loglik", ll[d]}});
    total += ll[d];
  }
  j["documents"] = docs;
  j["total_loglik"] = total;
  j["words"] = test.total_words();
  write_file(ctx.out / "eval.json", j.dump(2) + "\n");
  std::cout << "eval: held-out loglik " << total << " over " << test.total_words() << " words\n";
  return 0;
}

int cmd_sweep(Context& ctx) {
  const std::string param = ctx.cfg.str("sweep_param");
  if (param != "a" && param != "q") throw input_error("sweep_param must be a or q");
  std::vector<double> values = ctx.cfg.list("sweep_values");
  if (values.empty())
    values = param == "a" ? std::vector<double>{0.1, 0.2, 0.3, 0.5, 0.7, 0.9}
                          : std::vector<double>{0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.0};
  auto [train, test] = load_sets(ctx.cfg);
  echo_config(ctx, "sweep");
  std::ostringstream csv;
  csv << "# format_version " << kFormatVersion << "\n";
  csv << "value,train_loglik,heldout_loglik,topics,status\n";
  int failed = 0;
  for (double v : values) {
    std::ostringstream num;
    num.precision(17);
    num << v;
    try {
      RunConfig cell = ctx.cfg;
      cell.set(param, num.str());
      const Hyper h = hyper_for(cell, train);
      const TrainResult r = train_fresh(train, test ? &*test : nullptr, h, options(ctx));
      csv.precision(17);
      csv << num.str() << ',' << r.train_loglik << ',';
      if (test) csv << r.heldout_total;
      csv << ',' << r.topics << ",ok\n";
    } catch (const std::exception& e) {
      ++failed;
      std::string msg = e.what();
      for (char& c : msg)
        if (c == ',' || c == '\n') c = ' ';
      csv << num.str() << ",,,,failed: " << msg << '\n';
    }
  }
  write_file(ctx.out / "sweep.csv", csv.str());
  std::cout << "sweep: " << values.size() << " cells, " << failed << " failed\n";
  return 0;
}

int cmd_powerlaw(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const std::string kind = c.str("kind");
  if (kind != "NGG" && kind != "DP") throw input_error("kind must be NGG or DP");
  const long n = c.count("pl_n");
  if (n < 1000) throw input_error("pl_n must be at least 1000");
  const long repeats = c.count("pl_repeats");
  if (repeats < 1) throw input_error("pl_repeats must be positive");
  const double mass = c.num("pl_mass");
  const LevyParams p{mass, kind == "DP" ? 0.0 : c.num("a"), c.num("b")};
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw input_error(e.what());
  }
  echo_config(ctx, "powerlaw");
  std::ostringstream tr;
  tr << "# format_version " << kFormatVersion << "\nrepeat,n,clusters\n";
  json reps = json::array();
  double mean = 0.0;
  for (long r = 0; r < repeats; ++r) {
    Rng rng = Rng(ctx.seed, 3).substream(static_cast<std::uint64_t>(r));
    const PartitionTrace t = simulate_partition(p, n, rng);
    for (auto [i, k] : t.points) tr << r << ',' << i << ',' << k << '\n';
    const double stat = kind == "NGG" ? final_decade_slope(t)
                                      : static_cast<double>(t.clusters) / std::log(static_cast<double>(n));
    reps.push_back({{"repeat", r}, {"clusters", t.clusters}, {kind == "NGG" ? "slope" : "ratio", stat}});
    mean += stat / static_cast<double>(repeats);
  }
  json j = header(ctx, "powerlaw");
  j["kind"] = kind;
  j["n"] = n;
  j["repeats"] = reps;
  bool pass;
  if (kind == "NGG") {
    j["mean_slope"] = mean;
    j["band"] = {c.num("pl_slope_lo"), c.num("pl_slope_hi")};
    pass = mean >= c.num("pl_slope_lo") && mean <= c.num("pl_slope_hi");
  } else {
    j["mean_ratio"] = mean;
    j["target"] = mass;
    j["expected_ratio"] = dp_expected_clusters(mass, n) / std::log(static_cast<double>(n));
    pass = std::abs(mean - mass) <= c.num("pl_ratio_tol") * mass;
  }
  j["pass"] = pass;
  write_file(ctx.out / "powerlaw.csv", tr.str());
  write_file(ctx.out / "powerlaw.json", j.dump(2) + "\n");
  std::cout << "powerlaw: " << (kind == "NGG" ? "mean slope " : "mean K_n/log n ") << mean
            << (pass ? " PASS" : " FAIL") << '\n';
  return 0;
}

int cmd_geweke(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  GewekeConfig g = GewekeConfig::tiny();
  g.forward_draws = c.count("geweke_forward");
  g.gibbs_sweeps = c.count("geweke_sweeps");
  g.burnin = c.count("geweke_burnin");
  g.chains = static_cast<int>(c.count("geweke_chains"));
  if (g.forward_draws < 2 || g.gibbs_sweeps < g.batches || g.chains < 1)
    throw input_error("geweke: need at least 2 forward draws, 50 sweeps and one chain");
  g.hyper.skip_jump_floor = c.flag("geweke_mutation");
  echo_config(ctx, "geweke");
  Rng rng(ctx.seed, 4);
  const GewekeReport rep = run_geweke(g, rng);
  const double threshold = c.num("geweke_threshold");
  json j = header(ctx, "geweke");
  j["mutation"] = g.hyper.skip_jump_floor;
  json stats = json::array();
  for (const auto& s : rep.stats) {
    json e{{"name", s.name}, {"forward_mean", s.forward_mean}, {"gibbs_mean", s.gibbs_mean},
           {"gibbs_ess", s.gibbs_ess}};
    e["z"] = std::isfinite(s.z) ? json(s.z) : json("inf");
    stats.push_back(e);
  }
  j["statistics"] = stats;
  if (!rep.chain_error.empty()) j["chain_error"] = rep.chain_error;
  j["forward_rejected"] = rep.forward_rejected;
  const double mz = rep.max_abs_z();
  j["max_abs_z"] = std::isfinite(mz) ? json(mz) : json("inf");
  j["threshold"] = threshold;
  j["pass"] = mz < threshold;
  write_file(ctx.out / "geweke.json", j.dump(2) + "\n");
  std::cout << "geweke: max |z| " << mz << (mz < threshold ? " PASS" : " FAIL") << '\n';
  return 0;
}

int cmd_simulate(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  Hyper h = c.hyper();
  h.V = static_cast<std::size_t>(c.count("sim_vocab"));
  if (h.V < 1) throw input_error("sim_vocab must be positive");
  const long epochs = c.count("sim_epochs");
  if (epochs < 1) throw input_error("sim_epochs must be positive");
  echo_config(ctx, "simulate");
  Rng rng(ctx.seed, 5);
  Synthetic s = synthesize(h, static_cast<std::size_t>(epochs), static_cast<std::size_t>(c.count("sim_docs")),
                           static_cast<std::size_t>(c.count("sim_length")), rng, c.num("sim_truncation"));
  write_corpus(s.corpus, (ctx.out / "sim.docword").string(), (ctx.out / "sim.vocab").string(),
               (ctx.out / "sim.epochs").string());
  json j = header(ctx, "simulate");
  j["truncation"] = s.truth.truncation;
  j["epoch_masses"] = s.truth.masses;
  j["discarded_mass"] = s.truth.discarded_mass;
  std::vector<std::size_t> jumps;
  for (const auto& e : s.truth.jumps) jumps.push_back(e.size());
  j["jumps_per_epoch"] = jumps;
  j["topics_used"] = s.truth.theta.size();
  j["complete_data_loglik"] = complete_data_loglik(s.truth);
  json z = json::array();
  for (const auto& d : s.truth.z) z.push_back(d);
  j["allocations"] = z;
  write_file(ctx.out / "truth.json", j.dump(2) + "\n");
  std::cout << "simulate: " << s.corpus.documents.size() << " documents, " << s.truth.theta.size()
            << " topics used\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dependent hierarchical normalized random measure topic models"};
  app.require_subcommand(1);
  std::string config_path, out_dir = ".";
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--set", overrides, "override key=value")->take_all();
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--out", out_dir, "output directory");
  };
  std::map<std::string, int (*)(Context&)> commands{{"train", cmd_train},     {"eval", cmd_eval},
                                                    {"sweep", cmd_sweep},     {"powerlaw", cmd_powerlaw},
                                                    {"geweke", cmd_geweke},   {"simulate", cmd_simulate}};
  const std::map<std::string, std::string> help{
      {"train", "run the sampler and write trace, checkpoint and summary"},
      {"eval", "held-out log-likelihood of a checkpoint"},
      {"sweep", "train across a grid of a or q"},
      {"powerlaw", "cluster growth of a single normalized measure"},
      {"geweke", "joint-distribution test of the sampler"},
      {"simulate", "synthesize a corpus from the model"}};
  for (const auto& [name, fn] : commands) common(app.add_subcommand(name, help.at(name)));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  Context ctx;
  try {
    if (!config_path.empty()) ctx.cfg.load_file(config_path);
    for (const auto& kv : overrides) ctx.cfg.apply_override(kv);
    if (seed >= 0) ctx.cfg.set("seed", std::to_string(seed));
    const long s = ctx.cfg.integer("seed");
    if (s < 0) throw config_error("seed must be nonnegative");
    ctx.seed = static_cast<std::uint64_t>(s);
    ctx.out = out_dir;
    fs::create_directories(ctx.out);
    return commands.at(name)(ctx);
  } catch (const config_error& e) {
    std::cerr << "dhnrm " << name << ": " << e.what() << '\n';
    return 2;
  } catch (const input_error& e) {
    std::cerr << "dhnrm " << name << ": " << e.what() << '\n';
    return 2;
  } catch (const corpus_error& e) {
    std::cerr << "dhnrm " << name << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "dhnrm " << name << ": internal failure: " << e.what() << '\n';
    if (name == "train" && fs::exists(ctx.out / "status")) {
      std::ofstream(ctx.out / "status") << "failed: " << e.what() << '\n';
    }
    return 1;
  }
}
