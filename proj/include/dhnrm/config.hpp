// Apache License, Version 2.0, refer to LICENSE.txt

// Flat key/value run configuration. Every key has a default; unknown keys
// are rejected. Sources: JSON object file, then key=value overrides.

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dhnrm/dtm.hpp"

namespace dhnrm {

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigKey {
  const char* name;
  const char* value;
  const char* help;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"kind", "NGG", "NGG or DP"},
      {"a", "0.2", "NGG index"},
      {"b", "1", "Levy intensity tilt"},
      {"q", "0.5", "subsampling rate between epochs"},
      {"m0", "1", "epoch-level mass, initial value"},
      {"sample_mass", "true", "resample epoch masses"},
      {"mass_shape", "1", "Gamma prior shape on epoch masses"},
      {"mass_rate", "1", "Gamma prior rate on epoch masses"},
      {"doc_mass", "1", "document-level mass"},
      {"gamma", "0.1", "topic Dirichlet smoothing"},
      {"truncation", "1e-4", "smallest represented epoch jump"},
      {"burnin", "2000", "burn-in sweeps"},
      {"samples", "200", "collected sweeps after burn-in"},
      {"eval_every", "10", "held-out evaluation spacing over collected sweeps"},
      {"seed", "1", "master seed"},
      {"trace_walltime", "false", "record wall time in trace lines"},
      {"docword", "", "training docword file"},
      {"vocab", "", "vocabulary file"},
      {"epochs", "", "epoch label file"},
      {"test_fraction", "0", "per-epoch held-out fraction split off the training files"},
      {"test_docword", "", "held-out docword file"},
      {"test_epochs", "", "held-out epoch label file"},
      {"checkpoint", "", "checkpoint to evaluate or resume"},
      {"sweep_param", "a", "swept hyperparameter: a or q"},
      {"sweep_values", "", "comma list; empty means the default grid"},
      {"pl_n", "50000", "customers in the power-law simulation"},
      {"pl_repeats", "10", "independent power-law repeats"},
      {"pl_mass", "1", "mass of the power-law measure"},
      {"pl_slope_lo", "0.45", "accepted slope band, lower"},
      {"pl_slope_hi", "0.55", "accepted slope band, upper"},
      {"pl_ratio_tol", "0.15", "accepted relative error of K_n/log n against the mass"},
      {"geweke_forward", "200000", "forward draws"},
      {"geweke_sweeps", "220000", "sweeps per Gibbs chain"},
      {"geweke_burnin", "1000", "burn-in per Gibbs chain"},
      {"geweke_chains", "4", "Gibbs chains"},
      {"geweke_threshold", "4", "largest accepted |z|"},
      {"geweke_mutation", "false", "skip the truncation floor in jump resampling"},
      {"sim_epochs", "3", "synthetic epochs"},
      {"sim_docs", "50", "synthetic documents per epoch"},
      {"sim_length", "100", "synthetic words per document"},
      {"sim_vocab", "200", "synthetic vocabulary size"},
      {"sim_truncation", "0", "synthetic truncation; 0 selects 1e-8 of the expected mass"},
  };
  return keys;
}

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_keys()) values_[k.name] = k.value;
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw config_error("unknown config key '" + key + "'");
    values_[key] = value;
  }

  /// "key=value"
  void apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw config_error("override '" + kv + "' is not key=value");
    set(kv.substr(0, eq), kv.substr(eq + 1));
  }

  /// Flat JSON object of scalars.
  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw config_error(path + ": " + e.what());
    }
    if (!j.is_object()) throw config_error(path + ": config must be a JSON object");
    for (const auto& [k, v] : j.items()) {
      if (v.is_string()) set(k, v.get<std::string>());
      else if (v.is_boolean()) set(k, v.get<bool>() ? "true" : "false");
      else if (v.is_number_integer()) set(k, std::to_string(v.get<long long>()));
      else if (v.is_number()) set(k, number(v.get<double>()));
      else throw config_error(path + ": key '" + k + "' must be a scalar");
    }
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw config_error("unknown config key '" + key + "'");
    return it->second;
  }

  double num(const std::string& key) const {
    const std::string& s = str(key);
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw config_error("config key '" + key + "' is not a number: '" + s + "'");
    return x;
  }

  long integer(const std::string& key) const {
    const std::string& s = str(key);
    std::size_t used = 0;
    long x = 0;
    try {
      x = std::stol(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw config_error("config key '" + key + "' is not an integer: '" + s + "'");
    return x;
  }

  long count(const std::string& key) const {
    const long x = integer(key);
    if (x < 0) throw config_error("config key '" + key + "' must be nonnegative");
    return x;
  }

  bool flag(const std::string& key) const {
    const std::string& s = str(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw config_error("config key '" + key + "' is not a boolean: '" + s + "'");
  }

  std::vector<double> list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw config_error("config key '" + key + "' has a bad list item '" + item + "'");
      }
    }
    return out;
  }

  Hyper hyper() const {
    Hyper h;
    const std::string& kind = str("kind");
    if (kind == "NGG") h.kind = ProcessKind::kNgg;
    else if (kind == "DP") h.kind = ProcessKind::kDp;
    else throw config_error("config key 'kind' must be NGG or DP, got '" + kind + "'");
    h.a = num("a");
    h.b = num("b");
    h.q = num("q");
    h.m0 = num("m0");
    h.sample_mass = flag("sample_mass");
    h.mass_prior = {num("mass_shape"), num("mass_rate")};
    h.doc_mass = num("doc_mass");
    h.gamma = num("gamma");
    h.truncation = num("truncation");
    h.V = 1;  // set from the corpus
    try {
      h.validate();
    } catch (const std::invalid_argument& e) {
      throw config_error(e.what());
    }
    return h;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  /// Resolved configuration as a JSON object, keys sorted.
  std::string to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j.dump(2) + "\n";
  }

 private:
  static std::string number(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
  }

  std::map<std::string, std::string> values_;
};

}  // namespace dhnrm
