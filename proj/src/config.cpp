#include "flsim/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "flsim/errors.hpp"
#include "flsim/toml.hpp"

namespace flsim {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::Generate: return "generate";
    case Scenario::Convergence: return "convergence";
    case Scenario::SingleRun: return "single-run";
    case Scenario::Retraining: return "retraining";
    case Scenario::Scalability: return "scalability";
    case Scenario::Analyze: return "analyze";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "flad") return Strategy::Flad;
  if (name == "fedavg") return Strategy::FedAvg;
  if (name == "flddos") return Strategy::Flddos;
  throw ConfigError("unknown strategy '" + name +
                    "' (expected flad, fedavg or flddos)");
}

namespace {

// Typed accessor over the parsed tree that records every key it touches;
// leftovers are reported as unknown keys at the end.
class ConfigReader {
public:
  ConfigReader(const TomlTable& root, std::string origin)
      : root_(root), origin_(std::move(origin)) {}

  bool has(const std::string& path) { return find(path) != nullptr; }

  template <typename T>
  T get(const std::string& path, T fallback) {
    const TomlValue* v = find(path);
    if (!v) return fallback;
    touched_.insert(path);
    return coerce<T>(*v, path);
  }

  template <typename T>
  T require(const std::string& path) {
    const TomlValue* v = find(path);
    if (!v) throw ConfigError(origin_ + ": missing required key '" + path + "'");
    touched_.insert(path);
    return coerce<T>(*v, path);
  }

  std::vector<std::string> get_string_list(const std::string& path) {
    const TomlValue* v = find(path);
    if (!v) return {};
    touched_.insert(path);
    return coerce_list<std::string>(*v, path);
  }

  std::vector<int> get_int_list(const std::string& path) {
    const TomlValue* v = find(path);
    if (!v) return {};
    touched_.insert(path);
    return coerce_list<int>(*v, path);
  }

  // Every leaf must have been touched; tables count as containers only.
  void check_unknown() const {
    std::vector<std::string> unknown;
    walk(root_, "", unknown);
    if (!unknown.empty()) {
      std::string msg = origin_ + ": unknown configuration key";
      if (unknown.size() > 1) msg += "s";
      msg += ":";
      for (const auto& k : unknown) msg += " '" + k + "'";
      throw ConfigError(msg);
    }
  }

private:
  const TomlValue* find(const std::string& path) const {
    const TomlTable* t = &root_;
    std::size_t start = 0;
    for (;;) {
      const std::size_t dot = path.find('.', start);
      const std::string part = path.substr(start, dot - start);
      auto it = t->find(part);
      if (it == t->end()) return nullptr;
      if (dot == std::string::npos) return &it->second;
      if (!it->second.is_table()) return nullptr;
      t = &it->second.table();
      start = dot + 1;
    }
  }

  template <typename T>
  T coerce(const TomlValue& v, const std::string& path) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (auto* b = std::get_if<bool>(&v.data)) return *b;
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (auto* s = std::get_if<std::string>(&v.data)) return *s;
    } else if constexpr (std::is_same_v<T, double>) {
      if (auto* d = std::get_if<double>(&v.data)) return *d;
      if (auto* i = std::get_if<std::int64_t>(&v.data))
        return static_cast<double>(*i);
    } else {
      if (auto* i = std::get_if<std::int64_t>(&v.data)) {
        if constexpr (std::is_same_v<T, std::uint64_t>) {
          if (*i < 0)
            throw ConfigError(origin_ + ": '" + path + "' must be non-negative");
        }
        return static_cast<T>(*i);
      }
    }
    throw ConfigError(origin_ + ": '" + path + "' has the wrong type");
  }

  template <typename T>
  std::vector<T> coerce_list(const TomlValue& v, const std::string& path) const {
    const auto* arr = std::get_if<TomlArray>(&v.data);
    if (!arr) throw ConfigError(origin_ + ": '" + path + "' must be an array");
    std::vector<T> out;
    for (const auto& e : *arr) {
      if constexpr (std::is_same_v<T, std::string>) {
        out.push_back(coerce<std::string>(e, path));
      } else {
        out.push_back(coerce<T>(e, path));
      }
    }
    return out;
  }

  void walk(const TomlTable& t, const std::string& prefix,
            std::vector<std::string>& unknown) const {
    for (const auto& [k, v] : t) {
      const std::string path = prefix.empty() ? k : prefix + "." + k;
      if (v.is_table())
        walk(v.table(), path, unknown);
      else if (!touched_.count(path))
        unknown.push_back(path);
    }
  }

  const TomlTable& root_;
  std::string origin_;
  std::set<std::string> touched_;
};

Scenario parse_scenario(const std::string& s, const std::string& origin) {
  if (s == "generate") return Scenario::Generate;
  if (s == "convergence") return Scenario::Convergence;
  if (s == "single-run") return Scenario::SingleRun;
  if (s == "retraining") return Scenario::Retraining;
  if (s == "scalability") return Scenario::Scalability;
  if (s == "analyze") return Scenario::Analyze;
  throw ConfigError(origin + ": unknown scenario '" + s + "'");
}

ExperimentConfig from_table(const TomlTable& root, const std::string& origin) {
  ConfigReader r(root, origin);
  ExperimentConfig cfg;

  cfg.scenario = parse_scenario(r.get<std::string>("scenario", "convergence"), origin);
  cfg.seed = r.get<std::uint64_t>("seed", 1);
  cfg.repetitions = r.get<int>("repetitions", 1);
  if (cfg.repetitions < 1)
    throw ConfigError(origin + ": repetitions must be >= 1");

  cfg.dataset.source = r.get<std::string>("dataset.source", "generated");
  if (cfg.dataset.source != "generated" && cfg.dataset.source != "files")
    throw ConfigError(origin + ": dataset.source must be 'generated' or 'files'");
  cfg.dataset.spec_file = r.get<std::string>("dataset.spec_file", "");
  cfg.dataset.attacks = r.get_string_list("dataset.attacks");
  cfg.dataset.base_count = r.get<std::uint64_t>("dataset.base_count", 202);
  cfg.dataset.max_count = r.get<std::uint64_t>("dataset.max_count", 65536);
  cfg.dataset.clients = r.get<int>("dataset.clients", 0);
  cfg.dataset.attacks_per_client = r.get<int>("dataset.attacks_per_client", 1);
  cfg.dataset.normalize = r.get<bool>("dataset.normalize", true);
  cfg.dataset.files = r.get_string_list("dataset.files");
  if (cfg.dataset.source == "generated" && cfg.dataset.spec_file.empty())
    throw ConfigError(origin + ": dataset.spec_file is required when "
                      "dataset.source = \"generated\"");
  if (cfg.dataset.source == "files" && cfg.dataset.files.empty())
    throw ConfigError(origin + ": dataset.files is required when "
                      "dataset.source = \"files\"");
  if (cfg.dataset.attacks_per_client != 1 && cfg.dataset.attacks_per_client != 2)
    throw ConfigError(origin + ": dataset.attacks_per_client must be 1 or 2");
  if (cfg.dataset.max_count < cfg.dataset.base_count)
    throw ConfigError(origin + ": dataset.max_count must be >= base_count");

  cfg.timing.step_seconds_per_sample =
      r.get<double>("timing.step_seconds_per_sample", 2e-6);
  cfg.timing.network_seconds = r.get<double>("timing.network_seconds", 0.05);
  if (cfg.timing.step_seconds_per_sample < 0.0 || cfg.timing.network_seconds < 0.0)
    throw ConfigError(origin + ": timing values must be non-negative");

  cfg.federation.patience = r.get<int>("federation.patience", 25);
  cfg.federation.max_rounds = r.get<int>("federation.max_rounds", 1000);
  cfg.federation.e_min = r.get<int>("federation.e_min", 1);
  cfg.federation.e_max = r.get<int>("federation.e_max", 5);
  cfg.federation.s_min = r.get<int>("federation.s_min", 10);
  cfg.federation.s_max = r.get<int>("federation.s_max", 1000);
  cfg.federation.learning_rate = r.get<double>("federation.learning_rate", 0.01);
  cfg.federation.hidden_layers = r.get<int>("model.hidden_layers", 2);
  cfg.federation.hidden_units = r.get<int>("model.hidden_units", 32);
  cfg.parallel_clients = r.get<bool>("federation.parallel_clients", false);
  cfg.threads = r.get<int>("federation.threads", 0);

  const std::string single = r.get<std::string>("federation.strategy", "flad");
  cfg.strategies = r.get_string_list("federation.strategies");
  if (cfg.strategies.empty()) cfg.strategies = {single};
  for (const auto& s : cfg.strategies) parse_strategy(s);
  if (cfg.scenario == Scenario::Convergence && cfg.strategies.front() != "flad")
    throw ConfigError(origin + ": the convergence scenario needs flad first in "
                      "federation.strategies; its stopping round budgets the others");

  cfg.fedavg.epochs = r.get<int>("fedavg.epochs", 1);
  cfg.fedavg.batch_size = r.get<int>("fedavg.batch_size", 50);
  cfg.fedavg.fraction = r.get<double>("fedavg.fraction", 0.8);
  cfg.flddos.epochs = r.get<int>("flddos.epochs", 10);
  cfg.flddos.batch_size = r.get<int>("flddos.batch_size", 100);
  cfg.flddos.fraction = r.get<double>("flddos.fraction", 0.8);
  cfg.flddos.gamma_default = r.get<double>("flddos.gamma_default", 1.0);
  cfg.flddos.gamma_tcp = r.get<double>("flddos.gamma_tcp", 0.9);
  for (double g : {cfg.flddos.gamma_default, cfg.flddos.gamma_tcp})
    if (!(g >= 0.0 && g <= 1.0))
      throw ConfigError(origin + ": flddos gamma values must lie in [0, 1]");

  cfg.retraining.initial_clients = r.get<int>("retraining.initial_clients", 2);
  if (cfg.retraining.initial_clients < 1)
    throw ConfigError(origin + ": retraining.initial_clients must be >= 1");
  cfg.scalability.sizes = r.get_int_list("scalability.sizes");
  cfg.analysis.bins = r.get<int>("analysis.bins", 100);
  cfg.analysis.samples_per_attack =
      r.get<std::uint64_t>("analysis.samples_per_attack", 0);
  if (cfg.analysis.bins < 2)
    throw ConfigError(origin + ": analysis.bins must be >= 2");

  r.check_unknown();
  check_hyper_params(resolve_hyper_params(cfg, Strategy::Flad));
  check_hyper_params(resolve_hyper_params(cfg, Strategy::FedAvg));
  check_hyper_params(resolve_hyper_params(cfg, Strategy::Flddos));
  return cfg;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  return from_table(parse_toml_file(path), path);
}

ExperimentConfig parse_experiment_config(const std::string& text,
                                         const std::string& origin) {
  return from_table(parse_toml_string(text, origin), origin);
}

FlHyperParams resolve_hyper_params(const ExperimentConfig& cfg, Strategy strategy) {
  FlHyperParams hp = cfg.federation;
  hp.strategy = strategy;
  switch (strategy) {
    case Strategy::Flad:
      break;
    case Strategy::FedAvg:
      hp.fixed_epochs = cfg.fedavg.epochs;
      hp.batch_size = cfg.fedavg.batch_size;
      hp.fraction = cfg.fedavg.fraction;
      break;
    case Strategy::Flddos:
      hp.fixed_epochs = cfg.flddos.epochs;
      hp.batch_size = cfg.flddos.batch_size;
      hp.fraction = cfg.flddos.fraction;
      break;
  }
  return hp;
}

namespace {
std::string toml_str(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string toml_num(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  const std::string s = ss.str();
  // Bare integers would re-parse as int64; keep the float marker.
  return s.find_first_of(".eE") == std::string::npos ? s + ".0" : s;
}

template <typename T>
std::string toml_list(const std::vector<T>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_same_v<T, std::string>)
      out += toml_str(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out + "]";
}
}  // namespace

void write_effective_config(const ExperimentConfig& cfg, std::ostream& out) {
  out << "scenario = " << toml_str(to_string(cfg.scenario)) << "\n"
      << "seed = " << cfg.seed << "\n"
      << "repetitions = " << cfg.repetitions << "\n\n";
  out << "[dataset]\n"
      << "source = " << toml_str(cfg.dataset.source) << "\n"
      << "spec_file = " << toml_str(cfg.dataset.spec_file) << "\n"
      << "attacks = " << toml_list(cfg.dataset.attacks) << "\n"
      << "base_count = " << cfg.dataset.base_count << "\n"
      << "max_count = " << cfg.dataset.max_count << "\n"
      << "clients = " << cfg.dataset.clients << "\n"
      << "attacks_per_client = " << cfg.dataset.attacks_per_client << "\n"
      << "normalize = " << (cfg.dataset.normalize ? "true" : "false") << "\n"
      << "files = " << toml_list(cfg.dataset.files) << "\n\n";
  out << "[model]\n"
      << "hidden_layers = " << cfg.federation.hidden_layers << "\n"
      << "hidden_units = " << cfg.federation.hidden_units << "\n\n";
  out << "[timing]\n"
      << "step_seconds_per_sample = " << toml_num(cfg.timing.step_seconds_per_sample)
      << "\n"
      << "network_seconds = " << toml_num(cfg.timing.network_seconds) << "\n\n";
  out << "[federation]\n"
      << "strategy = " << toml_str(cfg.strategies.front()) << "\n"
      << "strategies = " << toml_list(cfg.strategies) << "\n"
      << "patience = " << cfg.federation.patience << "\n"
      << "max_rounds = " << cfg.federation.max_rounds << "\n"
      << "e_min = " << cfg.federation.e_min << "\n"
      << "e_max = " << cfg.federation.e_max << "\n"
      << "s_min = " << cfg.federation.s_min << "\n"
      << "s_max = " << cfg.federation.s_max << "\n"
      << "learning_rate = " << toml_num(cfg.federation.learning_rate) << "\n"
      << "parallel_clients = " << (cfg.parallel_clients ? "true" : "false") << "\n"
      << "threads = " << cfg.threads << "\n\n";
  out << "[fedavg]\n"
      << "epochs = " << cfg.fedavg.epochs << "\n"
      << "batch_size = " << cfg.fedavg.batch_size << "\n"
      << "fraction = " << toml_num(cfg.fedavg.fraction) << "\n\n";
  out << "[flddos]\n"
      << "epochs = " << cfg.flddos.epochs << "\n"
      << "batch_size = " << cfg.flddos.batch_size << "\n"
      << "fraction = " << toml_num(cfg.flddos.fraction) << "\n"
      << "gamma_default = " << toml_num(cfg.flddos.gamma_default) << "\n"
      << "gamma_tcp = " << toml_num(cfg.flddos.gamma_tcp) << "\n\n";
  out << "[retraining]\n"
      << "initial_clients = " << cfg.retraining.initial_clients << "\n\n";
  out << "[scalability]\n"
      << "sizes = " << toml_list(cfg.scalability.sizes) << "\n\n";
  out << "[analysis]\n"
      << "bins = " << cfg.analysis.bins << "\n"
      << "samples_per_attack = " << cfg.analysis.samples_per_attack << "\n";
}

}  // namespace flsim
