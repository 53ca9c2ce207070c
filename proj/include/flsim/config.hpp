#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "flsim/federation.hpp"

namespace flsim {

enum class Scenario { Generate, Convergence, SingleRun, Retraining, Scalability,
                      Analyze };

std::string to_string(Scenario s);

struct DatasetConfig {
  std::string source = "generated";  // "generated" | "files"
  std::string spec_file;             // attack spec library (JSON)
  std::vector<std::string> attacks;  // subset filter; empty = whole library
  std::uint64_t base_count = 202;
  std::uint64_t max_count = 65536;
  int clients = 0;                   // 0 = one per attack
  int attacks_per_client = 1;
  bool normalize = true;
  std::vector<std::string> files;    // FLND paths when source == "files"
};

struct TimingConfig {
  double step_seconds_per_sample = 2e-6;  // T_s scales with the train set
  double network_seconds = 0.05;          // T_n, identical for every client
};

struct FlddosConfig {
  int epochs = 10;
  int batch_size = 100;
  double fraction = 0.8;
  double gamma_default = 1.0;
  double gamma_tcp = 0.9;  // applied to clients whose attacks are all TCP
};

struct FedAvgConfig {
  int epochs = 1;
  int batch_size = 50;
  double fraction = 0.8;
};

struct RetrainConfig {
  int initial_clients = 2;
};

struct ScalabilityConfig {
  std::vector<int> sizes;
};

struct AnalysisConfig {
  int bins = 100;
  std::uint64_t samples_per_attack = 0;  // 0 = reuse dataset.base_count
};

struct ExperimentConfig {
  Scenario scenario = Scenario::Convergence;
  std::uint64_t seed = 1;
  int repetitions = 1;
  std::vector<std::string> strategies = {"flad"};  // convergence order
  DatasetConfig dataset;
  TimingConfig timing;
  FlHyperParams federation;  // shared bounds; baseline fields filled per run
  bool parallel_clients = false;
  int threads = 0;
  FedAvgConfig fedavg;
  FlddosConfig flddos;
  RetrainConfig retraining;
  ScalabilityConfig scalability;
  AnalysisConfig analysis;
};

// Parses and validates a TOML experiment file.  Unknown keys, malformed
// values and out-of-range settings raise ConfigError naming the field.
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& text,
                                         const std::string& origin);

// Serializes the fully resolved configuration (defaults included) back to
// TOML; written next to the outputs for provenance.
void write_effective_config(const ExperimentConfig& cfg, std::ostream& out);

// Per-strategy hyper-parameter resolution for the federated loop.
FlHyperParams resolve_hyper_params(const ExperimentConfig& cfg, Strategy strategy);

Strategy parse_strategy(const std::string& name);

}  // namespace flsim
