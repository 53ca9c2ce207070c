#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flsim/mlp.hpp"
#include "flsim/train.hpp"

namespace flsim {

enum class Strategy { Flad, FedAvg, Flddos };

std::string to_string(Strategy s);

struct FlHyperParams {
  Strategy strategy = Strategy::Flad;
  int patience = 25;
  int max_rounds = 1000;  // hard cap; the patience rule normally fires first
  // Adaptive schedule bounds (epochs and MBGD steps per round).
  int e_min = 1;
  int e_max = 5;
  int s_min = 10;
  int s_max = 1000;
  double learning_rate = 0.01;
  int hidden_layers = 2;
  int hidden_units = 32;
  // Baseline knobs: fraction of clients trained per round, fixed epoch count
  // and mini-batch size.
  double fraction = 0.8;
  int fixed_epochs = 1;
  int batch_size = 50;
};

void check_hyper_params(const FlHyperParams& hp);

// Work order for one client and one round.
struct TrainingSchedule {
  int epochs = 0;
  int steps = 0;
};

// Immutable per-client tensors.  Rows are flattened flows (n*f columns);
// labels are 0/1 floats.  test_tags keeps the per-sample attack tag for the
// per-attack detection-rate tables.
struct ClientData {
  MatX<float> x_train, x_val, x_test;
  VecX<float> y_train, y_val, y_test;
  std::vector<std::string> test_tags;
  VecX<float> feature_scale;  // divisor applied per packet attribute, for provenance
};

struct ClientState {
  std::string id;
  std::shared_ptr<const ClientData> data;
  double gamma = 1.0;        // personalization blend; 1 = pure global model
  double step_time = 0.0;    // simulated seconds per MBGD step
  double network_time = 0.0; // simulated seconds of per-round transfer
  std::uint64_t rng_seed = 0;

  // Mutable run state, reset by run_federation.
  MlpParams<float> model;                       // last model received
  std::optional<MlpParams<float>> local_model;  // personalization track
  TrainingSchedule schedule;
  bool selected = false;
  double accuracy = 0.0;

  std::int64_t train_count() const { return data ? data->x_train.rows() : 0; }
};

// Uniform average of parameter sets (64-bit accumulation, cast back to
// float32).  All models must share one architecture.
MlpParams<float> aggregate_mean(const std::vector<MlpParams<float>>& models);

// Sample-count weighted average: weight k is counts[k] / sum(counts).
MlpParams<float> aggregate_fedavg(const std::vector<MlpParams<float>>& models,
                                  const std::vector<std::int64_t>& counts);

// gamma * global + (1 - gamma) * local, elementwise in double.  gamma 1
// returns the global parameters bit-for-bit, gamma 0 the local ones.
MlpParams<float> flddos_personalize(const MlpParams<float>& global,
                                    const MlpParams<float>& local, double gamma);

struct Assignment {
  bool selected = false;
  TrainingSchedule schedule;
};

// Adaptive selection: clients at or below the mean accuracy are picked, and
// each picked client gets epochs/steps interpolated between the bounds by
// its distance from the best picked accuracy (worst -> max work).  Values
// are rounded half-up, then clamped.  A degenerate picked set (all equal
// accuracies) gets maximum work.
std::vector<Assignment> select_clients(const std::vector<double>& accuracies,
                                       double mean_accuracy,
                                       const FlHyperParams& hp);

// One local training pass: start from `global`, run MBGD with the assigned
// schedule on the client's training set.  Under the personalization strategy
// the client also advances its local model (fixed epochs at the baseline
// batch size) and returns the gamma-blend; otherwise the fitted global
// parameters are returned unchanged.
MlpParams<float> client_update(ClientState& client, const MlpParams<float>& global,
                               const TrainingSchedule& schedule,
                               const FlHyperParams& hp, int round);

// Validation-set F1 at threshold 0.5.
double evaluate_client(const ClientState& client, const MlpParams<float>& model);

// Round duration: max over the trained clients of
// network_time + epochs * steps * step_time.  No trained clients -> 0.
double simulated_round_time(const std::vector<ClientState>& clients);

struct ClientRoundStat {
  std::string id;
  double accuracy = 0.0;  // validation F1 of the aggregate sent this round
  int epochs = 0;         // 0 when the client did not train
  int steps = 0;
  double sim_seconds = 0.0;
};

struct RoundReport {
  int round = 0;  // 1-based
  std::vector<std::string> selected;
  std::vector<ClientRoundStat> clients;
  double mean_accuracy = 0.0;
  double accuracy_stddev = 0.0;
  double best_accuracy = 0.0;  // running maximum after this round
  int best_round = 0;
  int stall_rounds = 0;        // rounds since the last improvement
  std::int64_t budget_steps = 0;  // sum of epochs*steps over trained clients
  double sim_round_seconds = 0.0;
  double sim_total_seconds = 0.0;
  bool truncated = false;  // set on the final report when max_rounds cut the run
  // Wall-clock measurements; kept out of the serialized report stream, which
  // must be identical between repeated runs.
  double wall_round_seconds = 0.0;
  double wall_total_seconds = 0.0;
};

struct RunOptions {
  bool parallel = false;
  int threads = 0;  // 0 = hardware concurrency
  std::optional<MlpParams<float>> initial_model;
  // Test hook replacing evaluate_client; must be deterministic.
  std::function<double(const ClientState& client, int round)> eval_override;
};

struct FederationResult {
  MlpParams<float> best_model;
  double best_accuracy = 0.0;
  int best_round = 0;
  int rounds = 0;
  bool truncated = false;
  std::vector<RoundReport> reports;
};

// Runs the federated loop until the mean validation accuracy has not
// improved for more than `patience` rounds, or max_rounds is reached.
// Mutates the clients' run state; bit-deterministic in (clients, hp, seed)
// and invariant to the parallel toggle.
FederationResult run_federation(std::vector<ClientState>& clients,
                                const FlHyperParams& hp, std::uint64_t seed,
                                const RunOptions& opt = {});

}  // namespace flsim
