#include "flsim/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "flsim/metrics.hpp"
#include "flsim/rng.hpp"

namespace flsim {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Flad: return "flad";
    case Strategy::FedAvg: return "fedavg";
    case Strategy::Flddos: return "flddos";
  }
  return "?";
}

void check_hyper_params(const FlHyperParams& hp) {
  if (hp.patience < 1) throw ConfigError("federation: patience must be >= 1");
  if (hp.max_rounds < 1) throw ConfigError("federation: max_rounds must be >= 1");
  if (hp.e_min < 1 || hp.e_min > hp.e_max)
    throw ConfigError("federation: need 1 <= e_min <= e_max");
  if (hp.s_min < 1 || hp.s_min > hp.s_max)
    throw ConfigError("federation: need 1 <= s_min <= s_max");
  if (!(hp.learning_rate > 0.0))
    throw ConfigError("federation: learning_rate must be positive");
  if (hp.hidden_layers < 1 || hp.hidden_units < 1)
    throw ConfigError("federation: hidden geometry must be positive");
  if (!(hp.fraction > 0.0 && hp.fraction <= 1.0))
    throw ConfigError("federation: fraction must lie in (0, 1]");
  if (hp.fixed_epochs < 1) throw ConfigError("federation: epochs must be >= 1");
  if (hp.batch_size < 1) throw ConfigError("federation: batch_size must be >= 1");
}

namespace {

// Shared weighted-accumulation kernel.  Both aggregators funnel through it
// so equal sample counts and the uniform mean produce identical bits.
MlpParams<float> weighted_average(const std::vector<MlpParams<float>>& models,
                                  const std::vector<double>& weights) {
  if (models.empty()) throw InvalidArgument("aggregate: no models");
  for (const auto& m : models)
    if (!m.same_shape(models.front()))
      throw ShapeError("aggregate: models disagree on architecture");

  MlpParams<double> acc;
  acc.dims = models.front().dims;
  for (std::size_t l = 0; l < models.front().weights.size(); ++l) {
    acc.weights.push_back(MatX<double>::Zero(models.front().weights[l].rows(),
                                             models.front().weights[l].cols()));
    acc.biases.push_back(VecX<double>::Zero(models.front().biases[l].size()));
  }
  for (std::size_t k = 0; k < models.size(); ++k) {
    for (std::size_t l = 0; l < acc.weights.size(); ++l) {
      acc.weights[l] += weights[k] * models[k].weights[l].cast<double>();
      acc.biases[l] += weights[k] * models[k].biases[l].cast<double>();
    }
  }
  return acc.cast<float>();
}

}  // namespace

MlpParams<float> aggregate_mean(const std::vector<MlpParams<float>>& models) {
  if (models.empty()) throw InvalidArgument("aggregate_mean: no models");
  const std::vector<double> w(models.size(),
                              1.0 / static_cast<double>(models.size()));
  return weighted_average(models, w);
}

MlpParams<float> aggregate_fedavg(const std::vector<MlpParams<float>>& models,
                                  const std::vector<std::int64_t>& counts) {
  if (models.empty()) throw InvalidArgument("aggregate_fedavg: no models");
  if (models.size() != counts.size())
    throw ShapeError("aggregate_fedavg: " + std::to_string(models.size()) +
                     " models vs " + std::to_string(counts.size()) + " counts");
  std::int64_t total = 0;
  for (std::int64_t c : counts) {
    if (c <= 0)
      throw InvalidArgument("aggregate_fedavg: sample counts must be positive");
    total += c;
  }
  std::vector<double> w(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k)
    w[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
  return weighted_average(models, w);
}

MlpParams<float> flddos_personalize(const MlpParams<float>& global,
                                    const MlpParams<float>& local, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw InvalidArgument("personalize: gamma must lie in [0, 1], got " +
                          std::to_string(gamma));
  if (!global.same_shape(local))
    throw ShapeError("personalize: global and local architectures differ");
  if (gamma == 1.0) return global;
  if (gamma == 0.0) return local;
  MlpParams<float> out;
  out.dims = global.dims;
  for (std::size_t l = 0; l < global.weights.size(); ++l) {
    out.weights.push_back(
        (gamma * global.weights[l].cast<double>() +
         (1.0 - gamma) * local.weights[l].cast<double>())
            .cast<float>());
    out.biases.push_back((gamma * global.biases[l].cast<double>() +
                          (1.0 - gamma) * local.biases[l].cast<double>())
                             .cast<float>());
  }
  return out;
}

std::vector<Assignment> select_clients(const std::vector<double>& accuracies,
                                       double mean_accuracy,
                                       const FlHyperParams& hp) {
  if (accuracies.empty()) throw InvalidArgument("select_clients: no clients");
  check_hyper_params(hp);

  std::vector<Assignment> out(accuracies.size());
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < accuracies.size(); ++i) {
    if (accuracies[i] <= mean_accuracy) {
      out[i].selected = true;
      lo = std::min(lo, accuracies[i]);
      hi = std::max(hi, accuracies[i]);
    }
  }
  // In exact arithmetic min <= mean, so somebody is always picked.  Summation
  // rounding can push the computed mean below an all-equal vector; fall back
  // to the argmin set so a round never trains zero clients.
  if (!std::isfinite(lo)) {
    lo = hi = *std::min_element(accuracies.begin(), accuracies.end());
    for (std::size_t i = 0; i < accuracies.size(); ++i)
      out[i].selected = accuracies[i] == lo;
  }
  const double span = hi - lo;
  const auto round_half_up = [](double x) {
    return static_cast<int>(std::floor(x + 0.5));
  };
  for (std::size_t i = 0; i < accuracies.size(); ++i) {
    if (!out[i].selected) continue;
    // Worst picked client -> 1; all-equal picked set degenerates to 1 too,
    // i.e. everyone trains at the maximum budget.
    const double sigma = span == 0.0 ? 1.0 : (hi - accuracies[i]) / span;
    out[i].schedule.epochs =
        std::clamp(round_half_up(hp.e_min + (hp.e_max - hp.e_min) * sigma),
                   hp.e_min, hp.e_max);
    out[i].schedule.steps =
        std::clamp(round_half_up(hp.s_min + (hp.s_max - hp.s_min) * sigma),
                   hp.s_min, hp.s_max);
  }
  return out;
}

namespace {
int baseline_steps(std::int64_t train_count, int batch_size) {
  // Number of mini-batches of `batch_size` rows per epoch.
  const std::int64_t steps = (train_count + batch_size - 1) / batch_size;
  return static_cast<int>(std::max<std::int64_t>(steps, 1));
}
}  // namespace

MlpParams<float> client_update(ClientState& client, const MlpParams<float>& global,
                               const TrainingSchedule& schedule,
                               const FlHyperParams& hp, int round) {
  if (!client.data) throw DataError("client_update: client '" + client.id +
                                    "' has no data");
  if (schedule.epochs < 1 || schedule.steps < 1)
    throw InvalidArgument("client_update: schedule must assign at least one epoch "
                          "and one step");
  TrainConfig cfg;
  cfg.learning_rate = hp.learning_rate;
  cfg.epochs = schedule.epochs;
  cfg.mbgd_steps = schedule.steps;
  const std::uint64_t train_seed = derive_seed(client.rng_seed, "train",
                                               static_cast<std::uint64_t>(round));
  MlpParams<float> fitted =
      mbgd_fit(global, client.data->x_train, client.data->y_train, cfg, train_seed);

  if (hp.strategy != Strategy::Flddos) return fitted;

  if (!client.local_model)
    throw InvalidArgument("client_update: personalization requested but client '" +
                          client.id + "' holds no local model");
  TrainConfig local_cfg;
  local_cfg.learning_rate = hp.learning_rate;
  local_cfg.epochs = hp.fixed_epochs;
  local_cfg.mbgd_steps = baseline_steps(client.train_count(), hp.batch_size);
  const std::uint64_t local_seed = derive_seed(client.rng_seed, "local",
                                               static_cast<std::uint64_t>(round));
  client.local_model = mbgd_fit(*client.local_model, client.data->x_train,
                                client.data->y_train, local_cfg, local_seed);
  return flddos_personalize(fitted, *client.local_model, client.gamma);
}

double evaluate_client(const ClientState& client, const MlpParams<float>& model) {
  if (!client.data || client.data->x_val.rows() == 0)
    throw DataError("evaluate_client: client '" + client.id +
                    "' has no validation samples");
  const VecX<float> probs = forward(model, client.data->x_val);
  return f1_score(confusion(probs, client.data->y_val, 0.5));
}

double simulated_round_time(const std::vector<ClientState>& clients) {
  double t = 0.0;
  for (const auto& c : clients) {
    if (!c.selected) continue;
    const double work = c.network_time + static_cast<double>(c.schedule.epochs) *
                                             static_cast<double>(c.schedule.steps) *
                                             c.step_time;
    t = std::max(t, work);
  }
  return t;
}

namespace {

// Executes fn(i) for i in [0, n); with `parallel` the indices are handed to
// a small worker pool.  Results must be written to per-index slots only, so
// scheduling order cannot leak into the output.
void for_each_client(std::size_t n, bool parallel, int threads,
                     const std::function<void(std::size_t)>& fn) {
  if (!parallel || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  unsigned workers = threads > 0 ? static_cast<unsigned>(threads)
                                 : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<int> draw_selection(std::size_t n_clients, double fraction,
                                std::uint64_t seed) {
  const auto k = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(n_clients)));
  std::vector<int> ids(n_clients);
  std::iota(ids.begin(), ids.end(), 0);
  SplitMix64 rng(seed);
  shuffle(ids, rng);
  ids.resize(std::max<std::size_t>(k, 1));
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

FederationResult run_federation(std::vector<ClientState>& clients,
                                const FlHyperParams& hp, std::uint64_t seed,
                                const RunOptions& opt) {
  check_hyper_params(hp);
  if (clients.empty()) throw InvalidArgument("run_federation: no clients");
  for (const auto& c : clients) {
    if (!c.data || c.data->x_train.rows() == 0)
      throw DataError("run_federation: client '" + c.id + "' has no training data");
    if (c.data->x_train.cols() != clients.front().data->x_train.cols())
      throw ShapeError("run_federation: clients disagree on feature width");
  }

  const int input_dim = static_cast<int>(clients.front().data->x_train.cols());
  MlpParams<float> w0;
  if (opt.initial_model) {
    if (opt.initial_model->input_dim() != input_dim)
      throw ShapeError("run_federation: initial model expects " +
                       std::to_string(opt.initial_model->input_dim()) +
                       " inputs, data has " + std::to_string(input_dim));
    w0 = *opt.initial_model;
  } else {
    std::vector<int> dims;
    dims.push_back(input_dim);
    for (int l = 0; l < hp.hidden_layers; ++l) dims.push_back(hp.hidden_units);
    dims.push_back(1);
    w0 = init_mlp<float>(dims, derive_seed(seed, "init"));
  }

  // Reset run state.  Round 1 trains every client at the maximum budget
  // under the adaptive strategy; the baselines draw their usual random
  // fraction from the start.
  for (auto& c : clients) {
    c.model = w0;
    c.rng_seed = derive_seed(seed, "client", c.id);
    c.local_model.reset();
    if (hp.strategy == Strategy::Flddos) c.local_model = w0;
    c.selected = false;
    c.schedule = {};
    c.accuracy = 0.0;
  }
  const auto apply_baseline_selection = [&](int round) {
    const auto picked = draw_selection(clients.size(), hp.fraction,
                                       derive_seed(seed, "select",
                                                   static_cast<std::uint64_t>(round)));
    for (auto& c : clients) {
      c.selected = false;
      c.schedule = {};
    }
    for (int idx : picked) {
      auto& c = clients[static_cast<std::size_t>(idx)];
      c.selected = true;
      c.schedule.epochs = hp.fixed_epochs;
      c.schedule.steps = baseline_steps(c.train_count(), hp.batch_size);
    }
  };
  if (hp.strategy == Strategy::Flad) {
    for (auto& c : clients) {
      c.selected = true;
      c.schedule = {hp.e_max, hp.s_max};
    }
  } else {
    apply_baseline_selection(1);
  }

  FederationResult result;
  result.best_model = w0;
  result.best_accuracy = 0.0;
  result.best_round = 0;
  double a_max = 0.0;
  int stall = 0;
  double sim_total = 0.0;
  double wall_total = 0.0;
  std::vector<MlpParams<float>> contributions(clients.size());

  for (int round = 1; round <= hp.max_rounds; ++round) {
    const auto wall_start = std::chrono::steady_clock::now();

    for_each_client(clients.size(), opt.parallel, opt.threads, [&](std::size_t i) {
      ClientState& c = clients[i];
      if (c.selected)
        contributions[i] = client_update(c, c.model, c.schedule, hp, round);
      else
        contributions[i] = c.model;  // stale weights from the previous round
    });

    MlpParams<float> aggregate;
    if (hp.strategy == Strategy::FedAvg) {
      std::vector<std::int64_t> counts(clients.size());
      for (std::size_t i = 0; i < clients.size(); ++i)
        counts[i] = clients[i].train_count();
      aggregate = aggregate_fedavg(contributions, counts);
    } else {
      aggregate = aggregate_mean(contributions);
    }

    std::vector<double> acc(clients.size());
    for (std::size_t i = 0; i < clients.size(); ++i) {
      clients[i].model = aggregate;
      acc[i] = opt.eval_override ? opt.eval_override(clients[i], round)
                                 : evaluate_client(clients[i], aggregate);
      clients[i].accuracy = acc[i];
    }
    double mean = 0.0;
    for (double a : acc) mean += a;
    mean /= static_cast<double>(acc.size());
    double var = 0.0;
    for (double a : acc) var += (a - mean) * (a - mean);
    const double stddev = std::sqrt(var / static_cast<double>(acc.size()));

    if (mean > a_max) {
      a_max = mean;
      result.best_model = aggregate;
      result.best_accuracy = mean;
      result.best_round = round;
      stall = 0;
    } else {
      ++stall;
    }

    RoundReport rep;
    rep.round = round;
    for (const auto& c : clients)
      if (c.selected) rep.selected.push_back(c.id);
    for (const auto& c : clients) {
      ClientRoundStat st;
      st.id = c.id;
      st.accuracy = c.accuracy;
      if (c.selected) {
        st.epochs = c.schedule.epochs;
        st.steps = c.schedule.steps;
        st.sim_seconds = c.network_time + static_cast<double>(st.epochs) *
                                              static_cast<double>(st.steps) *
                                              c.step_time;
        rep.budget_steps += static_cast<std::int64_t>(st.epochs) * st.steps;
      }
      rep.clients.push_back(std::move(st));
    }
    rep.mean_accuracy = mean;
    rep.accuracy_stddev = stddev;
    rep.best_accuracy = a_max;
    rep.best_round = result.best_round;
    rep.stall_rounds = stall;
    rep.sim_round_seconds = simulated_round_time(clients);
    sim_total += rep.sim_round_seconds;
    rep.sim_total_seconds = sim_total;
    rep.wall_round_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start)
            .count();
    wall_total += rep.wall_round_seconds;
    rep.wall_total_seconds = wall_total;

    const bool converged = stall > hp.patience;
    const bool capped = round == hp.max_rounds && !converged;
    rep.truncated = capped;
    result.reports.push_back(std::move(rep));
    result.rounds = round;
    if (converged) break;
    if (capped) {
      result.truncated = true;
      break;
    }

    if (hp.strategy == Strategy::Flad) {
      const auto assignments = select_clients(acc, mean, hp);
      for (std::size_t i = 0; i < clients.size(); ++i) {
        clients[i].selected = assignments[i].selected;
        clients[i].schedule = assignments[i].schedule;
      }
    } else {
      apply_baseline_selection(round + 1);
    }
  }
  return result;
}

}  // namespace flsim
