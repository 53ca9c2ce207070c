#include "flsim/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "flsim/crc32.hpp"
#include "flsim/dataset_io.hpp"
#include "flsim/errors.hpp"
#include "flsim/histogram.hpp"
#include "flsim/metrics.hpp"

namespace flsim {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
    out << text;
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

fs::path prepare_out_dir(const ExperimentConfig& cfg, const std::string& out_dir) {
  fs::path dir(out_dir);
  fs::create_directories(dir);
  std::ostringstream echo;
  write_effective_config(cfg, echo);
  write_text_atomic(dir / "effective_config.toml", echo.str());
  return dir;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  return m / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  return std::sqrt(var / static_cast<double>(v.size()));
}

std::string dataset_bytes(const DatasetSplit& split) {
  std::ostringstream ss;
  save_dataset(split, ss);
  return ss.str();
}

std::uint32_t file_crc(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  return Crc32::of(bytes.data(), bytes.size());
}

}  // namespace

ClientState make_client(const std::string& id, const DatasetSplit& split,
                        bool normalize, const TimingConfig& timing, double gamma) {
  if (split.train.empty())
    throw DataError("client '" + id + "': empty training split");
  if (split.validation.empty())
    throw DataError("client '" + id + "': empty validation split (increase the "
                    "per-attack sample count)");

  auto data = std::make_shared<ClientData>();
  const auto flatten_part = [](const std::vector<FlowSample>& part, MatX<float>& x,
                               VecX<float>& y) {
    const Eigen::Index cols =
        part.empty() ? kFlowPackets * kPacketFeatures : part.front().features.size();
    x.resize(static_cast<Eigen::Index>(part.size()), cols);
    y.resize(static_cast<Eigen::Index>(part.size()));
    for (std::size_t i = 0; i < part.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = flatten(part[i]).transpose();
      y[static_cast<Eigen::Index>(i)] = static_cast<float>(part[i].label);
    }
  };
  flatten_part(split.train, data->x_train, data->y_train);
  flatten_part(split.validation, data->x_val, data->y_val);
  flatten_part(split.test, data->x_test, data->y_test);
  for (const auto& s : split.test) data->test_tags.push_back(s.attack_tag);

  data->feature_scale = VecX<float>::Ones(kPacketFeatures);
  if (normalize) {
    // Per-attribute maximum over the client's own training packets.  Only
    // a scale (no shift) is applied: features are non-negative by
    // construction and a shift would destroy the all-zero padding rows.
    for (const auto& s : split.train)
      for (Eigen::Index r = 0; r < s.features.rows(); ++r)
        for (Eigen::Index c = 0; c < s.features.cols(); ++c)
          data->feature_scale[c] = std::max(data->feature_scale[c], s.features(r, c));
    const auto apply = [&](MatX<float>& x) {
      for (Eigen::Index col = 0; col < x.cols(); ++col)
        x.col(col) /= data->feature_scale[col % kPacketFeatures];
    };
    apply(data->x_train);
    apply(data->x_val);
    apply(data->x_test);
  }

  ClientState c;
  c.id = id;
  c.gamma = gamma;
  c.step_time =
      timing.step_seconds_per_sample * static_cast<double>(split.train.size());
  c.network_time = timing.network_seconds;
  c.data = std::move(data);
  return c;
}

FederationData build_federation_data(const ExperimentConfig& cfg) {
  FederationData out;
  if (cfg.dataset.source == "files") {
    std::set<std::string> seen;
    for (const auto& path : cfg.dataset.files) {
      DatasetSplit split = load_dataset_file(path);
      if (!seen.insert(split.attack_tag).second)
        split.attack_tag += "#" + std::to_string(out.splits.size());
      out.splits.push_back(std::move(split));
    }
    if (!cfg.dataset.spec_file.empty()) {
      out.library = load_attack_library_file(cfg.dataset.spec_file);
      out.has_library = true;
    }
  } else {
    out.library = load_attack_library_file(cfg.dataset.spec_file);
    if (!cfg.dataset.attacks.empty())
      out.library = out.library.subset(cfg.dataset.attacks);
    out.has_library = true;
    out.spec_crc = file_crc(cfg.dataset.spec_file);
    GenerateOptions gen;
    gen.base_count = cfg.dataset.base_count;
    gen.max_count = cfg.dataset.max_count;
    gen.clients = cfg.dataset.clients;
    gen.attacks_per_client = cfg.dataset.attacks_per_client;
    out.splits = generate_federation_data(out.library, gen,
                                          derive_seed(cfg.seed, "data"));
  }
  if (out.splits.empty()) throw DataError("no client datasets configured");

  ordered_json clients = ordered_json::array();
  Crc32 chain;
  for (const auto& split : out.splits) {
    // Fingerprint the payload without the stored trailer; hashing the whole
    // container collapses to the crc32 residue constant for every client.
    const std::string bytes = dataset_bytes(split);
    const std::uint32_t crc = Crc32::of(bytes.data(), bytes.size() - 4);
    chain.update(&crc, sizeof crc);
    std::size_t attack = 0, benign = 0;
    for (const auto* part : {&split.train, &split.validation, &split.test})
      for (const auto& s : *part) (s.label == 1 ? attack : benign) += 1;
    clients.push_back({{"id", split.attack_tag},
                       {"samples", split.size()},
                       {"train", split.train.size()},
                       {"validation", split.validation.size()},
                       {"test", split.test.size()},
                       {"attack", attack},
                       {"benign", benign},
                       {"crc32", crc}});
  }
  out.combined_crc = chain.value();
  out.manifest = ordered_json{{"format", "flsim-manifest"},
                              {"version", 1},
                              {"seed", cfg.seed},
                              {"source", cfg.dataset.source},
                              {"spec_file", cfg.dataset.spec_file},
                              {"spec_crc32", out.spec_crc},
                              {"clients", clients},
                              {"combined_crc32", out.combined_crc}};
  return out;
}

namespace {

double gamma_for(const FederationData& data, const ExperimentConfig& cfg,
                 const DatasetSplit& split) {
  if (!data.has_library) return cfg.flddos.gamma_default;
  // TCP-only clients get the TCP gamma; anything mixed or unknown keeps the
  // default.
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : split.attack_tag + "+") {
    if (ch == '+') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  bool all_tcp = !parts.empty();
  for (const auto& name : parts) {
    const auto* spec = data.library.find(name);
    all_tcp = all_tcp && spec && spec->protocol == ProtocolClass::Tcp;
  }
  return all_tcp ? cfg.flddos.gamma_tcp : cfg.flddos.gamma_default;
}

}  // namespace

std::vector<ClientState> make_clients(const FederationData& data,
                                      const ExperimentConfig& cfg,
                                      Strategy strategy) {
  std::vector<ClientState> clients;
  clients.reserve(data.splits.size());
  for (const auto& split : data.splits) {
    const double gamma = strategy == Strategy::Flddos
                             ? gamma_for(data, cfg, split)
                             : 1.0;
    clients.push_back(make_client(split.attack_tag, split, cfg.dataset.normalize,
                                  cfg.timing, gamma));
  }
  return clients;
}

ordered_json round_report_json(const RoundReport& rep) {
  ordered_json j;
  j["round"] = rep.round;
  j["selected"] = rep.selected;
  ordered_json clients = ordered_json::array();
  for (const auto& c : rep.clients) {
    clients.push_back({{"id", c.id},
                       {"f1", c.accuracy},
                       {"epochs", c.epochs},
                       {"steps", c.steps},
                       {"sim_s", c.sim_seconds}});
  }
  j["clients"] = clients;
  j["mean_f1"] = rep.mean_accuracy;
  j["std_f1"] = rep.accuracy_stddev;
  j["best_f1"] = rep.best_accuracy;
  j["best_round"] = rep.best_round;
  j["stall"] = rep.stall_rounds;
  j["budget_steps"] = rep.budget_steps;
  j["sim_round_s"] = rep.sim_round_seconds;
  j["sim_total_s"] = rep.sim_total_seconds;
  j["truncated"] = rep.truncated;
  return j;
}

std::string reports_to_jsonl(const std::vector<RoundReport>& reports) {
  std::string out;
  for (const auto& rep : reports) {
    out += round_report_json(rep).dump();
    out += '\n';
  }
  return out;
}

ordered_json run_summary_json(const FederationResult& result,
                              const std::vector<ClientState>& clients,
                              Strategy strategy, int repetition) {
  ordered_json per_client = ordered_json::object();
  const RoundReport* source = nullptr;
  if (result.best_round >= 1)
    source = &result.reports[static_cast<std::size_t>(result.best_round - 1)];
  else if (!result.reports.empty())
    source = &result.reports.back();
  if (source)
    for (const auto& c : source->clients) per_client[c.id] = c.accuracy;

  std::int64_t budget = 0;
  double sim_total = 0.0;
  for (const auto& rep : result.reports) {
    budget += rep.budget_steps;
    sim_total = rep.sim_total_seconds;
  }
  (void)clients;

  ordered_json j;
  j["strategy"] = to_string(strategy);
  j["repetition"] = repetition;
  j["rounds"] = result.rounds;
  j["best_round"] = result.best_round;
  j["best_f1"] = result.best_accuracy;
  j["val_f1_std_at_best"] = source ? source->accuracy_stddev : 0.0;
  j["sim_total_s"] = sim_total;
  j["budget_steps"] = budget;
  j["truncated"] = result.truncated;
  j["per_client_f1"] = per_client;
  return j;
}

namespace {

struct TestMetrics {
  double f1 = 0.0;
  std::map<std::string, double> attack_tpr;  // per non-benign tag
};

TestMetrics test_metrics(const MlpParams<float>& model,
                         const std::vector<ClientState>& clients) {
  TestMetrics out;
  ConfusionCounts pooled;
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> per_tag;  // tp, fn
  for (const auto& c : clients) {
    if (!c.data || c.data->x_test.rows() == 0) continue;
    const VecX<float> probs = forward(model, c.data->x_test);
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      const bool pred = probs[i] >= 0.5f;
      const bool truth = c.data->y_test[i] == 1.0f;
      if (pred && truth)
        ++pooled.tp;
      else if (pred && !truth)
        ++pooled.fp;
      else if (!pred && truth)
        ++pooled.fn;
      else
        ++pooled.tn;
      if (truth) {
        auto& [tp, fn] = per_tag[c.data->test_tags[static_cast<std::size_t>(i)]];
        (pred ? tp : fn) += 1;
      }
    }
  }
  out.f1 = f1_score(pooled);
  for (const auto& [tag, counts] : per_tag) {
    const auto& [tp, fn] = counts;
    out.attack_tpr[tag] =
        tp + fn == 0 ? 0.0
                     : static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  return out;
}

struct RunRecord {
  Strategy strategy;
  int repetition = 0;
  FederationResult result;
  TestMetrics test;
  double val_std_at_best = 0.0;
  std::int64_t budget = 0;
  double sim_total = 0.0;
  double wall_total = 0.0;
};

RunRecord execute_run(std::vector<ClientState>& clients, const FlHyperParams& hp,
                      std::uint64_t seed, const ExperimentConfig& cfg,
                      Strategy strategy, int repetition,
                      const std::optional<MlpParams<float>>& initial_model = {}) {
  RunOptions opt;
  opt.parallel = cfg.parallel_clients;
  opt.threads = cfg.threads;
  opt.initial_model = initial_model;
  RunRecord rec;
  rec.strategy = strategy;
  rec.repetition = repetition;
  rec.result = run_federation(clients, hp, seed, opt);
  rec.test = test_metrics(rec.result.best_model, clients);
  for (const auto& rep : rec.result.reports) {
    rec.budget += rep.budget_steps;
    rec.sim_total = rep.sim_total_seconds;
    rec.wall_total = rep.wall_total_seconds;
  }
  if (rec.result.best_round >= 1)
    rec.val_std_at_best =
        rec.result.reports[static_cast<std::size_t>(rec.result.best_round - 1)]
            .accuracy_stddev;
  else if (!rec.result.reports.empty())
    rec.val_std_at_best = rec.result.reports.back().accuracy_stddev;
  return rec;
}

std::string rep_file_stem(int repetition, const std::string& strategy) {
  std::ostringstream ss;
  ss << "rep" << (repetition < 10 ? "0" : "") << repetition << "_" << strategy;
  return ss.str();
}

void note(bool quiet, const std::string& line) {
  if (!quiet) std::cout << line << "\n";
}

}  // namespace

void cmd_generate(const ExperimentConfig& cfg, const std::string& out_dir,
                  bool quiet) {
  if (cfg.dataset.source != "generated")
    throw ConfigError("generate: dataset.source must be \"generated\"");
  const fs::path dir = prepare_out_dir(cfg, out_dir);
  FederationData data = build_federation_data(cfg);

  ordered_json manifest = data.manifest;
  ordered_json& clients = manifest["clients"];
  for (std::size_t i = 0; i < data.splits.size(); ++i) {
    std::ostringstream name;
    name << "client_" << (i < 10 ? "0" : "") << i << ".flnd";
    const fs::path path = dir / name.str();
    save_dataset_file(data.splits[i], path.string());
    clients[i]["file"] = name.str();
    note(quiet, "wrote " + path.string() + " (" +
                    std::to_string(data.splits[i].size()) + " samples)");
  }
  write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  note(quiet, "manifest combined_crc32 " + std::to_string(data.combined_crc));
}

void cmd_train(const ExperimentConfig& cfg, const std::string& out_dir, bool quiet) {
  if (cfg.scenario != Scenario::Convergence && cfg.scenario != Scenario::SingleRun)
    throw ConfigError("train: scenario must be convergence or single-run, got " +
                      to_string(cfg.scenario));
  const fs::path dir = prepare_out_dir(cfg, out_dir);
  FederationData data = build_federation_data(cfg);
  write_text_atomic(dir / "dataset_manifest.json", data.manifest.dump(2) + "\n");

  const bool matched = cfg.scenario == Scenario::Convergence;
  std::map<std::string, std::vector<RunRecord>> by_strategy;
  ordered_json wall = ordered_json::object();

  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    const std::uint64_t rep_seed = derive_seed(cfg.seed, "rep",
                                               static_cast<std::uint64_t>(rep));
    int matched_rounds = 0;
    for (const auto& name : cfg.strategies) {
      const Strategy strategy = parse_strategy(name);
      FlHyperParams hp = resolve_hyper_params(cfg, strategy);
      if (matched && strategy != Strategy::Flad) {
        // Baselines replay exactly the round budget the adaptive run used.
        hp.max_rounds = matched_rounds;
        hp.patience = matched_rounds + 1;
      }
      auto clients = make_clients(data, cfg, strategy);
      RunRecord rec = execute_run(clients, hp, rep_seed, cfg, strategy, rep);
      if (matched && strategy == Strategy::Flad) matched_rounds = rec.result.rounds;

      const std::string stem = rep_file_stem(rep, name);
      write_text_atomic(dir / (stem + ".jsonl"), reports_to_jsonl(rec.result.reports));
      write_text_atomic(
          dir / (stem + "_summary.json"),
          run_summary_json(rec.result, clients, strategy, rep).dump(2) + "\n");
      save_model_file(rec.result.best_model, (dir / (stem + "_model.flmp")).string());
      wall[stem] = rec.wall_total;
      std::ostringstream line;
      line << stem << ": rounds " << rec.result.rounds << ", best F1 "
           << rec.result.best_accuracy << " (round " << rec.result.best_round
           << "), test F1 " << rec.test.f1;
      note(quiet, line.str());
      by_strategy[name].push_back(std::move(rec));
    }
  }

  ordered_json summary;
  summary["scenario"] = to_string(cfg.scenario);
  summary["seed"] = cfg.seed;
  summary["repetitions"] = cfg.repetitions;
  summary["clients"] = data.splits.size();
  summary["dataset_crc32"] = data.combined_crc;
  ordered_json strat = ordered_json::object();
  for (const auto& name : cfg.strategies) {
    const auto& runs = by_strategy[name];
    std::vector<double> rounds, best_f1, val_std, test_f1, sim, budget;
    for (const auto& r : runs) {
      rounds.push_back(static_cast<double>(r.result.rounds));
      best_f1.push_back(r.result.best_accuracy);
      val_std.push_back(r.val_std_at_best);
      test_f1.push_back(r.test.f1);
      sim.push_back(r.sim_total);
      budget.push_back(static_cast<double>(r.budget));
    }
    ordered_json s;
    s["dataset_crc32"] = data.combined_crc;
    s["rounds"] = rounds;
    s["rounds_mean"] = mean_of(rounds);
    s["best_f1"] = best_f1;
    s["best_f1_mean"] = mean_of(best_f1);
    s["best_f1_std"] = stddev_of(best_f1);
    s["val_f1_std_at_best_mean"] = mean_of(val_std);
    s["test_f1"] = test_f1;
    s["test_f1_mean"] = mean_of(test_f1);
    s["test_f1_std"] = stddev_of(test_f1);
    s["sim_total_s"] = sim;
    s["sim_total_s_mean"] = mean_of(sim);
    s["budget_steps"] = budget;
    s["budget_steps_mean"] = mean_of(budget);
    std::map<std::string, std::vector<double>> tpr_by_tag;
    for (const auto& r : runs)
      for (const auto& [tag, v] : r.test.attack_tpr) tpr_by_tag[tag].push_back(v);
    ordered_json tpr = ordered_json::object();
    for (const auto& [tag, values] : tpr_by_tag)
      tpr[tag] = {{"mean", mean_of(values)},
                  {"std", stddev_of(values)},
                  {"values", values}};
    s["per_attack_tpr"] = tpr;
    strat[name] = s;
  }
  summary["strategies"] = strat;
  write_text_atomic(dir / "summary.json", summary.dump(2) + "\n");
  write_text_atomic(dir / "timing.json",
                    ordered_json{{"wall_s", wall}}.dump(2) + "\n");
}

void cmd_retrain(const ExperimentConfig& cfg, const std::string& out_dir,
                 bool quiet) {
  if (cfg.scenario != Scenario::Retraining)
    throw ConfigError("retrain: scenario must be retraining, got " +
                      to_string(cfg.scenario));
  if (cfg.dataset.source != "generated")
    throw ConfigError("retrain: dataset.source must be \"generated\"");
  if (cfg.dataset.attacks_per_client != 1)
    throw ConfigError("retrain: attacks_per_client must be 1; stages add one "
                      "attack-specific client at a time");
  const fs::path dir = prepare_out_dir(cfg, out_dir);
  FederationData data = build_federation_data(cfg);
  write_text_atomic(dir / "dataset_manifest.json", data.manifest.dump(2) + "\n");

  const int total = static_cast<int>(data.splits.size());
  if (total < 3)
    throw ConfigError("retrain: need at least 3 attack datasets, got " +
                      std::to_string(total));
  const int initial = cfg.retraining.initial_clients;
  if (initial >= total)
    throw ConfigError("retrain: initial_clients must leave room to grow (" +
                      std::to_string(initial) + " vs " + std::to_string(total) +
                      " clients)");

  ordered_json reps = ordered_json::array();
  ordered_json wall = ordered_json::object();
  std::vector<std::vector<double>> stage_f1(static_cast<std::size_t>(total - initial) + 1);
  std::vector<std::vector<double>> stage_std(stage_f1.size());

  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    const std::uint64_t rep_seed = derive_seed(cfg.seed, "rep",
                                               static_cast<std::uint64_t>(rep));
    std::vector<int> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 rng(derive_seed(rep_seed, "order"));
    shuffle(order, rng);

    std::optional<MlpParams<float>> carry;
    ordered_json stages = ordered_json::array();
    double wall_total = 0.0;
    for (int stage = 0; initial + stage <= total; ++stage) {
      const int n_clients = initial + stage;
      FederationData subset;
      subset.library = data.library;
      subset.has_library = data.has_library;
      for (int i = 0; i < n_clients; ++i)
        subset.splits.push_back(data.splits[static_cast<std::size_t>(
            order[static_cast<std::size_t>(i)])]);
      auto clients = make_clients(subset, cfg, Strategy::Flad);

      const std::uint64_t stage_seed = derive_seed(rep_seed, "stage",
                                                   static_cast<std::uint64_t>(stage));
      const std::uint32_t init_crc =
          carry ? model_crc32(*carry) : 0;
      RunRecord rec = execute_run(clients, resolve_hyper_params(cfg, Strategy::Flad),
                                  stage_seed, cfg, Strategy::Flad, rep, carry);

      const std::string stem =
          rep_file_stem(rep, "stage" + std::to_string(stage));
      write_text_atomic(dir / (stem + ".jsonl"), reports_to_jsonl(rec.result.reports));
      wall_total += rec.wall_total;

      ordered_json stage_json;
      stage_json["stage"] = stage;
      ordered_json ids = ordered_json::array();
      for (const auto& c : clients) ids.push_back(c.id);
      stage_json["clients"] = ids;
      stage_json["rounds"] = rec.result.rounds;
      stage_json["best_round"] = rec.result.best_round;
      stage_json["mean_f1"] = rec.result.best_accuracy;
      stage_json["std_f1"] = rec.val_std_at_best;
      stage_json["test_f1"] = rec.test.f1;
      stage_json["sim_total_s"] = rec.sim_total;
      stage_json["budget_steps"] = rec.budget;
      stage_json["init_model_crc32"] = init_crc;
      stage_json["best_model_crc32"] = model_crc32(rec.result.best_model);
      stages.push_back(stage_json);
      stage_f1[static_cast<std::size_t>(stage)].push_back(rec.result.best_accuracy);
      stage_std[static_cast<std::size_t>(stage)].push_back(rec.val_std_at_best);

      std::ostringstream line;
      line << "rep " << rep << " stage " << stage << " (" << n_clients
           << " clients): best F1 " << rec.result.best_accuracy << " in "
           << rec.result.rounds << " rounds";
      note(quiet, line.str());
      carry = rec.result.best_model;
    }
    reps.push_back(ordered_json{{"repetition", rep}, {"stages", stages}});
    wall[rep_file_stem(rep, "all")] = wall_total;
  }

  ordered_json summary;
  summary["scenario"] = "retraining";
  summary["seed"] = cfg.seed;
  summary["repetitions"] = cfg.repetitions;
  summary["initial_clients"] = initial;
  summary["total_clients"] = total;
  summary["runs"] = reps;
  ordered_json agg = ordered_json::array();
  std::string csv = "stage,clients,f1_mean,f1_std_across_reps,val_std_mean\n";
  for (std::size_t stage = 0; stage < stage_f1.size(); ++stage) {
    agg.push_back(ordered_json{{"stage", stage},
                               {"clients", initial + static_cast<int>(stage)},
                               {"f1_mean", mean_of(stage_f1[stage])},
                               {"f1_std_across_reps", stddev_of(stage_f1[stage])},
                               {"val_std_mean", mean_of(stage_std[stage])}});
    std::ostringstream row;
    row.precision(17);
    row << stage << "," << initial + stage << "," << mean_of(stage_f1[stage]) << ","
        << stddev_of(stage_f1[stage]) << "," << mean_of(stage_std[stage]) << "\n";
    csv += row.str();
  }
  summary["stages"] = agg;
  write_text_atomic(dir / "summary.json", summary.dump(2) + "\n");
  write_text_atomic(dir / "stages.csv", csv);
  write_text_atomic(dir / "timing.json",
                    ordered_json{{"wall_s", wall}}.dump(2) + "\n");
}

void cmd_scalability(const ExperimentConfig& cfg, const std::string& out_dir,
                     bool quiet) {
  if (cfg.scenario != Scenario::Scalability)
    throw ConfigError("scalability: scenario must be scalability, got " +
                      to_string(cfg.scenario));
  if (cfg.dataset.source != "generated")
    throw ConfigError("scalability: dataset.source must be \"generated\"");
  if (cfg.scalability.sizes.empty())
    throw ConfigError("scalability: scalability.sizes must list federation sizes");
  const fs::path dir = prepare_out_dir(cfg, out_dir);

  AttackLibrary lib = load_attack_library_file(cfg.dataset.spec_file);
  if (!cfg.dataset.attacks.empty()) lib = lib.subset(cfg.dataset.attacks);
  const int n = static_cast<int>(lib.attacks.size());
  const int capacity = n + n * (n - 1) / 2;
  for (int size : cfg.scalability.sizes)
    if (size < 1 || size > capacity)
      throw CapacityError("scalability: size " + std::to_string(size) +
                          " outside the generator capacity of " +
                          std::to_string(capacity) + " distinct clients");

  ordered_json rows = ordered_json::array();
  ordered_json wall = ordered_json::object();
  std::string csv =
      "size,f1_mean,f1_std,sim_time_mean,sim_time_std,rounds_mean\n";
  for (int size : cfg.scalability.sizes) {
    std::vector<double> f1, sim, rounds;
    double wall_total = 0.0;
    for (int rep = 0; rep < cfg.repetitions; ++rep) {
      GenerateOptions gen;
      gen.base_count = cfg.dataset.base_count;
      gen.max_count = cfg.dataset.max_count;
      gen.clients = size;
      gen.attacks_per_client = 2;
      // Fresh pair combinations each repetition: the subset beyond the
      // single-attack clients is drawn from this seed.
      const std::uint64_t data_seed =
          derive_seed(cfg.seed, "scal-data", static_cast<std::uint64_t>(size),
                      static_cast<std::uint64_t>(rep));
      FederationData data;
      data.library = lib;
      data.has_library = true;
      data.splits = generate_federation_data(lib, gen, data_seed);
      auto clients = make_clients(data, cfg, Strategy::Flad);
      const std::uint64_t run_seed =
          derive_seed(cfg.seed, "scal-run", static_cast<std::uint64_t>(size),
                      static_cast<std::uint64_t>(rep));
      RunRecord rec = execute_run(clients, resolve_hyper_params(cfg, Strategy::Flad),
                                  run_seed, cfg, Strategy::Flad, rep);
      f1.push_back(rec.result.best_accuracy);
      sim.push_back(rec.sim_total);  // includes the patience tail
      rounds.push_back(static_cast<double>(rec.result.rounds));
      wall_total += rec.wall_total;
      std::ostringstream line;
      line << "size " << size << " rep " << rep << ": best F1 "
           << rec.result.best_accuracy << ", sim time " << rec.sim_total << "s";
      note(quiet, line.str());
    }
    rows.push_back(ordered_json{{"size", size},
                                {"f1_mean", mean_of(f1)},
                                {"f1_std", stddev_of(f1)},
                                {"sim_time_mean", mean_of(sim)},
                                {"sim_time_std", stddev_of(sim)},
                                {"rounds_mean", mean_of(rounds)},
                                {"f1", f1},
                                {"sim_time", sim}});
    std::ostringstream row;
    row.precision(17);
    row << size << "," << mean_of(f1) << "," << stddev_of(f1) << ","
        << mean_of(sim) << "," << stddev_of(sim) << "," << mean_of(rounds) << "\n";
    csv += row.str();
    wall["size" + std::to_string(size)] = wall_total;
  }
  ordered_json summary;
  summary["scenario"] = "scalability";
  summary["seed"] = cfg.seed;
  summary["repetitions"] = cfg.repetitions;
  summary["sizes"] = rows;
  write_text_atomic(dir / "summary.json", summary.dump(2) + "\n");
  write_text_atomic(dir / "scalability.csv", csv);
  write_text_atomic(dir / "timing.json",
                    ordered_json{{"wall_s", wall}}.dump(2) + "\n");
}

void cmd_analyze(const ExperimentConfig& cfg, const std::string& out_dir,
                 bool quiet) {
  if (cfg.scenario != Scenario::Analyze)
    throw ConfigError("analyze: scenario must be analyze, got " +
                      to_string(cfg.scenario));
  const fs::path dir = prepare_out_dir(cfg, out_dir);

  std::vector<FeatureValueSet> sets;
  if (cfg.dataset.source == "files") {
    for (const auto& path : cfg.dataset.files) {
      const DatasetSplit split = load_dataset_file(path);
      FeatureValueSet fv;
      fv.tag = split.attack_tag;
      fv.values.resize(kPacketFeatures);
      for (const auto* part : {&split.train, &split.validation, &split.test})
        for (const auto& s : *part) {
          if (s.label != 1) continue;
          const int rows = packet_count(s.features);
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < kPacketFeatures; ++c)
              fv.values[static_cast<std::size_t>(c)].push_back(s.features(r, c));
        }
      sets.push_back(std::move(fv));
    }
  } else {
    AttackLibrary lib = load_attack_library_file(cfg.dataset.spec_file);
    if (!cfg.dataset.attacks.empty()) lib = lib.subset(cfg.dataset.attacks);
    const std::uint64_t count = cfg.analysis.samples_per_attack
                                    ? cfg.analysis.samples_per_attack
                                    : cfg.dataset.base_count;
    for (std::size_t k = 0; k < lib.attacks.size(); ++k) {
      const auto samples =
          generate_samples(lib, lib.attacks[k], count,
                           derive_seed(cfg.seed, "analyze", k));
      FeatureValueSet fv;
      fv.tag = lib.attacks[k].name;
      fv.values.resize(kPacketFeatures);
      for (const auto& s : samples) {
        const int rows = packet_count(s.features);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < kPacketFeatures; ++c)
            fv.values[static_cast<std::size_t>(c)].push_back(s.features(r, c));
      }
      sets.push_back(std::move(fv));
    }
  }
  if (sets.size() < 2)
    throw DataError("analyze: need at least two attack datasets to compare");

  std::vector<std::string> features(kFeatureNames.begin(), kFeatureNames.end());
  const JsdMatrix matrix = jsd_matrix(sets, features, cfg.analysis.bins);

  std::ostringstream csv;
  csv.precision(17);
  csv << "attack";
  for (const auto& f : features) csv << ',' << f;
  csv << '\n';
  for (std::size_t i = 0; i < matrix.tags.size(); ++i) {
    csv << matrix.tags[i];
    for (std::size_t j = 0; j < features.size(); ++j)
      csv << ',' << matrix.values(static_cast<Eigen::Index>(i),
                                  static_cast<Eigen::Index>(j));
    csv << '\n';
  }
  write_text_atomic(dir / "jsd_matrix.csv", csv.str());

  // Long-format histograms, one shared binning per feature.
  std::ostringstream hist_csv;
  hist_csv.precision(17);
  hist_csv << "attack,feature,bin_left,bin_right,density\n";
  for (std::size_t j = 0; j < features.size(); ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& s : sets)
      for (double v : s.values[j]) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    if (!(lo < hi)) {
      lo = std::isfinite(lo) ? lo - 0.5 : 0.0;
      hi = lo + 1.0;
    }
    for (const auto& s : sets) {
      const FeatureHistogram h =
          histogram(s.values[j], cfg.analysis.bins, lo, hi, features[j]);
      for (std::size_t b = 0; b < h.bins(); ++b)
        hist_csv << s.tag << ',' << features[j] << ',' << h.bin_edges[b] << ','
                 << h.bin_edges[b + 1] << ',' << h.densities[b] << '\n';
    }
  }
  write_text_atomic(dir / "histograms.csv", hist_csv.str());

  ordered_json summary;
  summary["scenario"] = "analyze";
  summary["seed"] = cfg.seed;
  summary["bins"] = cfg.analysis.bins;
  ordered_json per_attack = ordered_json::object();
  for (std::size_t i = 0; i < matrix.tags.size(); ++i) {
    double row_mean = 0.0;
    for (std::size_t j = 0; j < features.size(); ++j)
      row_mean += matrix.values(static_cast<Eigen::Index>(i),
                                static_cast<Eigen::Index>(j));
    row_mean /= static_cast<double>(features.size());
    per_attack[matrix.tags[i]] = row_mean;
  }
  summary["mean_jsd_per_attack"] = per_attack;
  write_text_atomic(dir / "summary.json", summary.dump(2) + "\n");
  note(quiet, "wrote " + (dir / "jsd_matrix.csv").string());
}

}  // namespace flsim
