#include <cstdint>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "flsim/config.hpp"
#include "flsim/dataset_io.hpp"
#include "flsim/experiment.hpp"

using namespace flsim;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Small federation so harness runs finish in well under a second each.
std::string tiny_config(const std::string& scenario, const std::string& extra = {},
                        const std::string& top = {}) {
  return "scenario = \"" + scenario + "\"\nseed = 5\n" + top +
         "[dataset]\nspec_file = \"configs/attacks.json\"\n"
         "attacks = [\"syn\", \"ssdp\", \"dns\"]\n"
         "base_count = 48\nmax_count = 192\n"
         "[federation]\nmax_rounds = 4\npatience = 2\ns_min = 4\ns_max = 40\n" +
         extra;
}

fs::path fresh_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "flsim_harness" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("federation data manifest is deterministic with distinct client crcs") {
  const auto cfg = parse_experiment_config(tiny_config("generate"), "t.toml");
  const FederationData a = build_federation_data(cfg);
  const FederationData b = build_federation_data(cfg);
  CHECK(a.manifest.dump() == b.manifest.dump());
  CHECK(a.combined_crc == b.combined_crc);
  REQUIRE(a.splits.size() == 3);

  // Payload fingerprints must depend on the payload.
  std::vector<std::uint32_t> crcs;
  for (const auto& c : a.manifest.at("clients")) crcs.push_back(c.at("crc32"));
  REQUIRE(crcs.size() == 3);
  CHECK(crcs[0] != crcs[1]);
  CHECK(crcs[1] != crcs[2]);

  // Sample accounting in the manifest matches the splits.
  for (std::size_t i = 0; i < a.splits.size(); ++i) {
    const auto& c = a.manifest.at("clients").at(i);
    CHECK(c.at("id").get<std::string>() == a.splits[i].attack_tag);
    CHECK(c.at("samples").get<std::size_t>() == a.splits[i].size());
    CHECK(c.at("train").get<std::size_t>() == a.splits[i].train.size());
  }
}

TEST_CASE("generate writes loadable datasets referenced by the manifest") {
  const auto dir = fresh_dir("generate");
  const auto cfg = parse_experiment_config(tiny_config("generate"), "t.toml");
  cmd_generate(cfg, dir.string(), true);

  CHECK(fs::exists(dir / "effective_config.toml"));
  const json manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest.at("format") == "flsim-manifest");
  CHECK(manifest.at("clients").size() == 3);
  for (const auto& c : manifest.at("clients")) {
    const fs::path f = dir / c.at("file").get<std::string>();
    REQUIRE(fs::exists(f));
    const DatasetSplit split = load_dataset_file(f.string());
    CHECK(split.attack_tag == c.at("id").get<std::string>());
    CHECK(split.size() == c.at("samples").get<std::size_t>());
  }
  // The effective config echo itself parses.
  CHECK_NOTHROW(load_experiment_config((dir / "effective_config.toml").string()));
}

TEST_CASE("train writes per-rep artifacts whose totals match the jsonl") {
  const auto dir = fresh_dir("train");
  const auto cfg = parse_experiment_config(
      tiny_config("convergence",
                  "strategies = [\"flad\", \"fedavg\"]\n[model]\n"
                  "hidden_units = 8\n"),
      "t.toml");
  cmd_train(cfg, dir.string(), true);

  const json summary = json::parse(slurp(dir / "summary.json"));
  CHECK(summary.at("clients") == 3);
  REQUIRE(summary.at("strategies").contains("flad"));
  REQUIRE(summary.at("strategies").contains("fedavg"));

  for (const std::string name : {"flad", "fedavg"}) {
    const json& s = summary.at("strategies").at(name);
    REQUIRE(s.at("rounds").size() == 1);

    // Recompute the run totals from the jsonl stream.
    std::istringstream lines(slurp(dir / ("rep00_" + name + ".jsonl")));
    std::string line;
    std::int64_t budget = 0;
    double sim_total = 0.0;
    int rounds = 0;
    double best = 0.0;
    while (std::getline(lines, line)) {
      const json rep = json::parse(line);
      ++rounds;
      CHECK(rep.at("round") == rounds);
      budget += rep.at("budget_steps").get<std::int64_t>();
      sim_total = rep.at("sim_total_s").get<double>();
      best = rep.at("best_f1").get<double>();

      // Deterministic keys only; wall-clock timing lives in timing.json.
      for (const auto& [key, value] : rep.items()) {
        (void)value;
        CHECK(key.find("wall") == std::string::npos);
      }
      // Round time is the slowest selected client.
      double slowest = 0.0;
      std::vector<std::string> trained;
      for (const auto& c : rep.at("clients")) {
        if (c.at("epochs").get<int>() > 0) {
          slowest = std::max(slowest, c.at("sim_s").get<double>());
          trained.push_back(c.at("id").get<std::string>());
        }
      }
      CHECK(rep.at("selected").get<std::vector<std::string>>() == trained);
      CHECK(rep.at("sim_round_s").get<double>() == slowest);
    }
    CHECK(static_cast<double>(rounds) == s.at("rounds").at(0).get<double>());
    CHECK(static_cast<double>(budget) == s.at("budget_steps").at(0).get<double>());
    CHECK(sim_total == s.at("sim_total_s").at(0).get<double>());
    CHECK(best == s.at("best_f1").at(0).get<double>());

    const json run = json::parse(slurp(dir / ("rep00_" + name + "_summary.json")));
    CHECK(run.at("budget_steps") == budget);
    CHECK(run.at("rounds") == rounds);
    CHECK_NOTHROW(load_model_file((dir / ("rep00_" + name + "_model.flmp")).string()));
  }

  // The convergence contract: baselines replay the adaptive round budget.
  CHECK(summary.at("strategies").at("fedavg").at("rounds").at(0) ==
        summary.at("strategies").at("flad").at("rounds").at(0));

  const json timing = json::parse(slurp(dir / "timing.json"));
  CHECK(timing.at("wall_s").contains("rep00_flad"));
}

TEST_CASE("train reruns are byte-identical") {
  const auto cfg = parse_experiment_config(
      tiny_config("convergence", "[model]\nhidden_units = 8\n"), "t.toml");
  const auto dir1 = fresh_dir("det1");
  const auto dir2 = fresh_dir("det2");
  cmd_train(cfg, dir1.string(), true);
  cmd_train(cfg, dir2.string(), true);
  for (const char* f : {"rep00_flad.jsonl", "rep00_flad_summary.json",
                        "summary.json", "dataset_manifest.json"})
    CHECK(slurp(dir1 / f) == slurp(dir2 / f));
}

TEST_CASE("retraining stages chain models by fingerprint") {
  const auto dir = fresh_dir("retrain");
  const auto cfg = parse_experiment_config(
      tiny_config("retraining",
                  "[model]\nhidden_units = 8\n"
                  "[retraining]\ninitial_clients = 2\n",
                  "repetitions = 2\n"),
      "t.toml");
  cmd_retrain(cfg, dir.string(), true);

  const json summary = json::parse(slurp(dir / "summary.json"));
  CHECK(summary.at("initial_clients") == 2);
  CHECK(summary.at("total_clients") == 3);
  REQUIRE(summary.at("runs").size() == 2);
  for (const auto& run : summary.at("runs")) {
    const auto& stages = run.at("stages");
    REQUIRE(stages.size() == 2);  // 2 then 3 clients
    CHECK(stages.at(0).at("clients").size() == 2);
    CHECK(stages.at(1).at("clients").size() == 3);
    // Stage 0 starts fresh; each later stage starts from the previous best.
    CHECK(stages.at(0).at("init_model_crc32") == 0);
    CHECK(stages.at(1).at("init_model_crc32") ==
          stages.at(0).at("best_model_crc32"));
    CHECK(stages.at(1).at("init_model_crc32").get<std::uint32_t>() != 0);
  }

  // stages.csv carries one aggregate row per stage.
  std::istringstream csv(slurp(dir / "stages.csv"));
  std::string line;
  REQUIRE(std::getline(csv, line));
  CHECK(line == "stage,clients,f1_mean,f1_std_across_reps,val_std_mean");
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
  CHECK(fs::exists(dir / "rep01_stage1.jsonl"));
}

TEST_CASE("scalability sweeps federation sizes into csv rows") {
  const auto dir = fresh_dir("scalability");
  const auto cfg = parse_experiment_config(
      tiny_config("scalability",
                  "[model]\nhidden_units = 8\n"
                  "[scalability]\nsizes = [2, 4]\n"),
      "t.toml");
  cmd_scalability(cfg, dir.string(), true);

  const json summary = json::parse(slurp(dir / "summary.json"));
  REQUIRE(summary.at("sizes").size() == 2);
  CHECK(summary.at("sizes").at(0).at("size") == 2);
  CHECK(summary.at("sizes").at(1).at("size") == 4);
  for (const auto& row : summary.at("sizes")) {
    CHECK(row.at("f1").size() == 1);
    CHECK(row.at("f1_mean").get<double>() >= 0.0);
    CHECK(row.at("sim_time_mean").get<double>() > 0.0);
  }

  std::istringstream csv(slurp(dir / "scalability.csv"));
  std::string line;
  REQUIRE(std::getline(csv, line));
  CHECK(line == "size,f1_mean,f1_std,sim_time_mean,sim_time_std,rounds_mean");
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);

  // A size beyond n + C(n,2) pairings of 3 attacks cannot be built.
  const auto bad = parse_experiment_config(
      tiny_config("scalability", "[scalability]\nsizes = [7]\n"), "t.toml");
  CHECK_THROWS_AS(cmd_scalability(bad, fresh_dir("scal-bad").string(), true),
                  CapacityError);
}

TEST_CASE("analyze emits the distance matrix and histograms") {
  const auto dir = fresh_dir("analyze");
  const auto cfg = parse_experiment_config(
      tiny_config("analyze", "[analysis]\nbins = 16\nsamples_per_attack = 64\n"),
      "t.toml");
  cmd_analyze(cfg, dir.string(), true);

  std::istringstream csv(slurp(dir / "jsd_matrix.csv"));
  std::string header;
  REQUIRE(std::getline(csv, header));
  CHECK(header.rfind("attack,", 0) == 0);
  std::vector<std::string> tags;
  std::string line;
  while (std::getline(csv, line))
    if (!line.empty()) tags.push_back(line.substr(0, line.find(',')));
  CHECK(tags == std::vector<std::string>{"syn", "ssdp", "dns"});

  const json summary = json::parse(slurp(dir / "summary.json"));
  CHECK(summary.at("mean_jsd_per_attack").contains("syn"));
  CHECK(fs::exists(dir / "histograms.csv"));
}

TEST_CASE("scenario mismatches are rejected before any work happens") {
  const auto generate = parse_experiment_config(tiny_config("generate"), "t.toml");
  CHECK_THROWS_AS(cmd_train(generate, fresh_dir("bad1").string(), true), ConfigError);
  CHECK_THROWS_AS(cmd_retrain(generate, fresh_dir("bad2").string(), true),
                  ConfigError);
  const auto conv = parse_experiment_config(tiny_config("convergence"), "t.toml");
  CHECK_THROWS_AS(cmd_scalability(conv, fresh_dir("bad4").string(), true),
                  ConfigError);
  CHECK_THROWS_AS(cmd_analyze(conv, fresh_dir("bad5").string(), true), ConfigError);
}
