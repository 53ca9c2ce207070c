#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "flsim/config.hpp"
#include "flsim/federation.hpp"
#include "flsim/flow_data.hpp"
#include "flsim/synth.hpp"

namespace flsim {

// Flattens a dataset split into training tensors.  With `normalize`, every
// packet attribute is divided by its maximum over the client's own training
// rows (validation and test reuse the training scale; padding stays zero).
ClientState make_client(const std::string& id, const DatasetSplit& split,
                        bool normalize, const TimingConfig& timing, double gamma);

// Client datasets plus provenance for the manifest.
struct FederationData {
  std::vector<DatasetSplit> splits;
  AttackLibrary library;
  bool has_library = false;
  std::uint32_t spec_crc = 0;       // CRC32 of the spec file bytes
  std::uint32_t combined_crc = 0;   // CRC32 chained over per-client datasets
  nlohmann::ordered_json manifest;
};

FederationData build_federation_data(const ExperimentConfig& cfg);

// Builds run-ready clients for the given strategy (the strategy decides the
// personalization gamma policy).
std::vector<ClientState> make_clients(const FederationData& data,
                                      const ExperimentConfig& cfg,
                                      Strategy strategy);

// Stable JSONL serialization of round reports: fixed key order, one object
// per line, deterministic content only (wall-clock times are excluded).
nlohmann::ordered_json round_report_json(const RoundReport& rep);
std::string reports_to_jsonl(const std::vector<RoundReport>& reports);

// Deterministic per-run summary (wall-clock totals go to the timing side
// file instead).
nlohmann::ordered_json run_summary_json(const FederationResult& result,
                                        const std::vector<ClientState>& clients,
                                        Strategy strategy, int repetition);

// Subcommand entry points.  Each creates out_dir, writes an effective
// config echo and its artifacts, and throws flsim::Error on failure.
void cmd_generate(const ExperimentConfig& cfg, const std::string& out_dir,
                  bool quiet);
void cmd_train(const ExperimentConfig& cfg, const std::string& out_dir, bool quiet);
void cmd_retrain(const ExperimentConfig& cfg, const std::string& out_dir,
                 bool quiet);
void cmd_scalability(const ExperimentConfig& cfg, const std::string& out_dir,
                     bool quiet);
void cmd_analyze(const ExperimentConfig& cfg, const std::string& out_dir,
                 bool quiet);

}  // namespace flsim
