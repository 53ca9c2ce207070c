#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "flsim/flow_data.hpp"
#include "flsim/mlp.hpp"

namespace flsim {

// FLND dataset container, version 1, all integers and floats little-endian:
//
//   "FLND" | u16 version | u16 n | u16 f | u32 count
//   | u8 membership[count]            0 = train, 1 = validation, 2 = test
//   | u16 tag_count | tag_count x { u16 len, utf-8 bytes }
//   | count x { u16 tag index, u8 label, n*f float32 row-major }
//   | u32 crc32 of every preceding byte
//
// Samples are stored train block first, then validation, then test.
void save_dataset(const DatasetSplit& split, std::ostream& out);
DatasetSplit load_dataset(std::istream& in, const std::string& origin = "dataset");

void save_dataset_file(const DatasetSplit& split, const std::string& path);
DatasetSplit load_dataset_file(const std::string& path);

// FLMP model container, version 1, little-endian:
//
//   "FLMP" | u16 version | u16 layer_count L | (L+1) x u32 layer widths
//   | per weight layer: float32 row-major weights, then float32 biases
//   | u32 crc32 of every preceding byte
void save_model(const MlpParams<float>& params, std::ostream& out);
MlpParams<float> load_model(std::istream& in, const std::string& origin = "model");

void save_model_file(const MlpParams<float>& params, const std::string& path);
MlpParams<float> load_model_file(const std::string& path);

// CRC32 of the FLMP serialization; a cheap fingerprint for provenance checks.
std::uint32_t model_crc32(const MlpParams<float>& params);

// Flow table ingest.  Expected header: attack_tag, label, then n*f columns
// named p<packet>_<feature> (lower-case, spaces as underscores) in row-major
// order.  Rows violating the schema, the label domain or padding contiguity
// are rejected with their line number.
std::vector<FlowSample> ingest_csv(std::istream& in, const std::string& origin = "csv");
std::vector<FlowSample> ingest_csv_file(const std::string& path);

// Matching writer, used for round-tripping and external tooling.
void export_csv(const std::vector<FlowSample>& samples, std::ostream& out);

// The canonical flattened column names, attack_tag and label excluded.
std::vector<std::string> csv_feature_columns();

}  // namespace flsim
