#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "flsim/errors.hpp"
#include "flsim/rng.hpp"

namespace flsim {

// Per-packet attributes extracted from a traffic capture, in column order.
inline const std::array<const char*, 11> kFeatureNames = {
    "Time",      "Packet Length", "Highest Protocol", "IP Flags",
    "Protocols", "TCP Length",    "TCP Ack",          "TCP Flags",
    "TCP Window Size", "UDP Length", "ICMP Type"};

inline constexpr int kFlowPackets = 10;   // rows per sample
inline constexpr int kPacketFeatures = 11;  // columns per sample

// One flow: an n x f array of packet features, zero-padded after the last
// real packet, plus a binary label (1 = attack) and the attack tag the
// sample was drawn from ("benign" for background traffic).
struct FlowSample {
  Eigen::MatrixXf features;  // kFlowPackets x kPacketFeatures
  std::uint8_t label = 0;
  std::string attack_tag;
};

// Padding is contiguous: once a row is all zero, every later row must be
// all zero too.
inline bool padding_ok(const Eigen::MatrixXf& features) {
  bool seen_zero_row = false;
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    const bool zero_row = (features.row(r).array() == 0.0f).all();
    if (seen_zero_row && !zero_row) return false;
    seen_zero_row = seen_zero_row || zero_row;
  }
  return true;
}

// Number of leading non-padding rows.
inline int packet_count(const Eigen::MatrixXf& features) {
  int n = 0;
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    if ((features.row(r).array() == 0.0f).all()) break;
    ++n;
  }
  return n;
}

// Row-major flattening: packet 0's features first, then packet 1, ...
inline Eigen::VectorXf flatten(const FlowSample& s) {
  Eigen::VectorXf v(s.features.size());
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < s.features.rows(); ++r)
    for (Eigen::Index c = 0; c < s.features.cols(); ++c) v[k++] = s.features(r, c);
  return v;
}

struct DatasetSplit {
  std::string attack_tag;  // client-level tag, e.g. "syn" or "ldap+syn"
  std::vector<FlowSample> train;
  std::vector<FlowSample> validation;
  std::vector<FlowSample> test;

  std::size_t size() const { return train.size() + validation.size() + test.size(); }
};

namespace detail {
inline std::size_t count_label(const std::vector<FlowSample>& v, std::uint8_t label) {
  std::size_t n = 0;
  for (const auto& s : v) n += s.label == label;
  return n;
}

inline int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }
}  // namespace detail

// Stratified 90/10 split, then 90/10 again inside the larger part: test gets
// 10% of the whole set, validation 10% of the remainder, per class.  Both
// classes must be present and the set must hold at least 10 samples.
inline DatasetSplit split_dataset(const std::vector<FlowSample>& samples,
                                  std::uint64_t seed) {
  if (samples.size() < 10)
    throw DataError("split_dataset: need at least 10 samples, got " +
                    std::to_string(samples.size()));
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < samples.size(); ++i)
    (samples[i].label == 1 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty())
    throw DataError("split_dataset: both classes required for stratification (" +
                    std::to_string(pos.size()) + " attack, " +
                    std::to_string(neg.size()) + " benign)");

  DatasetSplit out;
  SplitMix64 rng(seed);
  for (auto* cls : {&pos, &neg}) {
    shuffle(*cls, rng);
    const std::size_t n = cls->size();
    const auto n_test = static_cast<std::size_t>(
        detail::round_half_up(0.10 * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(
        detail::round_half_up(0.10 * static_cast<double>(n - n_test)));
    for (std::size_t i = 0; i < n; ++i) {
      const FlowSample& s = samples[(*cls)[i]];
      if (i < n_test)
        out.test.push_back(s);
      else if (i < n_test + n_val)
        out.validation.push_back(s);
      else
        out.train.push_back(s);
    }
  }
  return out;
}

}  // namespace flsim
