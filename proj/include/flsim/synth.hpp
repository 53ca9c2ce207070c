#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "flsim/flow_data.hpp"
#include "flsim/rng.hpp"

namespace flsim {

enum class ProtocolClass { Tcp, Udp, Mixed };

std::string to_string(ProtocolClass p);

// Weighted mixture of point masses and uniform intervals.  This is the one
// distribution shape the generator knows; every feature of every traffic
// class is declared as such a mixture in the attack spec file.
struct Mixture {
  struct Component {
    double weight = 0.0;
    double lo = 0.0;   // point mass: lo == hi
    double hi = 0.0;
    bool point = false;
  };
  std::vector<Component> components;

  double sample(SplitMix64& rng) const;
  // Closed support intervals, for declared-disjointness reasoning.
  std::vector<std::pair<double, double>> support() const;
  void validate(const std::string& context) const;
};

// Distribution of the number of real packets in a flow; probs[k] is the
// probability of k+1 packets.
struct FlowLengthDist {
  std::vector<double> probs;

  int sample(SplitMix64& rng) const;
  void validate(const std::string& context, int max_packets) const;
};

struct SyntheticAttackSpec {
  std::string name;
  ProtocolClass protocol = ProtocolClass::Udp;
  Mixture packet_length;
  FlowLengthDist flow_length;
  std::map<std::string, Mixture> feature_overrides;
  // Filled in by the federation generator (doubling rule); 0 = unset.
  std::uint64_t sample_count = 0;
};

// Parsed attack spec file: the benign profile, the attack profiles in file
// order (the order defines the size-doubling index), and per-protocol
// defaults for features an attack does not override.
struct AttackLibrary {
  int version = 0;
  SyntheticAttackSpec benign;
  std::vector<SyntheticAttackSpec> attacks;
  std::map<std::string, Mixture> tcp_defaults;
  std::map<std::string, Mixture> udp_defaults;

  const SyntheticAttackSpec* find(const std::string& name) const;
  // Library restricted to the named attacks (file order preserved).
  AttackLibrary subset(const std::vector<std::string>& names) const;
};

AttackLibrary load_attack_library(std::istream& in, const std::string& origin);
AttackLibrary load_attack_library_file(const std::string& path);

// Draws `count` flows from one profile.  Label is 1 unless the profile is
// the benign one; the sample tag is the profile name.
std::vector<FlowSample> generate_samples(const AttackLibrary& lib,
                                         const SyntheticAttackSpec& spec,
                                         std::uint64_t count, std::uint64_t seed);

struct GenerateOptions {
  std::uint64_t base_count = 202;
  std::uint64_t max_count = 65536;  // cap applied after doubling
  int clients = 0;                  // 0 = one client per attack
  int attacks_per_client = 1;       // 1 or 2
};

// Builds one balanced, pre-split dataset per client.  Attack k of the
// library receives base_count * 2^k attack flows (capped at max_count) plus
// an equal number of benign flows.  With attacks_per_client == 2 the first
// |attacks| clients keep their single-attack datasets and further clients
// take the union of a distinct attack pair, drawn in seeded order; capacity
// is |attacks| + C(|attacks|, 2).
std::vector<DatasetSplit> generate_federation_data(const AttackLibrary& lib,
                                                   const GenerateOptions& opt,
                                                   std::uint64_t seed);

}  // namespace flsim
