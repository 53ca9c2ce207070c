#include "flsim/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "flsim/errors.hpp"

namespace flsim {

using nlohmann::json;

std::string to_string(ProtocolClass p) {
  switch (p) {
    case ProtocolClass::Tcp: return "tcp";
    case ProtocolClass::Udp: return "udp";
    case ProtocolClass::Mixed: return "mixed";
  }
  return "?";
}

double Mixture::sample(SplitMix64& rng) const {
  double total = 0.0;
  for (const auto& c : components) total += c.weight;
  double u = rng.uniform() * total;
  const Component* chosen = &components.back();
  for (const auto& c : components) {
    if (u < c.weight) {
      chosen = &c;
      break;
    }
    u -= c.weight;
  }
  if (chosen->point) return chosen->lo;
  return rng.uniform(chosen->lo, chosen->hi);
}

std::vector<std::pair<double, double>> Mixture::support() const {
  std::vector<std::pair<double, double>> s;
  s.reserve(components.size());
  for (const auto& c : components) s.emplace_back(c.lo, c.hi);
  return s;
}

void Mixture::validate(const std::string& context) const {
  if (components.empty())
    throw ConfigError(context + ": mixture needs at least one component");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight > 0.0))
      throw ConfigError(context + ": component weights must be positive");
    if (!c.point && !(c.lo < c.hi))
      throw ConfigError(context + ": uniform component needs lo < hi");
    total += c.weight;
  }
  if (!(total > 0.0)) throw ConfigError(context + ": zero total weight");
}

int FlowLengthDist::sample(SplitMix64& rng) const {
  double total = 0.0;
  for (double p : probs) total += p;
  double u = rng.uniform() * total;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (u < probs[k]) return static_cast<int>(k) + 1;
    u -= probs[k];
  }
  return static_cast<int>(probs.size());
}

void FlowLengthDist::validate(const std::string& context, int max_packets) const {
  if (probs.empty() || probs.size() > static_cast<std::size_t>(max_packets))
    throw ConfigError(context + ": flow_length must cover 1.." +
                      std::to_string(max_packets) + " packets");
  double total = 0.0;
  for (double p : probs) {
    if (p < 0.0) throw ConfigError(context + ": negative flow_length weight");
    total += p;
  }
  if (!(total > 0.0)) throw ConfigError(context + ": flow_length has zero mass");
}

const SyntheticAttackSpec* AttackLibrary::find(const std::string& name) const {
  for (const auto& a : attacks)
    if (a.name == name) return &a;
  return nullptr;
}

AttackLibrary AttackLibrary::subset(const std::vector<std::string>& names) const {
  AttackLibrary out = *this;
  out.attacks.clear();
  for (const auto& n : names) {
    const auto* spec = find(n);
    if (!spec) throw ConfigError("attack '" + n + "' not present in spec library");
    out.attacks.push_back(*spec);
  }
  return out;
}

namespace {

Mixture parse_mixture(const json& j, const std::string& context) {
  Mixture m;
  if (!j.is_array()) throw ConfigError(context + ": expected an array of components");
  for (const auto& cj : j) {
    Mixture::Component c;
    c.weight = cj.value("weight", 1.0);
    if (cj.contains("point")) {
      c.point = true;
      c.lo = c.hi = cj.at("point").get<double>();
    } else if (cj.contains("uniform")) {
      const auto& u = cj.at("uniform");
      if (!u.is_array() || u.size() != 2)
        throw ConfigError(context + ": uniform wants [lo, hi]");
      c.lo = u[0].get<double>();
      c.hi = u[1].get<double>();
    } else {
      throw ConfigError(context + ": component needs 'point' or 'uniform'");
    }
    m.components.push_back(c);
  }
  m.validate(context);
  return m;
}

FlowLengthDist parse_flow_length(const json& j, const std::string& context,
                                 int max_packets) {
  FlowLengthDist d;
  if (j.contains("weights")) {
    d.probs = j.at("weights").get<std::vector<double>>();
  } else if (j.contains("uniform")) {
    const auto& u = j.at("uniform");
    const int lo = u.at(0).get<int>(), hi = u.at(1).get<int>();
    if (lo < 1 || hi > max_packets || lo > hi)
      throw ConfigError(context + ": flow_length uniform range outside 1.." +
                        std::to_string(max_packets));
    d.probs.assign(static_cast<std::size_t>(hi), 0.0);
    for (int k = lo; k <= hi; ++k) d.probs[static_cast<std::size_t>(k - 1)] = 1.0;
  } else {
    throw ConfigError(context + ": flow_length needs 'weights' or 'uniform'");
  }
  d.validate(context, max_packets);
  return d;
}

ProtocolClass parse_protocol(const std::string& s, const std::string& context,
                             bool allow_mixed) {
  if (s == "tcp") return ProtocolClass::Tcp;
  if (s == "udp") return ProtocolClass::Udp;
  if (s == "mixed" && allow_mixed) return ProtocolClass::Mixed;
  throw ConfigError(context + ": unknown protocol '" + s + "'");
}

std::map<std::string, Mixture> parse_feature_map(const json& j,
                                                 const std::string& context) {
  std::map<std::string, Mixture> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* name : kFeatureNames) known = known || it.key() == name;
    if (!known) throw ConfigError(context + ": unknown feature '" + it.key() + "'");
    if (it.key() == std::string("Packet Length"))
      throw ConfigError(context + ": declare Packet Length via 'packet_length'");
    out.emplace(it.key(), parse_mixture(it.value(), context + "." + it.key()));
  }
  return out;
}

SyntheticAttackSpec parse_spec(const json& j, const std::string& context,
                               bool benign) {
  SyntheticAttackSpec s;
  s.name = benign ? "benign" : j.at("name").get<std::string>();
  s.protocol = parse_protocol(j.at("protocol").get<std::string>(),
                              context + "." + s.name, true);
  s.packet_length = parse_mixture(j.at("packet_length"), context + "." + s.name +
                                                             ".packet_length");
  for (const auto& iv : s.packet_length.support())
    if (!(iv.first > 0.0))
      throw ConfigError(context + "." + s.name +
                        ": packet lengths must be strictly positive, padding rows "
                        "are all-zero");
  s.flow_length =
      parse_flow_length(j.at("flow_length"), context + "." + s.name + ".flow_length",
                        kFlowPackets);
  if (j.contains("features"))
    s.feature_overrides = parse_feature_map(j.at("features"), context + "." + s.name);
  return s;
}

// Feature resolution order: per-spec override, then the defaults of the
// flow's protocol.  Validated at load time so sampling never misses.
const Mixture& resolve_feature(const AttackLibrary& lib,
                               const SyntheticAttackSpec& spec,
                               ProtocolClass flow_proto, const std::string& name) {
  auto it = spec.feature_overrides.find(name);
  if (it != spec.feature_overrides.end()) return it->second;
  const auto& defaults =
      flow_proto == ProtocolClass::Tcp ? lib.tcp_defaults : lib.udp_defaults;
  auto dit = defaults.find(name);
  if (dit == defaults.end())
    throw ConfigError("attack spec '" + spec.name + "': feature '" + name +
                      "' has no distribution for protocol " + to_string(flow_proto));
  return dit->second;
}

void validate_resolvable(const AttackLibrary& lib, const SyntheticAttackSpec& spec) {
  std::vector<ProtocolClass> protos;
  if (spec.protocol == ProtocolClass::Mixed)
    protos = {ProtocolClass::Tcp, ProtocolClass::Udp};
  else
    protos = {spec.protocol};
  for (ProtocolClass p : protos)
    for (const char* name : kFeatureNames)
      if (std::string(name) != "Packet Length") resolve_feature(lib, spec, p, name);
}

}  // namespace

AttackLibrary load_attack_library(std::istream& in, const std::string& origin) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(origin + ": not valid JSON: " + e.what());
  }
  AttackLibrary lib;
  try {
    lib.version = j.at("version").get<int>();
    if (lib.version != 1)
      throw ConfigError(origin + ": unsupported spec version " +
                        std::to_string(lib.version));
    if (j.value("packets", kFlowPackets) != kFlowPackets ||
        j.value("features", kPacketFeatures) != kPacketFeatures)
      throw ConfigError(origin + ": flow geometry must be " +
                        std::to_string(kFlowPackets) + "x" +
                        std::to_string(kPacketFeatures));
    const auto& defaults = j.at("defaults");
    lib.tcp_defaults = parse_feature_map(defaults.at("tcp"), origin + ".defaults.tcp");
    lib.udp_defaults = parse_feature_map(defaults.at("udp"), origin + ".defaults.udp");
    lib.benign = parse_spec(j.at("benign"), origin, true);
    for (const auto& aj : j.at("attacks"))
      lib.attacks.push_back(parse_spec(aj, origin + ".attacks", false));
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (lib.attacks.empty()) throw ConfigError(origin + ": no attacks declared");
  for (std::size_t i = 0; i < lib.attacks.size(); ++i)
    for (std::size_t k = i + 1; k < lib.attacks.size(); ++k)
      if (lib.attacks[i].name == lib.attacks[k].name)
        throw ConfigError(origin + ": duplicate attack name '" + lib.attacks[i].name +
                          "'");
  for (const auto& a : lib.attacks) validate_resolvable(lib, a);
  validate_resolvable(lib, lib.benign);
  return lib;
}

AttackLibrary load_attack_library_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open attack spec file '" + path + "'");
  return load_attack_library(in, path);
}

namespace {

FlowSample draw_flow(const AttackLibrary& lib, const SyntheticAttackSpec& spec,
                     SplitMix64& rng) {
  FlowSample s;
  s.features = Eigen::MatrixXf::Zero(kFlowPackets, kPacketFeatures);
  s.label = spec.name == "benign" ? 0 : 1;
  s.attack_tag = spec.name;

  ProtocolClass proto = spec.protocol;
  if (proto == ProtocolClass::Mixed)
    proto = rng.next() & 1 ? ProtocolClass::Tcp : ProtocolClass::Udp;

  const int packets = spec.flow_length.sample(rng);
  for (int r = 0; r < packets; ++r) {
    for (int c = 0; c < kPacketFeatures; ++c) {
      const std::string name = kFeatureNames[static_cast<std::size_t>(c)];
      double v;
      if (name == "Packet Length")
        v = spec.packet_length.sample(rng);
      else
        v = resolve_feature(lib, spec, proto, name).sample(rng);
      s.features(r, c) = static_cast<float>(v);
    }
  }
  // Packets are chronological: the Time column is sorted and rebased so the
  // first packet sits at 0.
  if (packets > 1) {
    std::vector<float> t(static_cast<std::size_t>(packets));
    for (int r = 0; r < packets; ++r) t[static_cast<std::size_t>(r)] = s.features(r, 0);
    std::sort(t.begin(), t.end());
    for (int r = 0; r < packets; ++r)
      s.features(r, 0) = t[static_cast<std::size_t>(r)] - t[0];
  } else if (packets == 1) {
    s.features(0, 0) = 0.0f;
  }
  return s;
}

}  // namespace

std::vector<FlowSample> generate_samples(const AttackLibrary& lib,
                                         const SyntheticAttackSpec& spec,
                                         std::uint64_t count, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<FlowSample> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) out.push_back(draw_flow(lib, spec, rng));
  return out;
}

std::vector<DatasetSplit> generate_federation_data(const AttackLibrary& lib,
                                                   const GenerateOptions& opt,
                                                   std::uint64_t seed) {
  const auto n_specs = static_cast<int>(lib.attacks.size());
  if (opt.base_count < 5)
    throw ConfigError("generate: base_count must be at least 5");
  if (opt.attacks_per_client != 1 && opt.attacks_per_client != 2)
    throw ConfigError("generate: attacks_per_client must be 1 or 2");
  const int capacity = opt.attacks_per_client == 1
                           ? n_specs
                           : n_specs + n_specs * (n_specs - 1) / 2;
  const int clients = opt.clients == 0 ? n_specs : opt.clients;
  if (clients < 1 || clients > capacity)
    throw CapacityError("generate: " + std::to_string(clients) +
                        " clients requested but the spec library supports at most " +
                        std::to_string(capacity) + " distinct client datasets");

  // Per-attack balanced splits; attack k's class size doubles with k.
  std::vector<DatasetSplit> base;
  base.reserve(static_cast<std::size_t>(n_specs));
  for (int k = 0; k < n_specs; ++k) {
    std::uint64_t count = opt.base_count;
    for (int d = 0; d < k && count < opt.max_count; ++d) count *= 2;
    count = std::min<std::uint64_t>(count, opt.max_count);

    auto attack = generate_samples(lib, lib.attacks[static_cast<std::size_t>(k)],
                                   count, derive_seed(seed, "attack", k));
    auto benign =
        generate_samples(lib, lib.benign, count, derive_seed(seed, "benign", k));
    attack.insert(attack.end(), benign.begin(), benign.end());
    DatasetSplit split = split_dataset(attack, derive_seed(seed, "split", k));
    split.attack_tag = lib.attacks[static_cast<std::size_t>(k)].name;
    base.push_back(std::move(split));
  }

  std::vector<DatasetSplit> out;
  out.reserve(static_cast<std::size_t>(clients));
  for (int i = 0; i < clients && i < n_specs; ++i)
    out.push_back(base[static_cast<std::size_t>(i)]);

  if (clients > n_specs) {
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < n_specs; ++i)
      for (int k = i + 1; k < n_specs; ++k) pairs.emplace_back(i, k);
    SplitMix64 rng(derive_seed(seed, "pairs"));
    shuffle(pairs, rng);
    for (int c = n_specs; c < clients; ++c) {
      const auto [i, k] = pairs[static_cast<std::size_t>(c - n_specs)];
      const DatasetSplit& a = base[static_cast<std::size_t>(i)];
      const DatasetSplit& b = base[static_cast<std::size_t>(k)];
      DatasetSplit merged;
      merged.attack_tag = a.attack_tag + "+" + b.attack_tag;
      merged.train = a.train;
      merged.train.insert(merged.train.end(), b.train.begin(), b.train.end());
      merged.validation = a.validation;
      merged.validation.insert(merged.validation.end(), b.validation.begin(),
                               b.validation.end());
      merged.test = a.test;
      merged.test.insert(merged.test.end(), b.test.begin(), b.test.end());
      out.push_back(std::move(merged));
    }
  }
  return out;
}

}  // namespace flsim
