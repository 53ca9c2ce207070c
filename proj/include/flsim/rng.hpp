#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace flsim {

// Deterministic 64-bit generator (splitmix64, Vigna 2015).  Chosen over the
// <random> engines because its output is pinned by this header alone: no
// distribution object in the standard library guarantees a bit-exact stream,
// and reproducibility across every run of the simulator is a hard contract.
class SplitMix64 {
public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1), 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).  Modulo bias is below 2^-50 for the n used
  // here (dataset sizes, client counts); not worth a rejection loop.
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(next() % n); }

private:
  std::uint64_t state_;
};

// Fisher-Yates shuffle driven by the given stream.
template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = rng.index(i);
    std::swap(v[i - 1], v[j]);
  }
}

namespace detail {
// FNV-1a over a byte span, folded into an ongoing hash.
inline std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}
}  // namespace detail

// Labeled sub-stream derivation: all randomness in the simulator flows from
// one root seed through chains of derive_seed calls, e.g.
//   derive_seed(root, "client", client_id, round).
// The finalizer is a splitmix step so adjacent labels land far apart.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = detail::fnv1a(h, &root, sizeof root);
  h = detail::fnv1a(h, label.data(), label.size());
  h = detail::fnv1a(h, &a, sizeof a);
  h = detail::fnv1a(h, &b, sizeof b);
  return SplitMix64(h).next();
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                                 std::string_view id, std::uint64_t round = 0) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = detail::fnv1a(h, &root, sizeof root);
  h = detail::fnv1a(h, label.data(), label.size());
  h = detail::fnv1a(h, "\x1f", 1);
  h = detail::fnv1a(h, id.data(), id.size());
  h = detail::fnv1a(h, &round, sizeof round);
  return SplitMix64(h).next();
}

}  // namespace flsim
