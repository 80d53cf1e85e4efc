#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace vcps {

using Rng = std::mt19937_64;

// Tags for independent random substreams. Every consumer of randomness
// derives its generator from (seed, tag, ...) so results never depend on
// evaluation order or thread scheduling.
enum class Stream : std::uint64_t {
  channel = 1,
  exploration = 2,
  random_policy = 3,
  replay = 4,
  init = 5,
  oracle = 6,
  synth = 7,
  em = 8,
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t stream_key(std::uint64_t seed, Stream tag,
                                   std::initializer_list<std::uint64_t> path = {}) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ static_cast<std::uint64_t>(tag));
  for (auto p : path) h = mix64(h ^ mix64(p + 0x632BE59BD9B4E019ULL));
  return h;
}

inline Rng make_stream(std::uint64_t seed, Stream tag,
                       std::initializer_list<std::uint64_t> path = {}) {
  return Rng(stream_key(seed, tag, path));
}

}  // namespace vcps
