// Copyright 2026 The qselftest Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <random>

namespace qst {

/// Deterministic random source.
///
/// Wraps std::mt19937_64, whose output sequence is fixed by the standard.
/// The helpers below avoid the standard distributions, whose outputs differ
/// between library implementations, so that a seed fully determines a run.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  int bit() { return static_cast<int>(engine_() >> 63); }

  // Uniform integer in [0, bound). bound must be nonzero.
  std::uint64_t below(std::uint64_t bound) {
    if ((bound & (bound - 1)) == 0) return engine_() & (bound - 1);
    const std::uint64_t limit = -bound % bound;  // 2^64 mod bound
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= limit) return r % bound;
    }
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stream identifiers for per-session randomness.
enum class StreamRole : std::uint64_t { verifier = 1, prover = 2, analysis = 3 };

// One root seed; per-session streams derived by counter, roles separated.
inline Rng derive_stream(std::uint64_t root_seed, std::uint64_t session_id, StreamRole role) {
  std::uint64_t h = splitmix64(root_seed);
  h = splitmix64(h ^ (session_id * 0x100000001b3ULL));
  h = splitmix64(h ^ static_cast<std::uint64_t>(role));
  return Rng(h);
}

}  // namespace qst
