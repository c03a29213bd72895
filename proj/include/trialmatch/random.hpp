// Copyright 2026 The trialmatch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Deterministic random helpers. std::mt19937_64 is fully specified by the
// standard, but the std distributions are not, so draws are derived here to
// keep outputs identical across standard libraries.

#ifndef TRIALMATCH_RANDOM_HPP_
#define TRIALMATCH_RANDOM_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>

namespace trialmatch {

using Rng = std::mt19937_64;

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, bound), bound > 0, by rejection.
inline std::size_t uniform_index(Rng& rng, std::size_t bound) {
  const std::uint64_t b = bound;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % b;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % b);
}

template <typename It>
void shuffle_range(It first, It last, Rng& rng) {
  const auto count = static_cast<std::size_t>(last - first);
  for (std::size_t k = count; k > 1; --k) {
    std::swap(first[k - 1], first[uniform_index(rng, k)]);
  }
}

// Independent, reproducible stream for (seed, stream id).
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x9e3779b9u};
  return Rng(seq);
}

}  // namespace trialmatch

#endif  // TRIALMATCH_RANDOM_HPP_
