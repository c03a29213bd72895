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

// Market JSON I/O, random market generation and the small reference
// markets used throughout the tests.
//
// Schema (see docs/formats.md):
//   { "proposers": ["P1", ...], "acceptors": ["A1", ...],
//     "proposer_prefs": { "P1": ["A2", "A1"] | {"A1": 0.4, "A2": 0.9}, ... },
//     "acceptor_prefs": { ... } }
// A list is best first and is converted by rank.

#ifndef TRIALMATCH_MARKET_IO_HPP_
#define TRIALMATCH_MARKET_IO_HPP_

#include <cstddef>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "trialmatch/market.hpp"

namespace trialmatch {

RawMarket parse_market_json(const std::string& text);
Market load_market(const std::string& path);

// Ordinal form writes best-first lists; otherwise explicit values.
nlohmann::json market_to_json(const Market& market, bool ordinal);

enum class Cardinalization { kRank, kUniform };

struct MarketGenSpec {
  std::size_t num_proposers = 0;
  std::size_t num_acceptors = 0;
  std::uint64_t seed = 0;
  Cardinalization mode = Cardinalization::kRank;
};

// Random complete strict preferences; identical output for identical specs.
Market generate_market(const MarketGenSpec& spec);

namespace fixtures {

// P1: A1>A2, P2: A1>A2, A1: P2>P1, A2: P1>P2. Unique stable match
// {(P1,A2),(P2,A1)}.
Market m2();
// P1: A1>A2, P2: A2>A1, A1: P2>P1, A2: P1>P2. Two stable matches; the
// proposer-optimal one gives every proposer its favourite.
Market m2b();
// n x n, P_i and A_i rank each other first; the identity match is the only
// stable match.
Market aligned(std::size_t n = 3);

}  // namespace fixtures

}  // namespace trialmatch

#endif  // TRIALMATCH_MARKET_IO_HPP_
