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

#ifndef TRIALMATCH_TESTS_CHAIN_COMPARE_HPP_
#define TRIALMATCH_TESTS_CHAIN_COMPARE_HPP_

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "trialmatch/chain.hpp"

namespace trialmatch::oracle {

inline RefState to_ref(const ProposerState& s) {
  return {mood_letter(s.mood),
          s.baseline_action.is_self() ? -1 : static_cast<int>(s.baseline_action.acceptor()),
          s.baseline_utility};
}

inline std::vector<RefState> to_ref(const JointState& js) {
  std::vector<RefState> out;
  for (const auto& s : js) out.push_back(to_ref(s));
  return out;
}

// Largest entrywise gap between the library matrix and the reference rule.
inline double max_gap_to_reference(const Market& market, const RuleParams& params) {
  const PerturbedChain chain = build_chain(market, params, 1);
  const RefRule rule{params.epsilon, params.revert_keeps_baseline_utility};
  double gap = 0.0;
  for (std::size_t s = 0; s < chain.size(); ++s) {
    auto expected = ref_row(market, to_ref(chain.space.decode(s)), rule);
    for (SparseRowMatrix::InnerIterator it(chain.transitions, static_cast<Eigen::Index>(s)); it;
         ++it) {
      const auto key = to_ref(chain.space.decode(static_cast<std::size_t>(it.col())));
      gap = std::max(gap, std::abs(it.value() - expected[key]));
      expected.erase(key);
    }
    for (const auto& [key, p] : expected) gap = std::max(gap, p);
  }
  return gap;
}

}  // namespace trialmatch::oracle

#endif  // TRIALMATCH_TESTS_CHAIN_COMPARE_HPP_
