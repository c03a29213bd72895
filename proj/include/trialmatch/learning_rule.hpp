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

// Trial-and-error learning rule run independently by each proposer. A
// proposer only ever sees its own state, its own action and the utility it
// received; nothing about the market or the other proposers.

#ifndef TRIALMATCH_LEARNING_RULE_HPP_
#define TRIALMATCH_LEARNING_RULE_HPP_

#include <compare>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trialmatch/market.hpp"
#include "trialmatch/random.hpp"

namespace trialmatch {

enum class Mood : std::uint8_t { kContent, kDiscontent, kWatchful };

char mood_letter(Mood mood);

struct ProposerState {
  Mood mood = Mood::kDiscontent;
  Action baseline_action;  // Self
  double baseline_utility = 0.0;

  static ProposerState Discontent() { return ProposerState{}; }

  friend auto operator<=>(const ProposerState&, const ProposerState&) = default;
};

// Strictly decreasing affine exponent x -> intercept - slope * x on [0, 1].
// Used for both acceptance functions: F (discontent adoption, argument u)
// and G (content adoption, argument delta u).
struct AcceptanceExponent {
  double intercept = 0.46;
  double slope = 0.45;

  double operator()(double x) const { return intercept - slope * x; }

  friend bool operator==(const AcceptanceExponent&, const AcceptanceExponent&) = default;
};

// How the discontent branch of action selection is made a proper
// distribution. The printed probabilities, 1 - e - e^1.5 and e^1.5, sum to
// 1 - e.
enum class DiscontentNormalization {
  kBaselineAbsorbs,  // stay single w.p. 1 - e^1.5
  kProportional,     // divide both printed masses by 1 - e
};

struct RuleParams {
  double epsilon = 0.05;
  AcceptanceExponent discontent_exponent;  // F
  AcceptanceExponent content_exponent;     // G
  // Content experiments skip the current baseline acceptor.
  bool exclude_baseline_from_experiments = true;
  // Failed content experiment keeps the old baseline utility instead of
  // recording the (lower) experimental one.
  bool revert_keeps_baseline_utility = true;
  DiscontentNormalization discontent_normalization = DiscontentNormalization::kBaselineAbsorbs;
};

// F(x) = G(x) = 0.46 - 0.45 x.
std::pair<AcceptanceExponent, AcceptanceExponent> default_F_G();

// Throws kInvalidEpsilon unless 0 < e and every selection mass is positive;
// throws kInvalidParams if F or G is not strictly decreasing into [0, 0.5).
void validate_params(const RuleParams& params);

struct SelectionEvent {
  Action action;
  bool experimented = false;

  friend auto operator<=>(const SelectionEvent&, const SelectionEvent&) = default;
};

struct WeightedEvent {
  SelectionEvent event;
  double probability = 0.0;
};

struct WeightedState {
  ProposerState state;
  double probability = 0.0;
};

// Exact action-selection distribution. Entries with zero mass are dropped.
std::vector<WeightedEvent> action_distribution(const ProposerState& state,
                                               const RuleParams& params,
                                               std::size_t num_acceptors);

SelectionEvent select_action(const ProposerState& state, const RuleParams& params,
                             std::size_t num_acceptors, Rng& rng);

// Exact successor distribution of the state update (one or two entries).
// Throws kInvalidTransition for a watchful proposer that experimented.
std::vector<WeightedState> update_distribution(const ProposerState& state,
                                               const SelectionEvent& event, double utility,
                                               const RuleParams& params);

ProposerState update_state(const ProposerState& state, const SelectionEvent& event,
                           double utility, const RuleParams& params, Rng& rng);

// Probability that a content proposer adopts an experiment that raised its
// utility by delta_u: e^G(delta_u), delta_u clamped to [0, 1].
double content_adoption_probability(double delta_u, const RuleParams& params);
// Probability that a discontent proposer adopts an experiment paying u: e^F(u).
double discontent_adoption_probability(double utility, const RuleParams& params);

// One proposer's private learner: its state and its own random stream.
// observe() takes nothing but the utility that proposer received.
class Learner {
 public:
  Learner(ProposerState initial, Rng rng) : state_(initial), rng_(std::move(rng)) {}

  const SelectionEvent& choose(const RuleParams& params, std::size_t num_acceptors);
  const ProposerState& observe(double utility, const RuleParams& params);

  const ProposerState& state() const { return state_; }
  const SelectionEvent& last_event() const { return last_event_; }

 private:
  ProposerState state_;
  SelectionEvent last_event_;
  Rng rng_;
};

// "C/A1/0.5" style label; names come from the market.
std::string describe_state(const Market& market, const ProposerState& state);

}  // namespace trialmatch

#endif  // TRIALMATCH_LEARNING_RULE_HPP_
