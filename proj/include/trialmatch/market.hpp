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

// Two-sided matching market model. Proposers choose an acceptor to propose
// to (or stay single); every acceptor keeps the proposal it likes best.
// Preferences are cardinal values in (0, 1]; being unmatched is worth 0.

#ifndef TRIALMATCH_MARKET_HPP_
#define TRIALMATCH_MARKET_HPP_

#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace trialmatch {

// Exhaustive routines refuse markets with more agents on a side than this.
inline constexpr std::size_t kMaxEnumerationSide = 8;
// Exhaustive action-profile scans are limited to this many agents per side.
inline constexpr std::size_t kMaxNashScanSide = 4;

inline constexpr std::size_t kUnmatched = std::numeric_limits<std::size_t>::max();

// A proposer's move in the one-shot game: propose to one acceptor or stay
// single. Self is also the baseline action of a discontent learner.
class Action {
 public:
  constexpr Action() = default;

  static constexpr Action Self() { return Action(); }
  static constexpr Action Propose(std::size_t acceptor) {
    return Action(static_cast<std::int32_t>(acceptor));
  }

  constexpr bool is_self() const { return target_ < 0; }
  constexpr std::size_t acceptor() const {
    return static_cast<std::size_t>(target_);
  }

  friend constexpr auto operator<=>(const Action&, const Action&) = default;

 private:
  constexpr explicit Action(std::int32_t target) : target_(target) {}

  std::int32_t target_ = -1;
};

using ActionProfile = std::vector<Action>;

// Doubly indexed partial pairing; partner lookups are O(1) from both sides.
struct MatchOutcome {
  std::vector<std::size_t> proposer_partner;
  std::vector<std::size_t> acceptor_partner;

  bool proposer_matched(std::size_t i) const {
    return proposer_partner[i] != kUnmatched;
  }
  bool acceptor_matched(std::size_t j) const {
    return acceptor_partner[j] != kUnmatched;
  }

  friend auto operator<=>(const MatchOutcome&, const MatchOutcome&) = default;
};

// Input form of one agent's ordering: either a best-first list of names
// (converted by rank) or explicit name -> value pairs.
using OrdinalList = std::vector<std::string>;
using CardinalList = std::vector<std::pair<std::string, double>>;
using RawPreferences = std::variant<OrdinalList, CardinalList>;

struct RawMarket {
  std::vector<std::string> proposers;
  std::vector<std::string> acceptors;
  std::map<std::string, RawPreferences> proposer_prefs;
  std::map<std::string, RawPreferences> acceptor_prefs;
};

// Validated, immutable market. Values are stored densely:
// proposer_value(i, j) = O_{P_i}(A_j) and acceptor_value(j, i) = O_{A_j}(P_i).
class Market {
 public:
  std::size_t num_proposers() const { return proposers_.size(); }
  std::size_t num_acceptors() const { return acceptors_.size(); }

  const std::string& proposer_name(std::size_t i) const { return proposers_[i]; }
  const std::string& acceptor_name(std::size_t j) const { return acceptors_[j]; }

  double proposer_value(std::size_t i, std::size_t j) const {
    return j == kUnmatched ? 0.0 : proposer_values_[i * num_acceptors() + j];
  }
  double acceptor_value(std::size_t j, std::size_t i) const {
    return i == kUnmatched ? 0.0 : acceptor_values_[j * num_proposers() + i];
  }

  // Proposer i's acceptors, best first.
  std::vector<std::size_t> proposer_ranking(std::size_t i) const;
  std::vector<std::size_t> acceptor_ranking(std::size_t j) const;

  // Sorted distinct utilities proposer i can realize, including 0.
  std::vector<double> utility_levels(std::size_t i) const;

 private:
  friend Market validate_market(const RawMarket& raw);

  std::vector<std::string> proposers_;
  std::vector<std::string> acceptors_;
  std::vector<double> proposer_values_;
  std::vector<double> acceptor_values_;
};

// Checks the invariants (strict, complete, values in (0, 1], both sides
// nonempty) and builds a Market. Ordinal lists map rank r of k to (k-r+1)/k.
Market validate_market(const RawMarket& raw);

// Convenience builders with default names P1.., A1.. . Each order lists
// indices best first; each value row is indexed by the other side.
Market market_from_orders(const std::vector<std::vector<std::size_t>>& proposer_orders,
                          const std::vector<std::vector<std::size_t>>& acceptor_orders);
Market market_from_values(const std::vector<std::vector<double>>& proposer_values,
                          const std::vector<std::vector<double>>& acceptor_values);

// Each acceptor keeps its favourite proposal; everyone else is unmatched.
MatchOutcome resolve_match(const Market& market, std::span<const Action> profile);
void resolve_match_into(const Market& market, std::span<const Action> profile,
                        MatchOutcome& out);

double utility(const Market& market, std::size_t proposer, const MatchOutcome& match);
double welfare(const Market& market, const MatchOutcome& match);

std::vector<std::pair<std::size_t, std::size_t>> blocking_pairs(
    const Market& market, const MatchOutcome& match);
bool is_stable(const Market& market, const MatchOutcome& match);

// Proposer-proposing deferred acceptance.
MatchOutcome gale_shapley(const Market& market);

// All stable matches by brute force over partial injective pairings.
std::vector<MatchOutcome> enumerate_stable_matches(const Market& market);

// Builds a match from explicit (proposer, acceptor) pairs.
MatchOutcome match_from_pairs(const Market& market,
                              const std::vector<std::pair<std::size_t, std::size_t>>& pairs);

// The profile where every matched proposer proposes to its partner and every
// unmatched proposer stays single.
ActionProfile proposal_profile(const MatchOutcome& match);

// "(P1,A2) (P2,A1)"; "(empty)" if nobody is matched.
std::string describe_match(const Market& market, const MatchOutcome& match);
std::string describe_action(const Market& market, Action action);

// Would acceptor j keep proposer i against the other proposals in profile?
bool would_accept(const Market& market, std::size_t acceptor, std::size_t proposer,
                  std::span<const Action> profile);

// Utility-maximizing action for proposer i with everyone else fixed. Self
// when no acceptor would take i.
Action best_response(const Market& market, std::size_t proposer,
                     std::span<const Action> profile);

// True when proposer i could strictly raise its utility by deviating.
bool has_improving_deviation(const Market& market, std::size_t proposer,
                             std::span<const Action> profile);

struct BrStep {
  std::size_t proposer = 0;
  Action from;
  Action to;
  int phase = 1;  // 1: matched proposer, 2: unmatched proposer
};

struct BrResult {
  ActionProfile terminal;
  std::vector<BrStep> steps;
};

// Sequential best-response dynamics, lowest index first. Matched proposers
// that are not best-responding move before any unmatched proposer does.
// Throws kNoConvergence after max_steps updates.
BrResult br_dynamics(const Market& market, ActionProfile start, std::size_t max_steps);

// The stable match's proposal profile with proposer i made single.
ActionProfile near_stable(const Market& market, const MatchOutcome& stable,
                          std::size_t proposer);

struct NashProfile {
  ActionProfile profile;
  MatchOutcome match;
  double welfare = 0.0;
  bool stable = false;
};

struct NashReport {
  std::vector<NashProfile> nash_profiles;
  MatchOutcome posm;
  double posm_welfare = 0.0;
  double max_nash_welfare = 0.0;
  bool all_nash_stable = false;
  bool posm_profile_is_nash = false;
  bool posm_welfare_maximal = false;
};

// Scans all (m+1)^n pure profiles. Limited to kMaxNashScanSide per side.
NashReport nash_and_welfare_check(const Market& market);

}  // namespace trialmatch

#endif  // TRIALMATCH_MARKET_HPP_
