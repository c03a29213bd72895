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

// Exact analysis of the learning dynamics as a perturbed Markov chain over
// the joint proposer states of a small market.

#ifndef TRIALMATCH_CHAIN_HPP_
#define TRIALMATCH_CHAIN_HPP_

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include "trialmatch/learning_rule.hpp"
#include "trialmatch/market.hpp"

namespace trialmatch {

inline constexpr std::size_t kMaxChainStates = 1'000'000;
inline constexpr std::size_t kDirectSolveLimit = 5'000;

using JointState = std::vector<ProposerState>;

// Mixed-radix indexing of the joint state space. Each proposer has one
// discontent state (Self, 0) plus every (mood in {C, W}, baseline action,
// baseline utility) with the utility drawn from its own realizable values.
class StateSpace {
 public:
  explicit StateSpace(const Market& market);

  std::size_t size() const { return size_; }
  std::size_t num_proposers() const { return local_.size(); }
  std::size_t local_size(std::size_t proposer) const { return local_[proposer].size(); }
  const ProposerState& local_state(std::size_t proposer, std::size_t k) const {
    return local_[proposer][k];
  }

  // Throws kInvalidConfig for states outside the space.
  std::size_t local_index(std::size_t proposer, const ProposerState& state) const;
  std::size_t encode(const JointState& state) const;
  JointState decode(std::size_t index) const;

 private:
  std::vector<std::vector<ProposerState>> local_;
  std::vector<std::vector<double>> levels_;
  std::vector<std::size_t> stride_;
  std::size_t num_acceptors_ = 0;
  std::size_t size_ = 0;
};

// Throws kTooLarge beyond kMaxChainStates.
std::vector<JointState> enumerate_states(const Market& market);

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct PerturbedChain {
  Market market;
  RuleParams params;
  StateSpace space;
  SparseRowMatrix transitions;

  std::size_t size() const { return space.size(); }
  double probability(std::size_t from, std::size_t to) const {
    return transitions.coeff(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(to));
  }
};

// Exact one-step transition matrix: every joint selection event, the match it
// induces and every joint update outcome. Rows are built on `jobs` threads.
PerturbedChain build_chain(const Market& market, const RuleParams& params, std::size_t jobs = 0);

enum class SolverBackend { kAuto, kDirect, kPowerIteration };

struct StationaryOptions {
  SolverBackend backend = SolverBackend::kAuto;
  double residual_tolerance = 1e-10;
  // Power iteration stops once successive iterates differ by at most this
  // much in max norm.
  double power_step_tolerance = 1e-15;
  std::size_t max_iterations = 5'000'000;
};

struct StationaryResult {
  Eigen::VectorXd pi;  // over all states; zero off the recurrent class
  double residual = 0.0;  // max norm of pi T - pi
  SolverBackend backend = SolverBackend::kDirect;
  std::size_t iterations = 0;
  std::vector<std::size_t> recurrent_class;
};

// The chain must have exactly one closed communicating class (states outside
// it are transient); otherwise kReducible. Direct sparse LU up to
// kDirectSolveLimit recurrent states, power iteration above.
StationaryResult stationary_distribution(const PerturbedChain& chain,
                                         const StationaryOptions& options = {});

// Indices of the closed communicating classes of the positive-probability
// graph.
std::vector<std::vector<std::size_t>> closed_classes(const SparseRowMatrix& transitions);

enum class StateClass {
  kOutsideZ,  // someone is watchful, or a content baseline is out of date
  kC,         // a matched proposer is not best-responding
  kD,         // matched proposers best-respond, some proposer is unmatched
  kE,         // baseline profile induces a stable match
};

char state_class_letter(StateClass c);

// Baselines agree with play: nobody is watchful and every content proposer's
// baseline utility equals what its baseline action currently earns.
bool in_z(const Market& market, const JointState& state);

ActionProfile baseline_profile(const JointState& state);

struct StatePartition {
  std::vector<StateClass> classes;
  // Baseline profile induces the POSM, matched proposers are content and
  // unmatched ones discontent.
  std::vector<bool> posm_consistent;
  MatchOutcome posm;
  std::size_t posm_state = kUnmatched;  // the aligned POSM state, if listed
};

StatePartition classify_states(const Market& market, std::span<const JointState> states);
StatePartition classify_states(const PerturbedChain& chain);

double posm_mass(const Eigen::VectorXd& pi, const StatePartition& partition);

enum class TransitionKind {
  kContentAdopt,
  kDiscontentAdopt,
  kContentRemainSingle,
  kDoubleExperiment,
};

std::string transition_kind_name(TransitionKind kind);

// 1 + G(x), 1.5 + F(x), 2 and 2 respectively.
double theoretical_resistance(TransitionKind kind, double x, const RuleParams& params);

struct ElementaryTransition {
  TransitionKind kind = TransitionKind::kContentAdopt;
  std::size_t mover = 0;
  JointState source;
  JointState target;
  std::size_t steps = 1;
  double x = 0.0;  // delta u for content adoption, u for discontent adoption
};

// Builds the transitions of one kind from every state in Z where it applies:
// the mover makes the named experiment (twice for kDoubleExperiment), every
// other proposer plays its baseline. Pairs whose target is also reachable by a
// cheaper joint event are dropped, since their probability would not scale
// with the scripted resistance.
std::vector<ElementaryTransition> elementary_transitions(const Market& market,
                                                         const RuleParams& params,
                                                         TransitionKind kind);

double transition_probability(const PerturbedChain& chain, const JointState& from,
                              const JointState& to, std::size_t steps);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<double> probabilities;
};

// Least-squares slope of log P(from -> to) against log e over the chains
// (one per e). kGridTooSmall below four chains, kZeroProbability if any
// probability vanishes.
SlopeFit resistance_slope(std::span<const PerturbedChain> chains, const JointState& from,
                          const JointState& to, std::size_t steps);

std::string describe_joint_state(const Market& market, const JointState& state);

// Exports: "row,col,prob" triplets, state legend, and "state,pi".
void write_chain_triplets(std::ostream& out, const PerturbedChain& chain);
nlohmann::json state_legend(const PerturbedChain& chain);
void write_pi_csv(std::ostream& out, const Eigen::VectorXd& pi);

}  // namespace trialmatch

#endif  // TRIALMATCH_CHAIN_HPP_
