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

#include "trialmatch/chain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include <Eigen/SparseLU>
#include <fmt/format.h>

#include "trialmatch/error.hpp"

namespace trialmatch {
namespace {

using Triplet = Eigen::Triplet<double>;
using RowEntries = std::vector<std::pair<std::size_t, double>>;

std::size_t action_slot(Action action) { return action.is_self() ? 0 : action.acceptor() + 1; }

std::size_t checked_product(const std::vector<std::size_t>& factors) {
  std::size_t total = 1;
  for (std::size_t f : factors) {
    if (f != 0 && total > kMaxChainStates / f) {
      double size = 1.0;
      for (std::size_t g : factors) size *= static_cast<double>(g);
      throw Error(ErrorCode::kTooLarge,
                  fmt::format("joint state space has {:.3g} states ({} proposers x {} local "
                              "states each), limit is {}",
                              size, factors.size(), factors.front(), kMaxChainStates));
    }
    total *= f;
  }
  if (total > kMaxChainStates) {
    throw Error(ErrorCode::kTooLarge,
                fmt::format("joint state space has {} states, limit is {}", total,
                            kMaxChainStates));
  }
  return total;
}

// Deterministic successor when `mover` plays `event` and everybody else plays
// its baseline without experimenting. `adopt` picks the mover's branch that
// switches the baseline to the played action when there are two branches.
JointState scripted_step(const Market& market, const RuleParams& params,
                         const JointState& state, std::size_t mover,
                         const SelectionEvent& event, bool adopt) {
  ActionProfile profile = baseline_profile(state);
  profile[mover] = event.action;
  const MatchOutcome match = resolve_match(market, profile);
  JointState next(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) {
    const double u = market.proposer_value(i, match.proposer_partner[i]);
    const SelectionEvent own = i == mover ? event : SelectionEvent{state[i].baseline_action, false};
    const auto branches = update_distribution(state[i], own, u, params);
    if (branches.size() == 1 || i != mover) {
      next[i] = branches.front().state;
      continue;
    }
    next[i] = branches.front().state;
    for (const WeightedState& b : branches) {
      const bool switched = b.state.mood == Mood::kContent && b.state.baseline_action == event.action;
      if (switched == adopt) next[i] = b.state;
    }
  }
  return next;
}

std::vector<std::size_t> experiment_support(const ProposerState& state, const RuleParams& params,
                                            std::size_t num_acceptors) {
  std::vector<std::size_t> support;
  for (std::size_t j = 0; j < num_acceptors; ++j) {
    const bool is_baseline =
        !state.baseline_action.is_self() && state.baseline_action.acceptor() == j;
    if (state.mood == Mood::kContent && params.exclude_baseline_from_experiments && is_baseline) {
      continue;
    }
    support.push_back(j);
  }
  return support;
}

// Minimum resistance over all joint one-step events from `state`, per
// successor. Selection: content experiment 1 (2 for staying single),
// discontent experiment 1.5; update: adopting costs G(delta u) for a content
// proposer and F(u) for a discontent one.
std::map<JointState, double> one_step_resistances(const Market& market, const RuleParams& params,
                                                  const JointState& state) {
  const std::size_t n = state.size();
  const std::size_t m = market.num_acceptors();
  std::vector<std::vector<WeightedEvent>> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = action_distribution(state[i], params, m);

  auto selection_cost = [](const ProposerState& s, const SelectionEvent& e) {
    if (!e.experimented) return 0.0;
    if (s.mood == Mood::kDiscontent) return 1.5;
    return e.action.is_self() ? 2.0 : 1.0;
  };

  std::map<JointState, double> best;
  std::vector<std::size_t> pick(n, 0);
  ActionProfile profile(n);
  while (true) {
    double base = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      profile[i] = dist[i][pick[i]].event.action;
      base += selection_cost(state[i], dist[i][pick[i]].event);
    }
    const MatchOutcome match = resolve_match(market, profile);
    std::vector<std::vector<std::pair<ProposerState, double>>> branches(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = market.proposer_value(i, match.proposer_partner[i]);
      const auto updates = update_distribution(state[i], dist[i][pick[i]].event, u, params);
      for (std::size_t k = 0; k < updates.size(); ++k) {
        double cost = 0.0;
        if (k == 1) {
          cost = state[i].mood == Mood::kDiscontent
                     ? params.discontent_exponent(std::clamp(u, 0.0, 1.0))
                     : params.content_exponent(std::clamp(u - state[i].baseline_utility, 0.0, 1.0));
        }
        branches[i].emplace_back(updates[k].state, cost);
      }
    }
    std::vector<std::size_t> branch(n, 0);
    JointState next(n);
    while (true) {
      double cost = base;
      for (std::size_t i = 0; i < n; ++i) {
        next[i] = branches[i][branch[i]].first;
        cost += branches[i][branch[i]].second;
      }
      auto [it, inserted] = best.emplace(next, cost);
      if (!inserted) it->second = std::min(it->second, cost);
      std::size_t pos = 0;
      while (pos < n && ++branch[pos] == branches[pos].size()) branch[pos++] = 0;
      if (pos == n) break;
    }
    std::size_t pos = 0;
    while (pos < n && ++pick[pos] == dist[pos].size()) pick[pos++] = 0;
    if (pos == n) break;
  }
  return best;
}

double min_resistance(const Market& market, const RuleParams& params, const JointState& from,
                      const JointState& to, std::size_t steps) {
  double best = std::numeric_limits<double>::infinity();
  const auto first = one_step_resistances(market, params, from);
  if (steps == 1) {
    const auto it = first.find(to);
    return it == first.end() ? best : it->second;
  }
  for (const auto& [middle, r1] : first) {
    const auto second = one_step_resistances(market, params, middle);
    const auto it = second.find(to);
    if (it != second.end()) best = std::min(best, r1 + it->second);
  }
  return best;
}

}  // namespace

StateSpace::StateSpace(const Market& market) : num_acceptors_(market.num_acceptors()) {
  const std::size_t n = market.num_proposers();
  const std::size_t m = market.num_acceptors();
  std::vector<std::size_t> sizes;
  for (std::size_t i = 0; i < n; ++i) {
    levels_.push_back(market.utility_levels(i));
    sizes.push_back(1 + 2 * (m + 1) * levels_.back().size());
  }
  size_ = checked_product(sizes);

  local_.resize(n);
  stride_.resize(n);
  std::size_t stride = 1;
  for (std::size_t i = 0; i < n; ++i) {
    stride_[i] = stride;
    stride *= sizes[i];
    auto& local = local_[i];
    local.push_back(ProposerState::Discontent());
    for (Mood mood : {Mood::kContent, Mood::kWatchful}) {
      for (std::size_t slot = 0; slot <= m; ++slot) {
        const Action action = slot == 0 ? Action::Self() : Action::Propose(slot - 1);
        for (double level : levels_[i]) local.push_back(ProposerState{mood, action, level});
      }
    }
  }
}

std::size_t StateSpace::local_index(std::size_t proposer, const ProposerState& state) const {
  if (state.mood == Mood::kDiscontent) {
    if (state != ProposerState::Discontent()) {
      throw Error(ErrorCode::kInvalidConfig, "discontent state must be (Self, 0)");
    }
    return 0;
  }
  const auto& levels = levels_[proposer];
  const auto it = std::find(levels.begin(), levels.end(), state.baseline_utility);
  const std::size_t slot = action_slot(state.baseline_action);
  if (it == levels.end() || slot > num_acceptors_) {
    throw Error(ErrorCode::kInvalidConfig, "proposer state is outside the state space");
  }
  const std::size_t per_mood = (num_acceptors_ + 1) * levels.size();
  const std::size_t mood_offset = state.mood == Mood::kWatchful ? per_mood : 0;
  return 1 + mood_offset + slot * levels.size() + static_cast<std::size_t>(it - levels.begin());
}

std::size_t StateSpace::encode(const JointState& state) const {
  if (state.size() != local_.size()) {
    throw Error(ErrorCode::kInvalidConfig, "joint state has the wrong number of proposers");
  }
  std::size_t index = 0;
  for (std::size_t i = 0; i < state.size(); ++i) index += stride_[i] * local_index(i, state[i]);
  return index;
}

JointState StateSpace::decode(std::size_t index) const {
  JointState state(local_.size());
  for (std::size_t i = 0; i < local_.size(); ++i) {
    state[i] = local_[i][index % local_[i].size()];
    index /= local_[i].size();
  }
  return state;
}

std::vector<JointState> enumerate_states(const Market& market) {
  const StateSpace space(market);
  std::vector<JointState> states;
  states.reserve(space.size());
  for (std::size_t s = 0; s < space.size(); ++s) states.push_back(space.decode(s));
  return states;
}

PerturbedChain build_chain(const Market& market, const RuleParams& params, std::size_t jobs) {
  validate_params(params);
  PerturbedChain chain{market, params, StateSpace(market), {}};
  const StateSpace& space = chain.space;
  const std::size_t n = market.num_proposers();
  const std::size_t m = market.num_acceptors();
  const std::size_t total = space.size();

  // Selection distributions depend only on the local state.
  std::vector<std::vector<std::vector<WeightedEvent>>> selections(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < space.local_size(i); ++k) {
      selections[i].push_back(action_distribution(space.local_state(i, k), params, m));
    }
  }

  std::vector<RowEntries> rows(total);
  auto build_row = [&](std::size_t s, RowEntries& row) {
    const JointState state = space.decode(s);
    std::vector<const std::vector<WeightedEvent>*> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = &selections[i][space.local_index(i, state[i])];

    std::vector<std::size_t> pick(n, 0);
    ActionProfile profile(n);
    MatchOutcome match;
    std::vector<std::vector<std::pair<std::size_t, double>>> updates(n);
    std::vector<std::size_t> branch(n, 0);
    std::vector<std::size_t> strides(n);
    for (std::size_t i = 0, st = 1; i < n; ++i) {
      strides[i] = st;
      st *= space.local_size(i);
    }

    while (true) {
      double p_select = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const WeightedEvent& w = (*dist[i])[pick[i]];
        profile[i] = w.event.action;
        p_select *= w.probability;
      }
      resolve_match_into(market, profile, match);
      for (std::size_t i = 0; i < n; ++i) {
        const double u = market.proposer_value(i, match.proposer_partner[i]);
        updates[i].clear();
        for (const WeightedState& ws :
             update_distribution(state[i], (*dist[i])[pick[i]].event, u, params)) {
          updates[i].emplace_back(space.local_index(i, ws.state), ws.probability);
        }
      }
      std::fill(branch.begin(), branch.end(), 0);
      while (true) {
        double p = p_select;
        std::size_t target = 0;
        for (std::size_t i = 0; i < n; ++i) {
          p *= updates[i][branch[i]].second;
          target += strides[i] * updates[i][branch[i]].first;
        }
        if (p > 0.0) row.emplace_back(target, p);
        std::size_t pos = 0;
        while (pos < n && ++branch[pos] == updates[pos].size()) branch[pos++] = 0;
        if (pos == n) break;
      }
      std::size_t pos = 0;
      while (pos < n && ++pick[pos] == dist[pos]->size()) pick[pos++] = 0;
      if (pos == n) break;
    }

    std::sort(row.begin(), row.end());
    std::size_t out = 0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (out > 0 && row[out - 1].first == row[k].first) {
        row[out - 1].second += row[k].second;
      } else {
        row[out++] = row[k];
      }
    }
    row.resize(out);
  };

  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::max<std::size_t>(1, std::min(jobs, total));
  if (jobs == 1) {
    for (std::size_t s = 0; s < total; ++s) build_row(s, rows[s]);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < jobs; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t s = w; s < total; s += jobs) build_row(s, rows[s]);
      });
    }
  }

  std::size_t nnz = 0;
  for (const auto& row : rows) nnz += row.size();
  std::vector<Triplet> triplets;
  triplets.reserve(nnz);
  for (std::size_t s = 0; s < total; ++s) {
    for (const auto& [t, p] : rows[s]) {
      triplets.emplace_back(static_cast<int>(s), static_cast<int>(t), p);
    }
  }
  chain.transitions.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(total));
  chain.transitions.setFromTriplets(triplets.begin(), triplets.end());
  chain.transitions.makeCompressed();
  return chain;
}

std::vector<std::vector<std::size_t>> closed_classes(const SparseRowMatrix& transitions) {
  // The walk below reads the compressed arrays directly.
  if (!transitions.isCompressed()) {
    SparseRowMatrix compressed = transitions;
    compressed.makeCompressed();
    return closed_classes(compressed);
  }
  const std::size_t total = static_cast<std::size_t>(transitions.rows());
  constexpr std::size_t kNone = kUnmatched;
  std::vector<std::size_t> index(total, kNone);
  std::vector<std::size_t> low(total, 0);
  std::vector<std::size_t> component(total, kNone);
  std::vector<bool> on_stack(total, false);
  std::vector<std::size_t> stack;
  std::size_t counter = 0;
  std::size_t components = 0;

  // Iterative Tarjan; each frame is (node, position in its row).
  std::vector<std::pair<std::size_t, Eigen::Index>> frames;
  const auto* outer = transitions.outerIndexPtr();
  const auto* inner = transitions.innerIndexPtr();
  const auto* values = transitions.valuePtr();

  for (std::size_t root = 0; root < total; ++root) {
    if (index[root] != kNone) continue;
    frames.emplace_back(root, outer[root]);
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!frames.empty()) {
      auto& [v, pos] = frames.back();
      const Eigen::Index end = outer[v + 1];
      bool descended = false;
      while (pos < end) {
        const std::size_t w = static_cast<std::size_t>(inner[pos]);
        const double p = values[pos];
        ++pos;
        if (p <= 0.0) continue;
        if (index[w] == kNone) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          frames.emplace_back(w, outer[w]);
          descended = true;
          break;
        }
        if (on_stack[w]) low[v] = std::min(low[v], index[w]);
      }
      if (descended) continue;
      const std::size_t node = v;
      if (low[node] == index[node]) {
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          component[w] = components;
        } while (w != node);
        ++components;
      }
      frames.pop_back();
      if (!frames.empty()) {
        const std::size_t parent = frames.back().first;
        low[parent] = std::min(low[parent], low[node]);
      }
    }
  }

  std::vector<bool> leaks(components, false);
  for (std::size_t v = 0; v < total; ++v) {
    for (Eigen::Index pos = outer[v]; pos < outer[v + 1]; ++pos) {
      if (values[pos] > 0.0 && component[static_cast<std::size_t>(inner[pos])] != component[v]) {
        leaks[component[v]] = true;
      }
    }
  }
  std::vector<std::vector<std::size_t>> members(components);
  for (std::size_t v = 0; v < total; ++v) {
    if (!leaks[component[v]]) members[component[v]].push_back(v);
  }
  std::vector<std::vector<std::size_t>> closed;
  for (auto& group : members) {
    if (!group.empty()) closed.push_back(std::move(group));
  }
  std::sort(closed.begin(), closed.end());
  return closed;
}

namespace {

double stationary_residual(const SparseRowMatrix& transitions, const Eigen::VectorXd& pi) {
  const Eigen::VectorXd next = (pi.transpose() * transitions).transpose();
  return (next - pi).lpNorm<Eigen::Infinity>();
}

Eigen::VectorXd solve_direct(const SparseRowMatrix& q) {
  const Eigen::Index k = q.rows();
  if (k == 1) return Eigen::VectorXd::Ones(1);
  // pi (Q - I) = 0 with the last equation replaced by sum(pi) = 1. The
  // diagonal of Q - I is minus the row's outflow, summed from the
  // off-diagonal entries: 1 - q_rr cancels to zero once the outflow drops
  // below machine epsilon, which happens for small e.
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(q.nonZeros() + 2 * k));
  for (Eigen::Index r = 0; r < k; ++r) {
    double outflow = 0.0;
    for (SparseRowMatrix::InnerIterator it(q, r); it; ++it) {
      if (it.col() == r) continue;
      outflow += it.value();
      if (it.col() != k - 1) triplets.emplace_back(static_cast<int>(it.col()), static_cast<int>(r), it.value());
    }
    if (r != k - 1) triplets.emplace_back(static_cast<int>(r), static_cast<int>(r), -outflow);
  }
  for (Eigen::Index c = 0; c < k; ++c) triplets.emplace_back(static_cast<int>(k - 1), static_cast<int>(c), 1.0);
  Eigen::SparseMatrix<double> a(k, k);
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();

  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) {
    throw Error(ErrorCode::kNotConverged, "sparse LU factorization failed");
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
  rhs(k - 1) = 1.0;
  Eigen::VectorXd x = lu.solve(rhs);
  // One step of iterative refinement.
  const Eigen::VectorXd correction = lu.solve(rhs - a * x);
  x += correction;
  x = x.cwiseMax(0.0);
  return x / x.sum();
}

Eigen::VectorXd solve_power(const SparseRowMatrix& q, const StationaryOptions& options,
                            std::size_t& iterations) {
  const Eigen::Index k = q.rows();
  Eigen::VectorXd x = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
  for (iterations = 1; iterations <= options.max_iterations; ++iterations) {
    Eigen::VectorXd next = (x.transpose() * q).transpose();
    next /= next.sum();
    const double change = (next - x).lpNorm<Eigen::Infinity>();
    x.swap(next);
    if (change <= options.power_step_tolerance) return x;
  }
  throw Error(ErrorCode::kNotConverged,
              fmt::format("power iteration did not settle within {} iterations",
                          options.max_iterations));
}

}  // namespace

StationaryResult stationary_distribution(const PerturbedChain& chain,
                                         const StationaryOptions& options) {
  const auto closed = closed_classes(chain.transitions);
  if (closed.size() != 1) {
    throw Error(ErrorCode::kReducible,
                fmt::format("chain has {} closed classes; the stationary distribution is "
                            "not unique",
                            closed.size()));
  }
  StationaryResult result;
  result.recurrent_class = closed.front();
  const auto& members = result.recurrent_class;
  const std::size_t k = members.size();

  std::vector<std::size_t> position(chain.size(), kUnmatched);
  for (std::size_t p = 0; p < k; ++p) position[members[p]] = p;
  std::vector<Triplet> triplets;
  for (std::size_t p = 0; p < k; ++p) {
    for (SparseRowMatrix::InnerIterator it(chain.transitions, static_cast<Eigen::Index>(members[p]));
         it; ++it) {
      triplets.emplace_back(static_cast<int>(p),
                            static_cast<int>(position[static_cast<std::size_t>(it.col())]),
                            it.value());
    }
  }
  SparseRowMatrix q(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  q.setFromTriplets(triplets.begin(), triplets.end());

  SolverBackend backend = options.backend;
  if (backend == SolverBackend::kAuto) {
    backend = k <= kDirectSolveLimit ? SolverBackend::kDirect : SolverBackend::kPowerIteration;
  }
  result.backend = backend;
  Eigen::VectorXd local = backend == SolverBackend::kDirect
                              ? solve_direct(q)
                              : solve_power(q, options, result.iterations);

  result.pi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(chain.size()));
  for (std::size_t p = 0; p < k; ++p) result.pi(static_cast<Eigen::Index>(members[p])) = local(static_cast<Eigen::Index>(p));
  result.residual = stationary_residual(chain.transitions, result.pi);
  if (result.residual > options.residual_tolerance) {
    throw Error(ErrorCode::kNotConverged,
                fmt::format("stationary residual {:.3e} exceeds {:.3e}", result.residual,
                            options.residual_tolerance));
  }
  return result;
}

char state_class_letter(StateClass c) {
  switch (c) {
    case StateClass::kOutsideZ: return '-';
    case StateClass::kC: return 'C';
    case StateClass::kD: return 'D';
    case StateClass::kE: return 'E';
  }
  return '?';
}

ActionProfile baseline_profile(const JointState& state) {
  ActionProfile profile(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) profile[i] = state[i].baseline_action;
  return profile;
}

bool in_z(const Market& market, const JointState& state) {
  for (const ProposerState& s : state) {
    if (s.mood == Mood::kWatchful) return false;
  }
  const MatchOutcome match = resolve_match(market, baseline_profile(state));
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (state[i].mood == Mood::kContent &&
        state[i].baseline_utility != market.proposer_value(i, match.proposer_partner[i])) {
      return false;
    }
  }
  return true;
}

StatePartition classify_states(const Market& market, std::span<const JointState> states) {
  StatePartition partition;
  partition.posm = gale_shapley(market);
  partition.classes.resize(states.size(), StateClass::kOutsideZ);
  partition.posm_consistent.resize(states.size(), false);

  for (std::size_t s = 0; s < states.size(); ++s) {
    const JointState& state = states[s];
    const ActionProfile profile = baseline_profile(state);
    const MatchOutcome match = resolve_match(market, profile);

    bool consistent = match == partition.posm;
    for (std::size_t i = 0; i < state.size() && consistent; ++i) {
      const Mood expected = match.proposer_matched(i) ? Mood::kContent : Mood::kDiscontent;
      consistent = state[i].mood == expected;
    }
    partition.posm_consistent[s] = consistent;

    if (!in_z(market, state)) continue;
    if (consistent) partition.posm_state = s;
    if (is_stable(market, match)) {
      partition.classes[s] = StateClass::kE;
      continue;
    }
    bool matched_improver = false;
    for (std::size_t i = 0; i < state.size() && !matched_improver; ++i) {
      matched_improver = match.proposer_matched(i) && has_improving_deviation(market, i, profile);
    }
    partition.classes[s] = matched_improver ? StateClass::kC : StateClass::kD;
  }
  return partition;
}

StatePartition classify_states(const PerturbedChain& chain) {
  return classify_states(chain.market, enumerate_states(chain.market));
}

double posm_mass(const Eigen::VectorXd& pi, const StatePartition& partition) {
  double mass = 0.0;
  for (std::size_t s = 0; s < partition.posm_consistent.size(); ++s) {
    if (partition.posm_consistent[s]) mass += pi(static_cast<Eigen::Index>(s));
  }
  return mass;
}

std::string transition_kind_name(TransitionKind kind) {
  switch (kind) {
    case TransitionKind::kContentAdopt: return "content_adopt";
    case TransitionKind::kDiscontentAdopt: return "discontent_adopt";
    case TransitionKind::kContentRemainSingle: return "content_remain_single";
    case TransitionKind::kDoubleExperiment: return "double_experiment";
  }
  return "unknown";
}

double theoretical_resistance(TransitionKind kind, double x, const RuleParams& params) {
  const double clamped = std::clamp(x, 0.0, 1.0);
  switch (kind) {
    case TransitionKind::kContentAdopt: return 1.0 + params.content_exponent(clamped);
    case TransitionKind::kDiscontentAdopt: return 1.5 + params.discontent_exponent(clamped);
    case TransitionKind::kContentRemainSingle:
    case TransitionKind::kDoubleExperiment: return 2.0;
  }
  return 0.0;
}

std::vector<ElementaryTransition> elementary_transitions(const Market& market,
                                                         const RuleParams& params,
                                                         TransitionKind kind) {
  validate_params(params);
  const std::size_t m = market.num_acceptors();
  std::vector<ElementaryTransition> out;

  for (const JointState& source : enumerate_states(market)) {
    if (!in_z(market, source)) continue;
    const ActionProfile profile = baseline_profile(source);
    const MatchOutcome match = resolve_match(market, profile);

    for (std::size_t i = 0; i < source.size(); ++i) {
      const ProposerState& me = source[i];
      switch (kind) {
        case TransitionKind::kContentAdopt: {
          if (me.mood != Mood::kContent) break;
          for (std::size_t j : experiment_support(me, params, m)) {
            ActionProfile trial = profile;
            trial[i] = Action::Propose(j);
            const double u = utility(market, i, resolve_match(market, trial));
            if (u <= me.baseline_utility) continue;
            out.push_back({kind, i, source,
                           scripted_step(market, params, source, i, {Action::Propose(j), true}, true),
                           1, u - me.baseline_utility});
          }
          break;
        }
        case TransitionKind::kDiscontentAdopt: {
          if (me.mood != Mood::kDiscontent) break;
          for (std::size_t j : experiment_support(me, params, m)) {
            ActionProfile trial = profile;
            trial[i] = Action::Propose(j);
            const double u = utility(market, i, resolve_match(market, trial));
            out.push_back({kind, i, source,
                           scripted_step(market, params, source, i, {Action::Propose(j), true}, true),
                           1, u});
          }
          break;
        }
        case TransitionKind::kContentRemainSingle: {
          if (me.mood != Mood::kContent || me.baseline_action.is_self()) break;
          JointState target =
              scripted_step(market, params, source, i, {Action::Self(), true}, false);
          if (target != source) out.push_back({kind, i, source, std::move(target), 1, 0.0});
          break;
        }
        case TransitionKind::kDoubleExperiment: {
          if (me.mood != Mood::kContent) break;
          for (std::size_t j : experiment_support(me, params, m)) {
            const std::size_t victim = match.acceptor_partner[j];
            if (victim == kUnmatched || victim == i || source[victim].mood != Mood::kContent ||
                market.acceptor_value(j, i) < market.acceptor_value(j, victim) ||
                market.proposer_value(i, j) > me.baseline_utility) {
              continue;
            }
            const SelectionEvent push{Action::Propose(j), true};
            const JointState middle = scripted_step(market, params, source, i, push, false);
            if (middle[victim].mood != Mood::kWatchful) continue;
            JointState target = scripted_step(market, params, middle, i, push, false);
            if (target[victim].mood != Mood::kDiscontent) continue;
            out.push_back({kind, i, source, std::move(target), 2, 0.0});
          }
          break;
        }
      }
    }
  }

  // Keep only transitions whose scripted route is a cheapest route to the
  // target; otherwise the fitted exponent measures a different transition.
  std::erase_if(out, [&](const ElementaryTransition& t) {
    const double scripted = theoretical_resistance(t.kind, t.x, params);
    return min_resistance(market, params, t.source, t.target, t.steps) < scripted - 1e-12;
  });
  return out;
}

double transition_probability(const PerturbedChain& chain, const JointState& from,
                              const JointState& to, std::size_t steps) {
  const auto source = static_cast<Eigen::Index>(chain.space.encode(from));
  const auto target = static_cast<Eigen::Index>(chain.space.encode(to));
  if (steps == 1) return chain.transitions.coeff(source, target);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(chain.transitions.rows());
  v(source) = 1.0;
  for (std::size_t k = 0; k < steps; ++k) v = (v.transpose() * chain.transitions).transpose();
  return v(target);
}

SlopeFit resistance_slope(std::span<const PerturbedChain> chains, const JointState& from,
                          const JointState& to, std::size_t steps) {
  if (chains.size() < 4) {
    throw Error(ErrorCode::kGridTooSmall,
                fmt::format("slope fit needs at least 4 epsilon values, got {}", chains.size()));
  }
  SlopeFit fit;
  std::vector<double> xs;
  std::vector<double> ys;
  for (const PerturbedChain& chain : chains) {
    const double p = transition_probability(chain, from, to, steps);
    if (!(p > 0.0)) {
      throw Error(ErrorCode::kZeroProbability,
                  fmt::format("transition has zero probability at epsilon {}",
                              chain.params.epsilon));
    }
    fit.probabilities.push_back(p);
    xs.push_back(std::log(chain.params.epsilon));
    ys.push_back(std::log(p));
  }
  const double count = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / count;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / count;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxy += (xs[k] - mx) * (ys[k] - my);
    sxx += (xs[k] - mx) * (xs[k] - mx);
  }
  if (sxx <= 0.0) {
    throw Error(ErrorCode::kGridTooSmall, "slope fit needs distinct epsilon values");
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

std::string describe_joint_state(const Market& market, const JointState& state) {
  std::string out;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (i > 0) out += ' ';
    out += market.proposer_name(i) + ':' + describe_state(market, state[i]);
  }
  return out;
}

void write_chain_triplets(std::ostream& out, const PerturbedChain& chain) {
  out << "row,col,prob\n";
  for (Eigen::Index r = 0; r < chain.transitions.outerSize(); ++r) {
    for (SparseRowMatrix::InnerIterator it(chain.transitions, r); it; ++it) {
      out << fmt::format("{},{},{}\n", r, it.col(), it.value());
    }
  }
}

nlohmann::json state_legend(const PerturbedChain& chain) {
  nlohmann::json legend = nlohmann::json::array();
  for (std::size_t s = 0; s < chain.size(); ++s) {
    const JointState state = chain.space.decode(s);
    nlohmann::json agents = nlohmann::json::array();
    for (std::size_t i = 0; i < state.size(); ++i) {
      agents.push_back({{"proposer", chain.market.proposer_name(i)},
                        {"mood", std::string(1, mood_letter(state[i].mood))},
                        {"baseline_action", describe_action(chain.market, state[i].baseline_action)},
                        {"baseline_utility", state[i].baseline_utility}});
    }
    legend.push_back({{"index", s}, {"agents", agents}});
  }
  return legend;
}

void write_pi_csv(std::ostream& out, const Eigen::VectorXd& pi) {
  out << "state,pi\n";
  for (Eigen::Index s = 0; s < pi.size(); ++s) out << fmt::format("{},{}\n", s, pi(s));
}

}  // namespace trialmatch
