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

#include "trialmatch/learning_rule.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "trialmatch/error.hpp"

namespace trialmatch {
namespace {

// Masses of the three kinds of selection event for one state. The
// experiment mass is shared uniformly over the acceptors other than
// `excluded`.
struct SelectionPlan {
  double baseline = 1.0;
  double experiment = 0.0;
  double self_experiment = 0.0;
  std::size_t excluded = kUnmatched;
  std::size_t support = 0;
};

SelectionPlan plan_for(const ProposerState& state, const RuleParams& params,
                       std::size_t num_acceptors) {
  const double e = params.epsilon;
  SelectionPlan plan;
  switch (state.mood) {
    case Mood::kWatchful:
      break;
    case Mood::kContent: {
      if (params.exclude_baseline_from_experiments && !state.baseline_action.is_self()) {
        plan.excluded = state.baseline_action.acceptor();
        plan.support = num_acceptors - 1;
      } else {
        plan.support = num_acceptors;
      }
      plan.self_experiment = e * e;
      // With a single acceptor there is no new acceptor to try; that mass
      // stays on the baseline.
      plan.experiment = plan.support > 0 ? e : 0.0;
      plan.baseline = 1.0 - plan.experiment - plan.self_experiment;
      break;
    }
    case Mood::kDiscontent: {
      const double explore = std::pow(e, 1.5);
      plan.support = num_acceptors;
      if (params.discontent_normalization == DiscontentNormalization::kProportional) {
        plan.experiment = explore / (1.0 - e);
        plan.baseline = (1.0 - e - explore) / (1.0 - e);
      } else {
        plan.experiment = explore;
        plan.baseline = 1.0 - explore;
      }
      break;
    }
  }
  return plan;
}

std::size_t support_acceptor(const SelectionPlan& plan, std::size_t k) {
  return (plan.excluded != kUnmatched && k >= plan.excluded) ? k + 1 : k;
}

void check_exponent(const AcceptanceExponent& f, const char* name) {
  const bool ok = std::isfinite(f.intercept) && std::isfinite(f.slope) && f.slope > 0.0 &&
                  f.intercept < 0.5 && f.intercept - f.slope >= 0.0;
  if (!ok) {
    std::ostringstream msg;
    msg << name << "(x) = " << f.intercept << " - " << f.slope
        << " x must be strictly decreasing with values in [0, 0.5) on [0, 1]";
    throw Error(ErrorCode::kInvalidParams, msg.str());
  }
}

// Two-way split of a proposer's next state; `alternative` taken w.p. `p`.
struct UpdateBranches {
  ProposerState primary;
  ProposerState alternative;
  double p = 0.0;
};

UpdateBranches branches_for(const ProposerState& state, const SelectionEvent& event,
                            double u, const RuleParams& params) {
  const Action baseline = state.baseline_action;
  const double base_u = state.baseline_utility;
  switch (state.mood) {
    case Mood::kContent:
      if (!event.experimented) {
        if (u >= base_u) return {{Mood::kContent, baseline, u}, {}, 0.0};
        return {{Mood::kWatchful, baseline, base_u}, {}, 0.0};
      }
      if (u <= base_u) {
        const double kept = params.revert_keeps_baseline_utility ? base_u : u;
        return {{Mood::kContent, baseline, kept}, {}, 0.0};
      }
      return {{Mood::kContent, baseline, base_u},
              {Mood::kContent, event.action, u},
              content_adoption_probability(u - base_u, params)};
    case Mood::kDiscontent:
      if (!event.experimented) return {state, {}, 0.0};
      return {ProposerState::Discontent(),
              {Mood::kContent, event.action, u},
              discontent_adoption_probability(u, params)};
    case Mood::kWatchful:
      if (event.experimented) {
        throw Error(ErrorCode::kInvalidTransition, "a watchful proposer never experiments");
      }
      if (u >= base_u) return {{Mood::kContent, baseline, base_u}, {}, 0.0};
      return {ProposerState::Discontent(), {}, 0.0};
  }
  return {state, {}, 0.0};
}

}  // namespace

char mood_letter(Mood mood) {
  switch (mood) {
    case Mood::kContent: return 'C';
    case Mood::kDiscontent: return 'D';
    case Mood::kWatchful: return 'W';
  }
  return '?';
}

std::pair<AcceptanceExponent, AcceptanceExponent> default_F_G() {
  return {AcceptanceExponent{0.46, 0.45}, AcceptanceExponent{0.46, 0.45}};
}

void validate_params(const RuleParams& params) {
  const double e = params.epsilon;
  const bool positive_masses =
      std::isfinite(e) && e > 0.0 && 1.0 - e - e * e > 0.0 &&
      (params.discontent_normalization != DiscontentNormalization::kProportional ||
       1.0 - e - std::pow(e, 1.5) > 0.0);
  if (!positive_masses) {
    std::ostringstream msg;
    msg << "epsilon " << e << " leaves no positive mass on the baseline action";
    throw Error(ErrorCode::kInvalidEpsilon, msg.str());
  }
  check_exponent(params.discontent_exponent, "F");
  check_exponent(params.content_exponent, "G");
}

double content_adoption_probability(double delta_u, const RuleParams& params) {
  return std::pow(params.epsilon, params.content_exponent(std::clamp(delta_u, 0.0, 1.0)));
}

double discontent_adoption_probability(double utility, const RuleParams& params) {
  return std::pow(params.epsilon, params.discontent_exponent(std::clamp(utility, 0.0, 1.0)));
}

std::vector<WeightedEvent> action_distribution(const ProposerState& state,
                                               const RuleParams& params,
                                               std::size_t num_acceptors) {
  validate_params(params);
  const SelectionPlan plan = plan_for(state, params, num_acceptors);
  std::vector<WeightedEvent> out;
  if (plan.baseline > 0.0) out.push_back({{state.baseline_action, false}, plan.baseline});
  if (plan.experiment > 0.0) {
    const double each = plan.experiment / static_cast<double>(plan.support);
    for (std::size_t k = 0; k < plan.support; ++k) {
      out.push_back({{Action::Propose(support_acceptor(plan, k)), true}, each});
    }
  }
  if (plan.self_experiment > 0.0) {
    out.push_back({{Action::Self(), true}, plan.self_experiment});
  }
  return out;
}

SelectionEvent select_action(const ProposerState& state, const RuleParams& params,
                             std::size_t num_acceptors, Rng& rng) {
  validate_params(params);
  const SelectionPlan plan = plan_for(state, params, num_acceptors);
  if (plan.baseline >= 1.0) return {state.baseline_action, false};
  double r = uniform01(rng);
  if (r < plan.baseline) return {state.baseline_action, false};
  r -= plan.baseline;
  if (plan.self_experiment > 0.0 && (r >= plan.experiment || plan.experiment == 0.0)) {
    return {Action::Self(), true};
  }
  return {Action::Propose(support_acceptor(plan, uniform_index(rng, plan.support))), true};
}

std::vector<WeightedState> update_distribution(const ProposerState& state,
                                               const SelectionEvent& event, double utility,
                                               const RuleParams& params) {
  const UpdateBranches b = branches_for(state, event, utility, params);
  std::vector<WeightedState> out;
  if (b.p < 1.0) out.push_back({b.primary, 1.0 - b.p});
  if (b.p > 0.0) out.push_back({b.alternative, b.p});
  return out;
}

ProposerState update_state(const ProposerState& state, const SelectionEvent& event,
                           double utility, const RuleParams& params, Rng& rng) {
  const UpdateBranches b = branches_for(state, event, utility, params);
  if (b.p <= 0.0) return b.primary;
  return uniform01(rng) < b.p ? b.alternative : b.primary;
}

const SelectionEvent& Learner::choose(const RuleParams& params, std::size_t num_acceptors) {
  last_event_ = select_action(state_, params, num_acceptors, rng_);
  return last_event_;
}

const ProposerState& Learner::observe(double utility, const RuleParams& params) {
  state_ = update_state(state_, last_event_, utility, params, rng_);
  return state_;
}

std::string describe_state(const Market& market, const ProposerState& state) {
  std::ostringstream out;
  out << mood_letter(state.mood) << '/' << describe_action(market, state.baseline_action) << '/'
      << state.baseline_utility;
  return out.str();
}

}  // namespace trialmatch
