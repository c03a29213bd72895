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

#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"
#include "trialmatch/learning_rule.hpp"
#include "trialmatch/market_io.hpp"
#include "trialmatch/random.hpp"

namespace trialmatch {
namespace {

using doctest::Approx;

const Action A1 = Action::Propose(0);
const Action A2 = Action::Propose(1);
const Action kSelf = Action::Self();

ProposerState content(Action a, double u) { return {Mood::kContent, a, u}; }
ProposerState watchful(Action a, double u) { return {Mood::kWatchful, a, u}; }

RuleParams with_epsilon(double e) {
  RuleParams p;
  p.epsilon = e;
  return p;
}

// (action, experimented) -> probability
std::map<std::pair<Action, bool>, double> as_map(const std::vector<WeightedEvent>& dist) {
  std::map<std::pair<Action, bool>, double> out;
  for (const auto& w : dist) out[{w.event.action, w.event.experimented}] += w.probability;
  return out;
}

TEST_CASE("content selection") {
  auto d = as_map(action_distribution(content(A1, 1.0), with_epsilon(0.1), 2));
  CHECK(d.size() == 3);
  CHECK(d[{A1, false}] == Approx(0.89).epsilon(1e-14));
  CHECK(d[{A2, true}] == Approx(0.1).epsilon(1e-14));
  CHECK(d[{kSelf, true}] == Approx(0.01).epsilon(1e-14));
}

TEST_CASE("content selection with a Self baseline spreads over every acceptor") {
  auto d = as_map(action_distribution(content(kSelf, 0.0), with_epsilon(0.1), 2));
  CHECK(d[{kSelf, false}] == Approx(0.89));
  CHECK(d[{A1, true}] == Approx(0.05));
  CHECK(d[{A2, true}] == Approx(0.05));
  CHECK(d[{kSelf, true}] == Approx(0.01));
}

TEST_CASE("content selection with a single acceptor") {
  // Nothing new to try among acceptors: that mass stays on the baseline.
  auto d = as_map(action_distribution(content(A1, 1.0), with_epsilon(0.1), 1));
  CHECK(d.size() == 2);
  CHECK(d[{A1, false}] == Approx(0.99));
  CHECK(d[{kSelf, true}] == Approx(0.01));
}

TEST_CASE("content selection may retry the baseline when asked") {
  RuleParams p = with_epsilon(0.1);
  p.exclude_baseline_from_experiments = false;
  auto d = as_map(action_distribution(content(A1, 1.0), p, 2));
  CHECK(d[{A1, false}] == Approx(0.89));
  CHECK(d[{A1, true}] == Approx(0.05));
  CHECK(d[{A2, true}] == Approx(0.05));
}

TEST_CASE("discontent selection") {
  auto d = as_map(action_distribution(ProposerState::Discontent(), with_epsilon(0.04), 2));
  CHECK(d.size() == 3);
  CHECK(d[{kSelf, false}] == Approx(0.992).epsilon(1e-13));
  CHECK(d[{A1, true}] == Approx(0.004).epsilon(1e-13));
  CHECK(d[{A2, true}] == Approx(0.004).epsilon(1e-13));
}

TEST_CASE("proportional discontent normalization") {
  RuleParams p = with_epsilon(0.1);
  p.discontent_normalization = DiscontentNormalization::kProportional;
  const double e15 = std::pow(0.1, 1.5);
  auto d = as_map(action_distribution(ProposerState::Discontent(), p, 2));
  CHECK(d[{kSelf, false}] == Approx((1 - 0.1 - e15) / 0.9));
  CHECK(d[{A1, true}] == Approx(e15 / 2 / 0.9));
}

TEST_CASE("watchful selection is deterministic") {
  auto d = action_distribution(watchful(A2, 0.5), with_epsilon(0.2), 3);
  REQUIRE(d.size() == 1);
  CHECK(d[0].event.action == A2);
  CHECK_FALSE(d[0].event.experimented);
  CHECK(d[0].probability == 1.0);

  Rng rng = make_stream(3, 1);
  for (int k = 0; k < 100; ++k) {
    const auto e = select_action(watchful(A2, 0.5), with_epsilon(0.2), 3, rng);
    CHECK(e.action == A2);
    CHECK_FALSE(e.experimented);
  }
}

TEST_CASE("discontent almost always stays single for tiny epsilon") {
  Rng rng = make_stream(1, 1);
  int self = 0;
  for (int k = 0; k < 10000; ++k) {
    self += select_action(ProposerState::Discontent(), with_epsilon(1e-6), 3, rng).action == kSelf;
  }
  CHECK(self == 10000);
}

TEST_CASE("epsilon validation") {
  CHECK_NOTHROW(validate_params(with_epsilon(0.5)));
  CHECK_THROWS_CODE(validate_params(with_epsilon(0.7)), ErrorCode::kInvalidEpsilon);
  CHECK_THROWS_CODE(validate_params(with_epsilon(0.0)), ErrorCode::kInvalidEpsilon);
  CHECK_THROWS_CODE(validate_params(with_epsilon(-0.1)), ErrorCode::kInvalidEpsilon);
  CHECK_THROWS_CODE(action_distribution(content(A1, 1.0), with_epsilon(0.7), 2),
                    ErrorCode::kInvalidEpsilon);
}

TEST_CASE("acceptance exponent validation") {
  RuleParams p;
  p.content_exponent = {0.1, -0.2};  // increasing
  CHECK_THROWS_CODE(validate_params(p), ErrorCode::kInvalidParams);
  p = RuleParams{};
  p.discontent_exponent = {0.6, 0.1};  // F(0) >= 0.5
  CHECK_THROWS_CODE(validate_params(p), ErrorCode::kInvalidParams);
  p = RuleParams{};
  p.discontent_exponent = {0.2, 0.3};  // F(1) < 0
  CHECK_THROWS_CODE(validate_params(p), ErrorCode::kInvalidParams);
}

TEST_CASE("default acceptance exponents") {
  const auto [F, G] = default_F_G();
  CHECK(F(0.0) == Approx(0.46));
  CHECK(F(1.0) == Approx(0.01));
  CHECK(G(0.2) > G(0.8));
  CHECK(F == RuleParams{}.discontent_exponent);
  CHECK(G == RuleParams{}.content_exponent);
  // 1 + G < 1.5 + F < 2 over the whole range.
  CHECK(1.0 + G(0.0) < 1.5 + F(1.0));
  CHECK(1.5 + F(0.0) < 2.0);
}

TEST_CASE("content updates") {
  const RuleParams p = with_epsilon(0.1);
  Rng rng = make_stream(1, 1);
  const SelectionEvent stay{A1, false};
  CHECK(update_state(content(A1, 0.5), stay, 0.5, p, rng) == content(A1, 0.5));
  CHECK(update_state(content(A1, 0.5), stay, 1.0, p, rng) == content(A1, 1.0));
  CHECK(update_state(content(A1, 0.5), stay, 0.0, p, rng) == watchful(A1, 0.5));
}

TEST_CASE("content adoption probability") {
  const RuleParams p = with_epsilon(0.1);
  const auto d = update_distribution(content(A2, 0.5), {A1, true}, 1.0, p);
  REQUIRE(d.size() == 2);
  std::map<ProposerState, double> m;
  for (const auto& w : d) m[w.state] = w.probability;
  CHECK(m[content(A1, 1.0)] == Approx(std::pow(0.1, 0.235)));
  CHECK(m[content(A1, 1.0)] == Approx(0.582).epsilon(1e-3));
  CHECK(m[content(A2, 0.5)] == Approx(1 - std::pow(0.1, 0.235)));
  CHECK(content_adoption_probability(0.5, p) == Approx(std::pow(0.1, 0.235)));
}

TEST_CASE("failed content experiment") {
  const SelectionEvent exp{A1, true};
  RuleParams p = with_epsilon(0.1);
  auto d = update_distribution(content(A2, 0.5), exp, 0.0, p);
  REQUIRE(d.size() == 1);
  CHECK(d[0].state == content(A2, 0.5));

  p.revert_keeps_baseline_utility = false;  // printed rule
  d = update_distribution(content(A2, 0.5), exp, 0.0, p);
  REQUIRE(d.size() == 1);
  CHECK(d[0].state == content(A2, 0.0));
  // Equal utility is not an improvement either.
  d = update_distribution(content(A2, 0.5), exp, 0.5, p);
  REQUIRE(d.size() == 1);
  CHECK(d[0].state == content(A2, 0.5));
}

TEST_CASE("discontent updates") {
  const RuleParams p = with_epsilon(0.1);
  auto d = update_distribution(ProposerState::Discontent(), {A2, true}, 0.5, p);
  REQUIRE(d.size() == 2);
  std::map<ProposerState, double> m;
  for (const auto& w : d) m[w.state] = w.probability;
  CHECK(m[content(A2, 0.5)] == Approx(std::pow(0.1, 0.235)));
  CHECK(m[ProposerState::Discontent()] == Approx(1 - std::pow(0.1, 0.235)));
  CHECK(discontent_adoption_probability(0.5, p) == Approx(std::pow(0.1, 0.235)));

  // A rejected discontent proposer earns 0 and adopts w.p. e^F(0).
  d = update_distribution(ProposerState::Discontent(), {A2, true}, 0.0, p);
  for (const auto& w : d) {
    if (w.state.mood == Mood::kContent) CHECK(w.probability == Approx(std::pow(0.1, 0.46)));
  }

  d = update_distribution(ProposerState::Discontent(), {kSelf, false}, 0.0, p);
  REQUIRE(d.size() == 1);
  CHECK(d[0].state == ProposerState::Discontent());
}

TEST_CASE("watchful updates") {
  const RuleParams p = with_epsilon(0.1);
  Rng rng = make_stream(1, 1);
  CHECK(update_state(watchful(A1, 0.5), {A1, false}, 0.5, p, rng) == content(A1, 0.5));
  CHECK(update_state(watchful(A1, 0.5), {A1, false}, 1.0, p, rng) == content(A1, 0.5));
  CHECK(update_state(watchful(A1, 0.5), {A1, false}, 0.3, p, rng) ==
        ProposerState::Discontent());
  CHECK_THROWS_CODE(update_distribution(watchful(A1, 0.5), {A2, true}, 0.3, p),
                    ErrorCode::kInvalidTransition);
}

TEST_CASE("adoption probabilities increase with the gain") {
  const RuleParams p = with_epsilon(0.05);
  double last_c = 0.0;
  double last_d = 0.0;
  for (int k = 0; k <= 20; ++k) {
    const double x = k / 20.0;
    const double c = content_adoption_probability(x, p);
    const double d = discontent_adoption_probability(x, p);
    if (k > 0) {
      CHECK(c > last_c);
      CHECK(d > last_d);
    }
    last_c = c;
    last_d = d;
  }
}

TEST_CASE("learners reproduce from their seed") {
  const RuleParams p = with_epsilon(0.2);
  auto trajectory = [&](std::uint64_t seed) {
    Learner learner(ProposerState::Discontent(), make_stream(seed, 1));
    std::vector<ProposerState> out;
    for (int t = 0; t < 500; ++t) {
      const SelectionEvent& e = learner.choose(p, 3);
      const double u = e.action.is_self() ? 0.0 : 0.25 * static_cast<double>(e.action.acceptor() + 1);
      out.push_back(learner.observe(u, p));
    }
    return out;
  };
  CHECK(trajectory(9) == trajectory(9));
  CHECK(trajectory(9) != trajectory(10));
}

TEST_CASE("describe_state") {
  const Market m = fixtures::m2();
  CHECK(describe_state(m, content(A2, 0.5)) == "C/A2/0.5");
  CHECK(describe_state(m, ProposerState::Discontent()) == "D/Self/0");
  CHECK(mood_letter(Mood::kWatchful) == 'W');
}

}  // namespace
}  // namespace trialmatch
