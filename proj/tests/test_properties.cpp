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

// Randomized properties over seeded markets.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "chain_compare.hpp"
#include "oracles.hpp"
#include "test_util.hpp"
#include "trialmatch/chain.hpp"
#include "trialmatch/learning_rule.hpp"
#include "trialmatch/market.hpp"
#include "trialmatch/market_io.hpp"
#include "trialmatch/random.hpp"

namespace trialmatch {
namespace {

Market random_market(std::uint64_t seed, std::size_t max_side = 5) {
  Rng rng = make_stream(seed, 77);
  const std::size_t n = 1 + uniform_index(rng, max_side);
  const std::size_t m = 1 + uniform_index(rng, max_side);
  const auto mode = seed % 2 ? Cardinalization::kUniform : Cardinalization::kRank;
  return generate_market({n, m, seed, mode});
}

ActionProfile random_profile(const Market& market, Rng& rng) {
  ActionProfile p(market.num_proposers());
  for (auto& a : p) {
    const std::size_t s = uniform_index(rng, market.num_acceptors() + 1);
    a = s == 0 ? Action::Self() : Action::Propose(s - 1);
  }
  return p;
}

// Same orders, values pushed through a strictly increasing map.
Market squashed(const Market& market) {
  std::vector<std::vector<double>> pv(market.num_proposers()),
      av(market.num_acceptors());
  for (std::size_t i = 0; i < market.num_proposers(); ++i) {
    for (std::size_t j = 0; j < market.num_acceptors(); ++j) {
      pv[i].push_back(std::pow(market.proposer_value(i, j), 3.0));
      av[j].resize(market.num_proposers());
      av[j][i] = std::sqrt(market.acceptor_value(j, i)) * 0.9;
    }
  }
  return market_from_values(pv, av);
}

TEST_CASE("Gale-Shapley is the proposer-optimal stable match") {
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    const Market m = random_market(seed);
    const auto posm = oracle::to_pairing(gale_shapley(m));
    const auto all = oracle::stable_pairings(m);
    CHECK(std::find(all.begin(), all.end(), posm) != all.end());
    for (const auto& other : all) {
      for (std::size_t i = 0; i < posm.size(); ++i) {
        CHECK(m.proposer_value(i, posm[i]) >= m.proposer_value(i, other[i]));
      }
    }
    std::set<oracle::Pairing> listed;
    for (const auto& match : enumerate_stable_matches(m)) listed.insert(oracle::to_pairing(match));
    CHECK(listed == std::set<oracle::Pairing>(all.begin(), all.end()));
  }
}

TEST_CASE("resolution and blocking agree with the reference") {
  Rng rng = make_stream(5, 0);
  for (std::uint64_t seed = 0; seed < 80; ++seed) {
    const Market m = random_market(seed);
    for (int k = 0; k < 20; ++k) {
      const ActionProfile profile = random_profile(m, rng);
      const MatchOutcome match = resolve_match(m, profile);
      CHECK(match.proposer_partner == oracle::resolve(m, profile));
      for (std::size_t i = 0; i < m.num_proposers(); ++i) {
        if (match.proposer_matched(i)) CHECK(match.acceptor_partner[match.proposer_partner[i]] == i);
      }
      for (std::size_t j = 0; j < m.num_acceptors(); ++j) {
        if (match.acceptor_matched(j)) CHECK(match.proposer_partner[match.acceptor_partner[j]] == j);
      }
      CHECK(is_stable(m, match) == oracle::stable(m, match.proposer_partner));
      CHECK(blocking_pairs(m, match).empty() == is_stable(m, match));
    }
  }
}

TEST_CASE("best responses are optimal") {
  Rng rng = make_stream(6, 0);
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const Market m = random_market(seed);
    for (int k = 0; k < 10; ++k) {
      ActionProfile profile = random_profile(m, rng);
      for (std::size_t i = 0; i < m.num_proposers(); ++i) {
        double best = 0.0;
        ActionProfile dev = profile;
        for (std::size_t s = 0; s <= m.num_acceptors(); ++s) {
          dev[i] = s == 0 ? Action::Self() : Action::Propose(s - 1);
          best = std::max(best, m.proposer_value(i, oracle::resolve(m, dev)[i]));
        }
        dev[i] = best_response(m, i, profile);
        CHECK(m.proposer_value(i, oracle::resolve(m, dev)[i]) == best);
        CHECK(dev[i].is_self() == (best == 0.0));
        const double now = m.proposer_value(i, oracle::resolve(m, profile)[i]);
        CHECK(has_improving_deviation(m, i, profile) == (best > now));
      }
    }
  }
}

TEST_CASE("best-response dynamics end at a stable Nash profile") {
  Rng rng = make_stream(7, 0);
  std::size_t finished = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const Market m = random_market(seed);
    try {
      const BrResult r = br_dynamics(m, random_profile(m, rng), 10'000);
      ++finished;
      CHECK(oracle::stable(m, oracle::resolve(m, r.terminal)));
      for (std::size_t i = 0; i < m.num_proposers(); ++i) {
        CHECK_FALSE(has_improving_deviation(m, i, r.terminal));
      }
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kNoConvergence);
    }
  }
  CHECK(finished > 0);
}

TEST_CASE("Nash profiles induce stable matches on small markets") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Market m = random_market(seed, 3);
    const NashReport r = nash_and_welfare_check(m);
    std::size_t count = 0;
    oracle::for_each_profile(m, [&](const ActionProfile& p) { count += oracle::is_nash(m, p); });
    CHECK(r.nash_profiles.size() == count);
    for (const auto& np : r.nash_profiles) {
      CHECK(oracle::is_nash(m, np.profile));
      CHECK(oracle::stable(m, np.match.proposer_partner));
    }
  }
}

TEST_CASE("only the orders matter") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const Market m = random_market(seed);
    const Market s = squashed(m);
    CHECK(gale_shapley(m) == gale_shapley(s));
    CHECK(enumerate_stable_matches(m) == enumerate_stable_matches(s));
    for (std::size_t i = 0; i < m.num_proposers(); ++i) {
      CHECK(m.proposer_ranking(i) == s.proposer_ranking(i));
    }
  }
}

TEST_CASE("selection distributions are proper") {
  for (const double eps : {1e-9, 1e-4, 0.01, 0.05, 0.1, 0.3, 0.5, 0.6}) {
    for (std::size_t m = 1; m <= 6; ++m) {
      for (const bool exclude : {true, false}) {
        for (const auto norm : {DiscontentNormalization::kBaselineAbsorbs,
                                DiscontentNormalization::kProportional}) {
          RuleParams p;
          p.epsilon = eps;
          p.exclude_baseline_from_experiments = exclude;
          p.discontent_normalization = norm;
          if (norm == DiscontentNormalization::kProportional && eps + std::pow(eps, 1.5) >= 1.0) {
            // The printed discontent masses are already negative here.
            CHECK_THROWS_CODE(validate_params(p), ErrorCode::kInvalidEpsilon);
            continue;
          }
          std::vector<ProposerState> states{ProposerState::Discontent(),
                                            {Mood::kContent, Action::Self(), 0.0},
                                            {Mood::kWatchful, Action::Self(), 0.0}};
          for (std::size_t j = 0; j < m; ++j) {
            states.push_back({Mood::kContent, Action::Propose(j), 0.5});
            states.push_back({Mood::kWatchful, Action::Propose(j), 0.5});
          }
          for (const auto& s : states) {
            double sum = 0.0;
            for (const auto& w : action_distribution(s, p, m)) {
              CHECK(w.probability > 0.0);
              if (s.mood == Mood::kWatchful) CHECK_FALSE(w.event.experimented);
              sum += w.probability;
            }
            CHECK(std::abs(sum - 1.0) <= 1e-12);
          }
        }
      }
    }
  }
}

TEST_CASE("update invariants") {
  Rng rng = make_stream(8, 0);
  const std::vector<double> utilities{0.0, 0.25, 0.5, 0.75, 1.0};
  for (int k = 0; k < 20000; ++k) {
    RuleParams p;
    p.epsilon = 0.01 + 0.3 * uniform01(rng);
    p.revert_keeps_baseline_utility = uniform01(rng) < 0.5;
    const std::size_t m = 1 + uniform_index(rng, 4);
    ProposerState s;
    const double pick = uniform01(rng);
    const std::size_t slot = uniform_index(rng, m + 1);
    const Action base = slot == 0 ? Action::Self() : Action::Propose(slot - 1);
    const double bu = utilities[uniform_index(rng, utilities.size())];
    if (pick < 0.4) s = {Mood::kContent, base, bu};
    else if (pick < 0.7) s = {Mood::kWatchful, base, bu};
    const SelectionEvent e = select_action(s, p, m, rng);
    const double u = utilities[uniform_index(rng, utilities.size())];
    double total = 0.0;
    for (const auto& w : update_distribution(s, e, u, p)) {
      total += w.probability;
      if (w.state.mood == Mood::kDiscontent) CHECK(w.state == ProposerState::Discontent());
      if (s.mood == Mood::kWatchful) CHECK(w.state.mood != Mood::kWatchful);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    const ProposerState next = update_state(s, e, u, p, rng);
    if (next.mood == Mood::kDiscontent) CHECK(next == ProposerState::Discontent());
  }
}

TEST_CASE("without experimentation, states in Z are fixed points") {
  RuleParams p;
  p.epsilon = 1e-300;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Market m = seed < 2 ? (seed == 0 ? fixtures::m2() : fixtures::m2b())
                              : generate_market({2, 2, seed, Cardinalization::kRank});
    for (const bool keep : {true, false}) {
      p.revert_keeps_baseline_utility = keep;
      const PerturbedChain chain = build_chain(m, p, 1);
      for (std::size_t s = 0; s < chain.size(); ++s) {
        if (in_z(m, chain.space.decode(s))) CHECK(chain.probability(s, s) == doctest::Approx(1.0));
      }
    }
  }
}

TEST_CASE("transition matrices match the reference rule on random markets") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const Market m = generate_market({1 + seed % 2, 1 + (seed / 2) % 3, seed,
                                      seed % 2 ? Cardinalization::kUniform : Cardinalization::kRank});
    RuleParams p;
    p.epsilon = 0.07;
    p.revert_keeps_baseline_utility = seed % 3 != 0;
    CHECK(oracle::max_gap_to_reference(m, p) < 1e-14);
  }
}

// Relabelling proposers or acceptors permutes the chain and must leave the
// POSM mass unchanged.
TEST_CASE("POSM mass is invariant under relabelling") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Market m = generate_market({2, 2 + seed % 2, seed, Cardinalization::kUniform});
    const std::size_t n = m.num_proposers(), k = m.num_acceptors();
    std::vector<std::size_t> pp(n), ap(k);
    std::iota(pp.begin(), pp.end(), 0);
    std::iota(ap.begin(), ap.end(), 0);
    std::reverse(pp.begin(), pp.end());
    std::rotate(ap.begin(), ap.begin() + 1, ap.end());
    std::vector<std::vector<double>> pv(n, std::vector<double>(k)), av(k, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        pv[pp[i]][ap[j]] = m.proposer_value(i, j);
        av[ap[j]][pp[i]] = m.acceptor_value(j, i);
      }
    }
    const Market r = market_from_values(pv, av);
    RuleParams p;
    p.epsilon = 0.05;
    const PerturbedChain a = build_chain(m, p, 1);
    const PerturbedChain b = build_chain(r, p, 1);
    const double ma = posm_mass(stationary_distribution(a).pi, classify_states(a));
    const double mb = posm_mass(stationary_distribution(b).pi, classify_states(b));
    CHECK(ma == doctest::Approx(mb).epsilon(1e-9));
  }
}

}  // namespace
}  // namespace trialmatch
