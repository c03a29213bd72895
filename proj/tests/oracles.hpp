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

// Independent reference implementations used by the tests. Nothing here calls
// the library's algorithms; only the Market accessors are shared.

#ifndef TRIALMATCH_TESTS_ORACLES_HPP_
#define TRIALMATCH_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "trialmatch/market.hpp"

namespace trialmatch::oracle {

// partner[i] = acceptor of proposer i or kUnmatched.
using Pairing = std::vector<std::size_t>;

inline Pairing resolve(const Market& market, const ActionProfile& profile) {
  Pairing partner(market.num_proposers(), kUnmatched);
  for (std::size_t j = 0; j < market.num_acceptors(); ++j) {
    std::size_t best = kUnmatched;
    for (std::size_t i = 0; i < profile.size(); ++i) {
      if (profile[i].is_self() || profile[i].acceptor() != j) continue;
      if (best == kUnmatched || market.acceptor_value(j, i) > market.acceptor_value(j, best)) {
        best = i;
      }
    }
    if (best != kUnmatched) partner[best] = j;
  }
  return partner;
}

inline bool stable(const Market& market, const Pairing& partner) {
  std::vector<std::size_t> held(market.num_acceptors(), kUnmatched);
  for (std::size_t i = 0; i < partner.size(); ++i) {
    if (partner[i] != kUnmatched) held[partner[i]] = i;
  }
  for (std::size_t i = 0; i < partner.size(); ++i) {
    for (std::size_t j = 0; j < market.num_acceptors(); ++j) {
      if (partner[i] == j) continue;
      const bool p_wants = market.proposer_value(i, j) > market.proposer_value(i, partner[i]);
      const bool a_wants = market.acceptor_value(j, i) > market.acceptor_value(j, held[j]);
      if (p_wants && a_wants) return false;
    }
  }
  return true;
}

// Every partial injective pairing, visited recursively.
inline void for_each_pairing(const Market& market, const std::function<void(const Pairing&)>& f) {
  const std::size_t n = market.num_proposers();
  const std::size_t m = market.num_acceptors();
  Pairing partner(n, kUnmatched);
  std::vector<bool> used(m, false);
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == n) {
      f(partner);
      return;
    }
    partner[i] = kUnmatched;
    rec(i + 1);
    for (std::size_t j = 0; j < m; ++j) {
      if (used[j]) continue;
      used[j] = true;
      partner[i] = j;
      rec(i + 1);
      used[j] = false;
    }
    partner[i] = kUnmatched;
  };
  rec(0);
}

inline std::vector<Pairing> stable_pairings(const Market& market) {
  std::vector<Pairing> out;
  for_each_pairing(market, [&](const Pairing& p) {
    if (stable(market, p)) out.push_back(p);
  });
  return out;
}

inline Pairing to_pairing(const MatchOutcome& match) { return match.proposer_partner; }

inline double welfare(const Market& market, const Pairing& partner) {
  double w = 0.0;
  for (std::size_t i = 0; i < partner.size(); ++i) w += market.proposer_value(i, partner[i]);
  return w;
}

// Every profile in (m + 1)^n, Self encoded as slot 0.
inline void for_each_profile(const Market& market,
                             const std::function<void(const ActionProfile&)>& f) {
  const std::size_t n = market.num_proposers();
  const std::size_t m = market.num_acceptors();
  std::vector<std::size_t> slot(n, 0);
  ActionProfile profile(n);
  while (true) {
    for (std::size_t i = 0; i < n; ++i) {
      profile[i] = slot[i] == 0 ? Action::Self() : Action::Propose(slot[i] - 1);
    }
    f(profile);
    std::size_t pos = 0;
    while (pos < n && ++slot[pos] == m + 1) slot[pos++] = 0;
    if (pos == n) return;
  }
}

inline bool is_nash(const Market& market, const ActionProfile& profile) {
  const Pairing base = resolve(market, profile);
  for (std::size_t i = 0; i < profile.size(); ++i) {
    const double u = market.proposer_value(i, base[i]);
    ActionProfile dev = profile;
    for (std::size_t s = 0; s <= market.num_acceptors(); ++s) {
      dev[i] = s == 0 ? Action::Self() : Action::Propose(s - 1);
      if (market.proposer_value(i, resolve(market, dev)[i]) > u) return false;
    }
  }
  return true;
}

// Ordinary least squares slope of y on x.
inline double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Reference form of the learning rule written directly from the update
// table: per-proposer successor distributions, multiplied out over proposers.
// Only default normalization and experiment support are covered.
struct RefState {
  char mood = 'D';
  int base = -1;  // acceptor index or -1 for single
  double bu = 0.0;

  friend auto operator<=>(const RefState&, const RefState&) = default;
};

struct RefRule {
  double eps = 0.05;
  bool keep_baseline_utility = true;
  double F(double x) const { return 0.46 - 0.45 * x; }
  double G(double x) const { return 0.46 - 0.45 * x; }
};

struct RefMove {
  int action;  // -1 single
  bool experiment;
  double p;
};

inline std::vector<RefMove> ref_moves(const RefState& s, const RefRule& r, std::size_t m) {
  const double e = r.eps;
  std::vector<RefMove> out;
  if (s.mood == 'W') return {{s.base, false, 1.0}};
  if (s.mood == 'D') {
    const double x = std::pow(e, 1.5);
    out.push_back({-1, false, 1.0 - x});
    for (std::size_t j = 0; j < m; ++j) out.push_back({static_cast<int>(j), true, x / m});
    return out;
  }
  std::vector<int> others;
  for (std::size_t j = 0; j < m; ++j) {
    if (static_cast<int>(j) != s.base) others.push_back(static_cast<int>(j));
  }
  out.push_back({s.base, false, 1.0 - e - e * e + (others.empty() ? e : 0.0)});
  for (int j : others) out.push_back({j, true, e / static_cast<double>(others.size())});
  out.push_back({-1, true, e * e});
  return out;
}

inline std::vector<std::pair<RefState, double>> ref_update(const RefState& s, const RefMove& mv,
                                                           double u, const RefRule& r) {
  const double e = r.eps;
  if (s.mood == 'W') {
    if (u >= s.bu) return {{{'C', s.base, s.bu}, 1.0}};
    return {{RefState{}, 1.0}};
  }
  if (s.mood == 'D') {
    if (!mv.experiment) return {{s, 1.0}};
    const double a = std::pow(e, r.F(u));
    return {{{'C', mv.action, u}, a}, {RefState{}, 1.0 - a}};
  }
  if (!mv.experiment) {
    if (u >= s.bu) return {{{'C', s.base, u}, 1.0}};
    return {{{'W', s.base, s.bu}, 1.0}};
  }
  if (u > s.bu) {
    const double a = std::pow(e, r.G(u - s.bu));
    return {{{'C', mv.action, u}, a}, {{'C', s.base, s.bu}, 1.0 - a}};
  }
  return {{{'C', s.base, r.keep_baseline_utility ? s.bu : u}, 1.0}};
}

// Successor distribution of a joint state.
inline std::map<std::vector<RefState>, double> ref_row(const Market& market,
                                                       const std::vector<RefState>& from,
                                                       const RefRule& r) {
  const std::size_t n = from.size();
  const std::size_t m = market.num_acceptors();
  std::vector<std::vector<RefMove>> moves(n);
  for (std::size_t i = 0; i < n; ++i) moves[i] = ref_moves(from[i], r, m);
  std::map<std::vector<RefState>, double> row;
  std::vector<std::size_t> pick(n, 0);
  while (true) {
    double p = 1.0;
    ActionProfile profile(n);
    for (std::size_t i = 0; i < n; ++i) {
      const RefMove& mv = moves[i][pick[i]];
      p *= mv.p;
      profile[i] = mv.action < 0 ? Action::Self() : Action::Propose(static_cast<std::size_t>(mv.action));
    }
    const Pairing partner = resolve(market, profile);
    std::map<std::vector<RefState>, double> partial{{{}, p}};
    for (std::size_t i = 0; i < n; ++i) {
      const double u = market.proposer_value(i, partner[i]);
      std::map<std::vector<RefState>, double> next;
      for (const auto& [prefix, q] : partial) {
        for (const auto& [st, w] : ref_update(from[i], moves[i][pick[i]], u, r)) {
          auto key = prefix;
          key.push_back(st);
          next[key] += q * w;
        }
      }
      partial = std::move(next);
    }
    for (const auto& [to, q] : partial) row[to] += q;
    std::size_t pos = 0;
    while (pos < n && ++pick[pos] == moves[pos].size()) pick[pos++] = 0;
    if (pos == n) break;
  }
  return row;
}

}  // namespace trialmatch::oracle

#endif  // TRIALMATCH_TESTS_ORACLES_HPP_
