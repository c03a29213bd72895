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

#include "trialmatch/market.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>

#include "trialmatch/error.hpp"

namespace trialmatch {
namespace {

using NameIndex = std::unordered_map<std::string, std::size_t>;

NameIndex index_names(const std::vector<std::string>& names, const char* side) {
  NameIndex index;
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (!index.emplace(names[k], k).second) {
      throw Error(ErrorCode::kParse,
                  std::string("duplicate ") + side + " identifier '" + names[k] + "'");
    }
  }
  return index;
}

// Fills row[0..others.size()) with the agent's values over the other side.
void fill_row(const std::string& owner, const RawPreferences& prefs,
              const NameIndex& others, std::span<double> row) {
  const std::size_t k = row.size();
  std::vector<bool> seen(k, false);
  auto locate = [&](const std::string& name) {
    auto it = others.find(name);
    if (it == others.end()) {
      throw Error(ErrorCode::kIncompleteOrdering,
                  "'" + owner + "' ranks unknown agent '" + name + "'");
    }
    if (seen[it->second]) {
      throw Error(ErrorCode::kDuplicateValue,
                  "'" + owner + "' lists '" + name + "' twice");
    }
    seen[it->second] = true;
    return it->second;
  };

  if (const auto* ordinal = std::get_if<OrdinalList>(&prefs)) {
    for (std::size_t r = 0; r < ordinal->size(); ++r) {
      const std::size_t idx = locate((*ordinal)[r]);
      row[idx] = static_cast<double>(k - r) / static_cast<double>(k);
    }
  } else {
    for (const auto& [name, value] : std::get<CardinalList>(prefs)) {
      const std::size_t idx = locate(name);
      if (!(value > 0.0 && value <= 1.0)) {
        std::ostringstream msg;
        msg << "'" << owner << "' gives '" << name << "' value " << value
            << " outside (0, 1]";
        throw Error(ErrorCode::kOutOfRangeValue, msg.str());
      }
      row[idx] = value;
    }
  }

  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw Error(ErrorCode::kIncompleteOrdering,
                "'" + owner + "' does not rank every agent on the other side");
  }
  std::vector<double> sorted(row.begin(), row.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorCode::kDuplicateValue,
                "'" + owner + "' assigns the same value to two agents");
  }
}

void fill_side(const std::vector<std::string>& owners,
               const std::map<std::string, RawPreferences>& prefs,
               const NameIndex& owner_index, const NameIndex& others,
               std::vector<double>& values) {
  for (const auto& [name, unused] : prefs) {
    if (!owner_index.contains(name)) {
      throw Error(ErrorCode::kIncompleteOrdering,
                  "preferences given for unknown agent '" + name + "'");
    }
  }
  const std::size_t k = others.size();
  values.assign(owners.size() * k, 0.0);
  for (std::size_t o = 0; o < owners.size(); ++o) {
    auto it = prefs.find(owners[o]);
    if (it == prefs.end()) {
      throw Error(ErrorCode::kIncompleteOrdering,
                  "no preferences for '" + owners[o] + "'");
    }
    fill_row(owners[o], it->second, others, std::span<double>(values).subspan(o * k, k));
  }
}

std::vector<std::size_t> ranking_of(std::span<const double> row) {
  std::vector<std::size_t> order(row.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  return order;
}

std::vector<std::string> default_names(char prefix, std::size_t count) {
  std::vector<std::string> names;
  names.reserve(count);
  for (std::size_t k = 0; k < count; ++k) names.push_back(prefix + std::to_string(k + 1));
  return names;
}

void require_small(const Market& market, std::size_t limit, const char* what) {
  if (market.num_proposers() > limit || market.num_acceptors() > limit) {
    std::ostringstream msg;
    msg << what << " is limited to " << limit << " agents per side (market is "
        << market.num_proposers() << "x" << market.num_acceptors() << ")";
    throw Error(ErrorCode::kTooLarge, msg.str());
  }
}

}  // namespace

std::vector<std::size_t> Market::proposer_ranking(std::size_t i) const {
  return ranking_of(std::span<const double>(proposer_values_)
                        .subspan(i * num_acceptors(), num_acceptors()));
}

std::vector<std::size_t> Market::acceptor_ranking(std::size_t j) const {
  return ranking_of(std::span<const double>(acceptor_values_)
                        .subspan(j * num_proposers(), num_proposers()));
}

std::vector<double> Market::utility_levels(std::size_t i) const {
  std::vector<double> levels{0.0};
  for (std::size_t j = 0; j < num_acceptors(); ++j) levels.push_back(proposer_value(i, j));
  std::sort(levels.begin(), levels.end());
  return levels;
}

Market validate_market(const RawMarket& raw) {
  if (raw.proposers.empty() || raw.acceptors.empty()) {
    throw Error(ErrorCode::kEmptySide, "market needs at least one proposer and one acceptor");
  }
  const NameIndex proposers = index_names(raw.proposers, "proposer");
  const NameIndex acceptors = index_names(raw.acceptors, "acceptor");

  Market market;
  market.proposers_ = raw.proposers;
  market.acceptors_ = raw.acceptors;
  fill_side(raw.proposers, raw.proposer_prefs, proposers, acceptors, market.proposer_values_);
  fill_side(raw.acceptors, raw.acceptor_prefs, acceptors, proposers, market.acceptor_values_);
  return market;
}

Market market_from_orders(const std::vector<std::vector<std::size_t>>& proposer_orders,
                          const std::vector<std::vector<std::size_t>>& acceptor_orders) {
  RawMarket raw;
  raw.proposers = default_names('P', proposer_orders.size());
  raw.acceptors = default_names('A', acceptor_orders.size());
  auto to_names = [](const std::vector<std::size_t>& order,
                     const std::vector<std::string>& names) {
    OrdinalList list;
    for (std::size_t idx : order) {
      list.push_back(idx < names.size() ? names[idx] : "#" + std::to_string(idx));
    }
    return list;
  };
  for (std::size_t i = 0; i < proposer_orders.size(); ++i) {
    raw.proposer_prefs[raw.proposers[i]] = to_names(proposer_orders[i], raw.acceptors);
  }
  for (std::size_t j = 0; j < acceptor_orders.size(); ++j) {
    raw.acceptor_prefs[raw.acceptors[j]] = to_names(acceptor_orders[j], raw.proposers);
  }
  return validate_market(raw);
}

Market market_from_values(const std::vector<std::vector<double>>& proposer_values,
                          const std::vector<std::vector<double>>& acceptor_values) {
  RawMarket raw;
  raw.proposers = default_names('P', proposer_values.size());
  raw.acceptors = default_names('A', acceptor_values.size());
  auto to_pairs = [](const std::vector<double>& row, const std::vector<std::string>& names) {
    CardinalList list;
    for (std::size_t k = 0; k < row.size() && k < names.size(); ++k) {
      list.emplace_back(names[k], row[k]);
    }
    return list;
  };
  for (std::size_t i = 0; i < proposer_values.size(); ++i) {
    raw.proposer_prefs[raw.proposers[i]] = to_pairs(proposer_values[i], raw.acceptors);
  }
  for (std::size_t j = 0; j < acceptor_values.size(); ++j) {
    raw.acceptor_prefs[raw.acceptors[j]] = to_pairs(acceptor_values[j], raw.proposers);
  }
  return validate_market(raw);
}

void resolve_match_into(const Market& market, std::span<const Action> profile,
                        MatchOutcome& out) {
  out.proposer_partner.assign(market.num_proposers(), kUnmatched);
  out.acceptor_partner.assign(market.num_acceptors(), kUnmatched);
  for (std::size_t i = 0; i < profile.size(); ++i) {
    if (profile[i].is_self()) continue;
    const std::size_t j = profile[i].acceptor();
    const std::size_t held = out.acceptor_partner[j];
    if (held == kUnmatched || market.acceptor_value(j, i) > market.acceptor_value(j, held)) {
      out.acceptor_partner[j] = i;
    }
  }
  for (std::size_t j = 0; j < out.acceptor_partner.size(); ++j) {
    if (out.acceptor_partner[j] != kUnmatched) out.proposer_partner[out.acceptor_partner[j]] = j;
  }
}

MatchOutcome resolve_match(const Market& market, std::span<const Action> profile) {
  MatchOutcome out;
  resolve_match_into(market, profile, out);
  return out;
}

double utility(const Market& market, std::size_t proposer, const MatchOutcome& match) {
  return market.proposer_value(proposer, match.proposer_partner[proposer]);
}

double welfare(const Market& market, const MatchOutcome& match) {
  double total = 0.0;
  for (std::size_t i = 0; i < market.num_proposers(); ++i) total += utility(market, i, match);
  return total;
}

std::vector<std::pair<std::size_t, std::size_t>> blocking_pairs(const Market& market,
                                                                const MatchOutcome& match) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < market.num_proposers(); ++i) {
    const double current = utility(market, i, match);
    for (std::size_t j = 0; j < market.num_acceptors(); ++j) {
      if (market.proposer_value(i, j) > current &&
          market.acceptor_value(j, i) > market.acceptor_value(j, match.acceptor_partner[j])) {
        pairs.emplace_back(i, j);
      }
    }
  }
  return pairs;
}

bool is_stable(const Market& market, const MatchOutcome& match) {
  return blocking_pairs(market, match).empty();
}

MatchOutcome gale_shapley(const Market& market) {
  const std::size_t n = market.num_proposers();
  const std::size_t m = market.num_acceptors();
  std::vector<std::vector<std::size_t>> rankings(n);
  for (std::size_t i = 0; i < n; ++i) rankings[i] = market.proposer_ranking(i);

  std::vector<std::size_t> next(n, 0);
  std::vector<std::size_t> held(m, kUnmatched);
  std::vector<std::size_t> free;
  for (std::size_t i = n; i-- > 0;) free.push_back(i);

  while (!free.empty()) {
    const std::size_t i = free.back();
    free.pop_back();
    if (next[i] == m) continue;  // rejected everywhere; stays single
    const std::size_t j = rankings[i][next[i]++];
    const std::size_t current = held[j];
    if (current == kUnmatched) {
      held[j] = i;
    } else if (market.acceptor_value(j, i) > market.acceptor_value(j, current)) {
      held[j] = i;
      free.push_back(current);
    } else {
      free.push_back(i);
    }
  }

  MatchOutcome out;
  out.acceptor_partner = held;
  out.proposer_partner.assign(n, kUnmatched);
  for (std::size_t j = 0; j < m; ++j) {
    if (held[j] != kUnmatched) out.proposer_partner[held[j]] = j;
  }
  return out;
}

std::vector<MatchOutcome> enumerate_stable_matches(const Market& market) {
  require_small(market, kMaxEnumerationSide, "stable-match enumeration");
  const std::size_t n = market.num_proposers();
  const std::size_t m = market.num_acceptors();
  std::vector<MatchOutcome> stable;
  MatchOutcome current{std::vector<std::size_t>(n, kUnmatched),
                       std::vector<std::size_t>(m, kUnmatched)};

  auto recurse = [&](auto&& self, std::size_t i) -> void {
    if (i == n) {
      if (is_stable(market, current)) stable.push_back(current);
      return;
    }
    self(self, i + 1);
    for (std::size_t j = 0; j < m; ++j) {
      if (current.acceptor_partner[j] != kUnmatched) continue;
      current.proposer_partner[i] = j;
      current.acceptor_partner[j] = i;
      self(self, i + 1);
      current.proposer_partner[i] = kUnmatched;
      current.acceptor_partner[j] = kUnmatched;
    }
  };
  recurse(recurse, 0);
  return stable;
}

MatchOutcome match_from_pairs(const Market& market,
                              const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  MatchOutcome out{std::vector<std::size_t>(market.num_proposers(), kUnmatched),
                   std::vector<std::size_t>(market.num_acceptors(), kUnmatched)};
  for (const auto& [i, j] : pairs) {
    if (i >= market.num_proposers() || j >= market.num_acceptors() ||
        out.proposer_partner[i] != kUnmatched || out.acceptor_partner[j] != kUnmatched) {
      throw Error(ErrorCode::kInvalidConfig, "pairs do not form a one-to-one match");
    }
    out.proposer_partner[i] = j;
    out.acceptor_partner[j] = i;
  }
  return out;
}

ActionProfile proposal_profile(const MatchOutcome& match) {
  ActionProfile profile(match.proposer_partner.size());
  for (std::size_t i = 0; i < profile.size(); ++i) {
    if (match.proposer_matched(i)) profile[i] = Action::Propose(match.proposer_partner[i]);
  }
  return profile;
}

std::string describe_match(const Market& market, const MatchOutcome& match) {
  std::string out;
  for (std::size_t i = 0; i < match.proposer_partner.size(); ++i) {
    if (!match.proposer_matched(i)) continue;
    if (!out.empty()) out += ' ';
    out += '(' + market.proposer_name(i) + ',' +
           market.acceptor_name(match.proposer_partner[i]) + ')';
  }
  return out.empty() ? "(empty)" : out;
}

std::string describe_action(const Market& market, Action action) {
  return action.is_self() ? "Self" : market.acceptor_name(action.acceptor());
}

bool would_accept(const Market& market, std::size_t acceptor, std::size_t proposer,
                  std::span<const Action> profile) {
  const double mine = market.acceptor_value(acceptor, proposer);
  for (std::size_t k = 0; k < profile.size(); ++k) {
    if (k == proposer || profile[k].is_self() || profile[k].acceptor() != acceptor) continue;
    if (market.acceptor_value(acceptor, k) > mine) return false;
  }
  return true;
}

Action best_response(const Market& market, std::size_t proposer,
                     std::span<const Action> profile) {
  for (std::size_t j : market.proposer_ranking(proposer)) {
    if (would_accept(market, j, proposer, profile)) return Action::Propose(j);
  }
  return Action::Self();
}

namespace {

double realized_utility(const Market& market, std::size_t proposer,
                        std::span<const Action> profile, Action action) {
  if (action.is_self()) return 0.0;
  return would_accept(market, action.acceptor(), proposer, profile)
             ? market.proposer_value(proposer, action.acceptor())
             : 0.0;
}

}  // namespace

bool has_improving_deviation(const Market& market, std::size_t proposer,
                             std::span<const Action> profile) {
  const double current = realized_utility(market, proposer, profile, profile[proposer]);
  const double best =
      realized_utility(market, proposer, profile, best_response(market, proposer, profile));
  return best > current;
}

BrResult br_dynamics(const Market& market, ActionProfile start, std::size_t max_steps) {
  BrResult result;
  result.terminal = std::move(start);
  ActionProfile& a = result.terminal;
  MatchOutcome match;

  while (true) {
    resolve_match_into(market, a, match);
    std::size_t mover = kUnmatched;
    int phase = 1;
    for (std::size_t i = 0; i < a.size() && mover == kUnmatched; ++i) {
      if (match.proposer_matched(i) && has_improving_deviation(market, i, a)) mover = i;
    }
    if (mover == kUnmatched) {
      phase = 2;
      for (std::size_t i = 0; i < a.size() && mover == kUnmatched; ++i) {
        if (!match.proposer_matched(i) && has_improving_deviation(market, i, a)) mover = i;
      }
    }
    if (mover == kUnmatched) return result;
    if (result.steps.size() == max_steps) {
      throw Error(ErrorCode::kNoConvergence,
                  "best-response dynamics did not settle within " +
                      std::to_string(max_steps) + " updates");
    }
    const Action next = best_response(market, mover, a);
    result.steps.push_back(BrStep{mover, a[mover], next, phase});
    a[mover] = next;
  }
}

ActionProfile near_stable(const Market& market, const MatchOutcome& stable,
                          std::size_t proposer) {
  if (proposer >= market.num_proposers() || !stable.proposer_matched(proposer)) {
    throw Error(ErrorCode::kNotMatched,
                "proposer is not matched in the given stable match");
  }
  ActionProfile profile = proposal_profile(stable);
  profile[proposer] = Action::Self();
  return profile;
}

NashReport nash_and_welfare_check(const Market& market) {
  require_small(market, kMaxNashScanSide, "Nash profile scan");
  const std::size_t n = market.num_proposers();
  const std::size_t m = market.num_acceptors();

  NashReport report;
  report.posm = gale_shapley(market);
  report.posm_welfare = welfare(market, report.posm);
  report.all_nash_stable = true;
  report.max_nash_welfare = -1.0;

  // Digit d of the counter encodes Self as 0 and acceptor d-1 otherwise.
  std::vector<std::size_t> digits(n, 0);
  ActionProfile profile(n);
  while (true) {
    for (std::size_t i = 0; i < n; ++i) {
      profile[i] = digits[i] == 0 ? Action::Self() : Action::Propose(digits[i] - 1);
    }
    bool nash = true;
    for (std::size_t i = 0; i < n && nash; ++i) {
      nash = !has_improving_deviation(market, i, profile);
    }
    if (nash) {
      NashProfile entry;
      entry.profile = profile;
      entry.match = resolve_match(market, profile);
      entry.welfare = welfare(market, entry.match);
      entry.stable = is_stable(market, entry.match);
      report.all_nash_stable = report.all_nash_stable && entry.stable;
      report.max_nash_welfare = std::max(report.max_nash_welfare, entry.welfare);
      report.nash_profiles.push_back(std::move(entry));
    }
    std::size_t pos = 0;
    while (pos < n && ++digits[pos] == m + 1) digits[pos++] = 0;
    if (pos == n) break;
  }

  const ActionProfile posm_profile = proposal_profile(report.posm);
  report.posm_profile_is_nash = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (has_improving_deviation(market, i, posm_profile)) report.posm_profile_is_nash = false;
  }
  report.posm_welfare_maximal =
      report.posm_profile_is_nash && report.posm_welfare >= report.max_nash_welfare;
  return report;
}

}  // namespace trialmatch
