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

#include "trialmatch/sim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <fmt/format.h>

#include "trialmatch/error.hpp"

namespace trialmatch {
namespace {

std::string match_token(const Market& market, const MatchOutcome& match) {
  std::string out;
  for (std::size_t i = 0; i < match.proposer_partner.size(); ++i) {
    if (!match.proposer_matched(i)) continue;
    if (!out.empty()) out += ';';
    out += market.proposer_name(i) + '-' + market.acceptor_name(match.proposer_partner[i]);
  }
  return out.empty() ? "-" : out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& format_one) {
  std::string out;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (k > 0) out += '|';
    out += format_one(items[k]);
  }
  return out;
}

struct WindowCell {
  std::size_t visits = 0;
  bool stable = false;
};

}  // namespace

void validate_config(const SimConfig& config) {
  if (config.horizon < 1) {
    throw Error(ErrorCode::kInvalidConfig, "horizon must be at least one timestep");
  }
  if (!(config.window_fraction > 0.0 && config.window_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "window fraction must lie in (0, 1]");
  }
  validate_params(config.params);
}

void step(const Market& market, std::span<Learner> learners, const RuleParams& params,
          StepRecord& record) {
  const std::size_t n = learners.size();
  const std::size_t m = market.num_acceptors();
  record.actions.resize(n);
  record.experimented.resize(n);
  record.utilities.resize(n);
  record.states.resize(n);

  // Simultaneous choice, one resolution, then private updates.
  for (std::size_t i = 0; i < n; ++i) {
    const SelectionEvent& event = learners[i].choose(params, m);
    record.actions[i] = event.action;
    record.experimented[i] = event.experimented;
  }
  resolve_match_into(market, record.actions, record.match);
  for (std::size_t i = 0; i < n; ++i) {
    record.utilities[i] = market.proposer_value(i, record.match.proposer_partner[i]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    record.states[i] = learners[i].observe(record.utilities[i], params);
  }
}

SimTrace run(const Market& market, const SimConfig& config, const StepObserver& observer) {
  validate_config(config);
  const std::size_t n = market.num_proposers();
  const std::size_t horizon = config.horizon;

  std::vector<Learner> learners;
  learners.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    learners.emplace_back(ProposerState::Discontent(), make_stream(config.seed, i + 1));
  }

  const MatchOutcome posm = gale_shapley(market);
  const auto window_length = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(static_cast<double>(horizon) * config.window_fraction)),
      1, horizon);
  const std::size_t window_start = horizon - window_length + 1;

  SimTrace trace;
  if (config.trace == TraceLevel::kFull) trace.steps.reserve(horizon);
  Metrics& metrics = trace.metrics;
  metrics.horizon = horizon;
  metrics.window_start = window_start;
  metrics.window_length = window_length;

  std::map<MatchOutcome, WindowCell> cells;
  auto last = cells.end();
  std::size_t posm_hits = 0;
  std::size_t stable_hits = 0;
  double welfare_sum = 0.0;

  StepRecord record;
  for (std::size_t t = 1; t <= horizon; ++t) {
    step(market, learners, config.params, record);
    record.t = t;
    const bool at_posm = record.match == posm;
    if (at_posm && !metrics.time_to_first_posm) metrics.time_to_first_posm = t;
    if (t >= window_start) {
      if (last == cells.end() || last->first != record.match) {
        last = cells.find(record.match);
        if (last == cells.end()) {
          last = cells.emplace(record.match, WindowCell{0, is_stable(market, record.match)}).first;
        }
      }
      ++last->second.visits;
      posm_hits += at_posm ? 1 : 0;
      stable_hits += last->second.stable ? 1 : 0;
      for (double u : record.utilities) welfare_sum += u;
    }
    if (observer) observer(record);
    if (config.trace == TraceLevel::kFull) trace.steps.push_back(record);
  }

  const double w = static_cast<double>(window_length);
  metrics.posm_frequency = static_cast<double>(posm_hits) / w;
  metrics.stable_frequency = static_cast<double>(stable_hits) / w;
  metrics.mean_welfare = welfare_sum / w;
  std::size_t best = 0;
  for (const auto& [match, cell] : cells) {
    metrics.match_visits.emplace(match, cell.visits);
    if (cell.visits > best) {
      best = cell.visits;
      metrics.modal_match = match;
    }
  }
  metrics.modal_is_posm = metrics.modal_match == posm;
  return trace;
}

std::vector<Metrics> batch_run(const Market& market, const SimConfig& base,
                               std::span<const std::uint64_t> seeds, std::size_t jobs) {
  validate_config(base);
  std::vector<Metrics> results(seeds.size());
  if (seeds.empty()) return results;
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, seeds.size());

  SimConfig config = base;
  config.trace = TraceLevel::kNone;
  auto work = [&](std::size_t worker) {
    for (std::size_t k = worker; k < seeds.size(); k += jobs) {
      SimConfig local = config;
      local.seed = seeds[k];
      results[k] = run(market, local).metrics;
    }
  };
  if (jobs == 1) {
    work(0);
    return results;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < jobs; ++w) pool.emplace_back(work, w);
  pool.clear();
  return results;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

void write_trace_csv(std::ostream& out, const Market& market, const SimTrace& trace) {
  out << "t,actions,experimented,match,utilities,moods,states\n";
  for (const StepRecord& r : trace.steps) {
    out << r.t << ','
        << join(r.actions, [&](Action a) { return describe_action(market, a); }) << ','
        << join(r.experimented, [](bool e) { return std::string(e ? "1" : "0"); }) << ','
        << match_token(market, r.match) << ','
        << join(r.utilities, [](double u) { return fmt::format("{}", u); }) << ','
        << join(r.states, [](const ProposerState& s) { return std::string(1, mood_letter(s.mood)); })
        << ','
        << join(r.states, [&](const ProposerState& s) {
             return fmt::format("{}/{}/{}", mood_letter(s.mood),
                                describe_action(market, s.baseline_action), s.baseline_utility);
           })
        << '\n';
  }
}

void write_metrics_csv(std::ostream& out, const Market& market,
                       std::span<const MetricsRow> rows) {
  out << "epsilon,seed,horizon,window_start,window_length,posm_frequency,stable_frequency,"
         "mean_welfare,time_to_first_posm,modal_match,modal_is_posm\n";
  for (const MetricsRow& row : rows) {
    const Metrics& m = row.metrics;
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", row.epsilon, row.seed, m.horizon,
                       m.window_start, m.window_length, m.posm_frequency, m.stable_frequency,
                       m.mean_welfare,
                       m.time_to_first_posm ? std::to_string(*m.time_to_first_posm) : "",
                       match_token(market, m.modal_match), m.modal_is_posm ? 1 : 0);
  }
}

nlohmann::json metrics_to_json(const Market& market, std::span<const MetricsRow> rows) {
  nlohmann::json runs = nlohmann::json::array();
  std::map<double, std::vector<double>> by_epsilon;
  for (const MetricsRow& row : rows) {
    const Metrics& m = row.metrics;
    nlohmann::json visits = nlohmann::json::object();
    for (const auto& [match, count] : m.match_visits) visits[match_token(market, match)] = count;
    runs.push_back({{"epsilon", row.epsilon},
                    {"seed", row.seed},
                    {"horizon", m.horizon},
                    {"window_start", m.window_start},
                    {"window_length", m.window_length},
                    {"posm_frequency", m.posm_frequency},
                    {"stable_frequency", m.stable_frequency},
                    {"mean_welfare", m.mean_welfare},
                    {"time_to_first_posm", m.time_to_first_posm
                                               ? nlohmann::json(*m.time_to_first_posm)
                                               : nlohmann::json(nullptr)},
                    {"modal_match", match_token(market, m.modal_match)},
                    {"modal_is_posm", m.modal_is_posm},
                    {"match_visits", visits}});
    by_epsilon[row.epsilon].push_back(m.posm_frequency);
  }
  nlohmann::json summary = nlohmann::json::array();
  for (auto& [eps, freqs] : by_epsilon) {
    summary.push_back({{"epsilon", eps},
                       {"runs", freqs.size()},
                       {"median_posm_frequency", median(freqs)}});
  }
  return {{"posm", match_token(market, gale_shapley(market))},
          {"summary", summary},
          {"runs", runs}};
}

}  // namespace trialmatch
