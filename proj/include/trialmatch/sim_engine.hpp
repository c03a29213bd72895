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

// Repeated matching game: every timestep all proposers pick an action at
// once, acceptors resolve the proposals, and each proposer updates on the
// utility it alone received.

#ifndef TRIALMATCH_SIM_ENGINE_HPP_
#define TRIALMATCH_SIM_ENGINE_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialmatch/learning_rule.hpp"
#include "trialmatch/market.hpp"

namespace trialmatch {

enum class TraceLevel { kNone, kFull };

struct SimConfig {
  RuleParams params;
  std::size_t horizon = 0;
  std::uint64_t seed = 0;
  double window_fraction = 0.5;
  TraceLevel trace = TraceLevel::kNone;
};

void validate_config(const SimConfig& config);

struct StepRecord {
  std::size_t t = 0;  // 1-based
  ActionProfile actions;
  std::vector<bool> experimented;
  MatchOutcome match;
  std::vector<double> utilities;
  std::vector<ProposerState> states;  // after the update
};

struct Metrics {
  std::size_t horizon = 0;
  std::size_t window_start = 0;  // first timestep in the window
  std::size_t window_length = 0;
  double posm_frequency = 0.0;
  double stable_frequency = 0.0;
  double mean_welfare = 0.0;
  std::optional<std::size_t> time_to_first_posm;
  std::map<MatchOutcome, std::size_t> match_visits;  // window only
  MatchOutcome modal_match;
  bool modal_is_posm = false;
};

struct SimTrace {
  std::vector<StepRecord> steps;  // empty unless TraceLevel::kFull
  Metrics metrics;
};

// One synchronous timestep over the learners; fills `record` (t untouched).
void step(const Market& market, std::span<Learner> learners, const RuleParams& params,
          StepRecord& record);

// Observer sees every record before it is (optionally) stored.
using StepObserver = std::function<void(const StepRecord&)>;

// All proposers start discontent. Learner i draws from stream i + 1 of the
// seed.
SimTrace run(const Market& market, const SimConfig& config, const StepObserver& observer = {});

// Independent runs, one per seed, spread over `jobs` threads (0 = hardware
// concurrency). Output order follows `seeds`.
std::vector<Metrics> batch_run(const Market& market, const SimConfig& base,
                               std::span<const std::uint64_t> seeds, std::size_t jobs = 0);

double median(std::vector<double> values);

// CSV: t,actions,experimented,match,utilities,moods,states
void write_trace_csv(std::ostream& out, const Market& market, const SimTrace& trace);

struct MetricsRow {
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  Metrics metrics;
};

// CSV: epsilon,seed,horizon,window_start,window_length,posm_frequency,
//      stable_frequency,mean_welfare,time_to_first_posm,modal_match,modal_is_posm
void write_metrics_csv(std::ostream& out, const Market& market,
                       std::span<const MetricsRow> rows);
nlohmann::json metrics_to_json(const Market& market, std::span<const MetricsRow> rows);

}  // namespace trialmatch

#endif  // TRIALMATCH_SIM_ENGINE_HPP_
