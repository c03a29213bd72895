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

// Command-line front end: market I/O and generation, Gale-Shapley report,
// Monte Carlo simulation, exact chain analysis and resistance fits.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "CLI11.hpp"
#include "trialmatch/chain.hpp"
#include "trialmatch/error.hpp"
#include "trialmatch/learning_rule.hpp"
#include "trialmatch/market.hpp"
#include "trialmatch/market_io.hpp"
#include "trialmatch/sim_engine.hpp"

namespace {

using namespace trialmatch;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitAnalysis = 2;

struct RuleFlags {
  bool revert_keeps_baseline = false;
  bool literal_failed_experiment = false;
  bool experiments_include_baseline = false;
  bool proportional_discontent = false;
  double f_intercept = 0.46;
  double f_slope = 0.45;
  double g_intercept = 0.46;
  double g_slope = 0.45;

  void attach(CLI::App* app) {
    app->add_flag("--revert-keeps-baseline", revert_keeps_baseline,
                  "Failed content experiment keeps the old baseline utility (default)");
    app->add_flag("--literal-failed-experiment", literal_failed_experiment,
                  "Failed content experiment records the experimental utility")
        ->excludes("--revert-keeps-baseline");
    app->add_flag("--experiments-include-baseline", experiments_include_baseline,
                  "Content experiments may pick the current baseline acceptor");
    app->add_flag("--proportional-discontent", proportional_discontent,
                  "Normalize the discontent branch proportionally");
    app->add_option("--f-intercept", f_intercept, "F(x) = a - b x: a")->capture_default_str();
    app->add_option("--f-slope", f_slope, "F(x) = a - b x: b")->capture_default_str();
    app->add_option("--g-intercept", g_intercept, "G(x) = a - b x: a")->capture_default_str();
    app->add_option("--g-slope", g_slope, "G(x) = a - b x: b")->capture_default_str();
  }

  RuleParams params(double epsilon) const {
    RuleParams p;
    p.epsilon = epsilon;
    p.discontent_exponent = {f_intercept, f_slope};
    p.content_exponent = {g_intercept, g_slope};
    p.exclude_baseline_from_experiments = !experiments_include_baseline;
    p.revert_keeps_baseline_utility = !literal_failed_experiment;
    if (proportional_discontent) p.discontent_normalization = DiscontentNormalization::kProportional;
    validate_params(p);
    return p;
  }
};

// Output goes to --out when given, stdout otherwise.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  return out;
}

std::string fmt_double(double x) { return fmt::format("{:.10g}", x); }

int cmd_gs(const std::string& market_path) {
  const Market market = load_market(market_path);
  const MatchOutcome posm = gale_shapley(market);
  std::string optimal;
  try {
    const auto stable = enumerate_stable_matches(market);
    bool dominates = true;
    for (const auto& other : stable) {
      for (std::size_t i = 0; i < market.num_proposers(); ++i) {
        if (utility(market, i, posm) < utility(market, i, other)) dominates = false;
      }
    }
    optimal = fmt::format("optimal: {} ({} stable match{})", dominates ? "true" : "false",
                          stable.size(), stable.size() == 1 ? "" : "es");
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kTooLarge) throw;
    std::cerr << "warning: market too large to enumerate stable matches; optimality not checked\n";
    optimal = "optimal: unchecked";
  }
  fmt::print("{}; stable: {}; {}\n", describe_match(market, posm),
             is_stable(market, posm) ? "true" : "false", optimal);
  return kExitOk;
}

int cmd_nash(const std::string& market_path) {
  const Market market = load_market(market_path);
  const NashReport report = nash_and_welfare_check(market);
  fmt::print("nash_profiles: {}\n", report.nash_profiles.size());
  for (const auto& np : report.nash_profiles) {
    std::string actions;
    for (std::size_t i = 0; i < np.profile.size(); ++i) {
      if (i) actions += ' ';
      actions += describe_action(market, np.profile[i]);
    }
    fmt::print("  [{}] -> {}; welfare {}; stable: {}\n", actions, describe_match(market, np.match),
               fmt_double(np.welfare), np.stable ? "true" : "false");
  }
  fmt::print("posm: {}; welfare {}\n", describe_match(market, report.posm),
             fmt_double(report.posm_welfare));
  fmt::print("all_nash_stable: {}; posm_profile_is_nash: {}; posm_welfare_maximal: {}\n",
             report.all_nash_stable, report.posm_profile_is_nash, report.posm_welfare_maximal);
  return kExitOk;
}

struct SimulateArgs {
  std::string market;
  std::vector<double> epsilons{0.05};
  std::size_t steps = 1'000'000;
  std::vector<std::uint64_t> seeds{1};
  double window = 0.5;
  std::string out;
  std::string format = "csv";
  std::string trace_dir;
  std::size_t jobs = 0;
};

int cmd_simulate(const SimulateArgs& args, const RuleFlags& flags) {
  const Market market = load_market(args.market);
  std::vector<MetricsRow> rows;
  for (const double epsilon : args.epsilons) {
    SimConfig config;
    config.params = flags.params(epsilon);
    config.horizon = args.steps;
    config.window_fraction = args.window;
    validate_config(config);
    if (!args.trace_dir.empty()) {
      // Full traces are large; runs stay sequential so memory holds one.
      std::filesystem::create_directories(args.trace_dir);
      config.trace = TraceLevel::kFull;
      for (const auto seed : args.seeds) {
        config.seed = seed;
        const SimTrace trace = run(market, config);
        auto out = open_output(fmt::format("{}/trace_eps{}_seed{}.csv", args.trace_dir,
                                           fmt_double(epsilon), seed));
        write_trace_csv(out, market, trace);
        rows.push_back({epsilon, seed, trace.metrics});
      }
    } else {
      const auto metrics = batch_run(market, config, args.seeds, args.jobs);
      for (std::size_t k = 0; k < metrics.size(); ++k) {
        rows.push_back({epsilon, args.seeds[k], metrics[k]});
      }
    }
    std::vector<double> freqs;
    for (const auto& row : rows) {
      if (row.epsilon == epsilon) freqs.push_back(row.metrics.posm_frequency);
    }
    fmt::print(stderr, "epsilon {}: median posm_frequency {:.6f} over {} seed(s)\n",
               fmt_double(epsilon), median(freqs), freqs.size());
  }
  Sink sink(args.out);
  if (args.format == "json") {
    sink.stream() << metrics_to_json(market, rows).dump(2) << '\n';
  } else {
    write_metrics_csv(sink.stream(), market, rows);
  }
  return kExitOk;
}

struct ChainArgs {
  std::string market;
  std::vector<double> epsilons{0.2, 0.1, 0.05, 0.02, 0.005, 0.001};
  std::string out;
  std::string format = "csv";
  std::string triplets;
  std::string pi;
  std::string legend;
  std::string backend = "auto";
  std::size_t jobs = 0;
};

int cmd_chain(const ChainArgs& args, const RuleFlags& flags) {
  const Market market = load_market(args.market);
  const bool exporting = !args.triplets.empty() || !args.pi.empty() || !args.legend.empty();
  if (exporting && args.epsilons.size() != 1) {
    throw Error(ErrorCode::kInvalidConfig, "matrix/pi/legend exports need exactly one --epsilon");
  }
  StationaryOptions options;
  if (args.backend == "direct") options.backend = SolverBackend::kDirect;
  if (args.backend == "power") options.backend = SolverBackend::kPowerIteration;

  struct Row {
    double epsilon;
    double mass;
    std::string top;
    double residual;
  };
  std::vector<Row> rows;
  for (const double epsilon : args.epsilons) {
    const RuleParams params = flags.params(epsilon);
    const PerturbedChain chain = build_chain(market, params, args.jobs);
    const StationaryResult st = stationary_distribution(chain, options);
    const StatePartition partition = classify_states(chain);
    Eigen::Index top = 0;
    st.pi.maxCoeff(&top);
    rows.push_back({epsilon, posm_mass(st.pi, partition),
                    describe_joint_state(market, chain.space.decode(top)), st.residual});
    if (!args.triplets.empty()) {
      auto out = open_output(args.triplets);
      write_chain_triplets(out, chain);
    }
    if (!args.pi.empty()) {
      auto out = open_output(args.pi);
      write_pi_csv(out, st.pi);
    }
    if (!args.legend.empty()) {
      auto out = open_output(args.legend);
      out << state_legend(chain).dump(2) << '\n';
    }
  }

  // Monotone in the direction of decreasing epsilon.
  std::vector<Row> sorted = rows;
  std::sort(sorted.begin(), sorted.end(),
            [](const Row& a, const Row& b) { return a.epsilon > b.epsilon; });
  bool monotone = true;
  for (std::size_t k = 1; k < sorted.size(); ++k) {
    if (sorted[k].mass < sorted[k - 1].mass - 1e-9) monotone = false;
  }

  Sink sink(args.out);
  if (args.format == "json") {
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
      j["rows"].push_back(
          {{"epsilon", r.epsilon}, {"posm_mass", r.mass}, {"top_state", r.top}, {"residual", r.residual}});
    }
    j["nondecreasing_as_epsilon_falls"] = monotone;
    sink.stream() << j.dump(2) << '\n';
  } else {
    sink.stream() << "epsilon,posm_mass,top_state,residual\n";
    for (const auto& r : rows) {
      sink.stream() << fmt::format("{},{:.12f},\"{}\",{:.3e}\n", fmt_double(r.epsilon), r.mass,
                                   r.top, r.residual);
    }
  }
  fmt::print(stderr, "posm_mass {} as epsilon decreases\n",
             monotone ? "is nondecreasing" : "is NOT nondecreasing");
  return kExitOk;
}

struct ResistanceArgs {
  std::string market;
  std::vector<double> epsilons{0.1, 0.05, 0.02, 0.01};
  double tolerance = 0.1;
  std::string out;
  std::size_t jobs = 0;
};

int cmd_resistance(const ResistanceArgs& args, const RuleFlags& flags) {
  const Market market = load_market(args.market);
  if (market.num_proposers() != 2 || market.num_acceptors() != 2) {
    throw Error(ErrorCode::kInvalidConfig, "resistance fits need a 2x2 market");
  }
  if (args.epsilons.size() < 4) {
    throw Error(ErrorCode::kGridTooSmall,
                fmt::format("need at least 4 epsilon values, got {}", args.epsilons.size()));
  }
  std::vector<PerturbedChain> chains;
  for (const double epsilon : args.epsilons) {
    chains.push_back(build_chain(market, flags.params(epsilon), args.jobs));
  }
  const RuleParams reference = chains.front().params;

  Sink sink(args.out);
  auto& out = sink.stream();
  out << "kind,delta_u,theory,slope,abs_error,pass,source,target\n";
  std::size_t failures = 0;
  for (const auto kind : {TransitionKind::kContentAdopt, TransitionKind::kDiscontentAdopt,
                          TransitionKind::kContentRemainSingle, TransitionKind::kDoubleExperiment}) {
    const auto transitions = elementary_transitions(market, reference, kind);
    if (transitions.empty()) {
      // Nothing identifiable in this market; still report the theory value.
      out << fmt::format("{},0,{},,,n/a,,\n", transition_kind_name(kind),
                         fmt_double(theoretical_resistance(kind, 0.0, reference)));
      continue;
    }
    for (const auto& t : transitions) {
      const double theory = theoretical_resistance(kind, t.x, reference);
      const SlopeFit fit = resistance_slope(chains, t.source, t.target, t.steps);
      const double err = std::abs(fit.slope - theory);
      const bool pass = err <= args.tolerance;
      failures += !pass;
      out << fmt::format("{},{},{},{:.6f},{:.6f},{},\"{}\",\"{}\"\n", transition_kind_name(kind),
                         fmt_double(t.x), fmt_double(theory), fit.slope, err,
                         pass ? "true" : "false", describe_joint_state(market, t.source),
                         describe_joint_state(market, t.target));
    }
  }
  fmt::print(stderr, "{} fit(s) outside +/-{}\n", failures, fmt_double(args.tolerance));
  return kExitOk;
}

struct GenArgs {
  std::size_t n = 0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  std::string mode = "rank";
  bool ordinal = false;
  std::string out;
};

int cmd_gen_market(const GenArgs& args) {
  MarketGenSpec spec;
  spec.num_proposers = args.n;
  spec.num_acceptors = args.m;
  spec.seed = args.seed;
  spec.mode = args.mode == "uniform" ? Cardinalization::kUniform : Cardinalization::kRank;
  const Market market = generate_market(spec);
  Sink sink(args.out);
  sink.stream() << market_to_json(market, args.ordinal).dump(2) << '\n';
  return kExitOk;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kTooLarge:
    case ErrorCode::kNotConverged:
    case ErrorCode::kNoConvergence:
    case ErrorCode::kReducible:
    case ErrorCode::kZeroProbability:
      return kExitAnalysis;
    default:
      return kExitUsage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized two-sided matching under trial-and-error learning"};
  app.require_subcommand(1);

  std::string gs_market;
  auto* gs = app.add_subcommand("gs", "Proposer-optimal stable match and stability report");
  gs->add_option("--market", gs_market, "Market JSON file")->required();

  std::string nash_market;
  auto* nash = app.add_subcommand("nash", "Pure Nash profiles and their matches (n, m <= 4)");
  nash->add_option("--market", nash_market, "Market JSON file")->required();

  const auto check_epsilon = CLI::PositiveNumber;

  SimulateArgs sim;
  RuleFlags sim_flags;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo runs of the learning dynamics");
  simulate->add_option("--market", sim.market, "Market JSON file")->required();
  simulate->add_option("--epsilon", sim.epsilons, "Experimentation rate (repeatable)")
      ->check(check_epsilon)->capture_default_str();
  simulate->add_option("--steps", sim.steps, "Horizon T")->capture_default_str();
  simulate->add_option("--seed", sim.seeds, "Seed (repeatable)")->capture_default_str();
  simulate->add_option("--window", sim.window, "Final fraction of the horizon used for metrics")
      ->capture_default_str();
  simulate->add_option("--out", sim.out, "Metrics file (stdout if omitted)");
  simulate->add_option("--format", sim.format)->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  simulate->add_option("--trace-dir", sim.trace_dir, "Write one full trace CSV per run here");
  simulate->add_option("--jobs", sim.jobs, "Worker threads (0 = hardware)");
  sim_flags.attach(simulate);

  ChainArgs ch;
  RuleFlags ch_flags;
  auto* chain = app.add_subcommand("chain", "Exact stationary analysis over an epsilon sweep");
  chain->add_option("--market", ch.market, "Market JSON file")->required();
  chain->add_option("--epsilon", ch.epsilons, "Experimentation rate (repeatable)")
      ->check(check_epsilon);
  chain->add_option("--out", ch.out, "Table file (stdout if omitted)");
  chain->add_option("--format", ch.format)->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  chain->add_option("--export-matrix", ch.triplets, "Transition triplets CSV (one epsilon only)");
  chain->add_option("--export-pi", ch.pi, "Stationary distribution CSV (one epsilon only)");
  chain->add_option("--export-legend", ch.legend, "State legend JSON (one epsilon only)");
  chain->add_option("--backend", ch.backend)->check(CLI::IsMember({"auto", "direct", "power"}))
      ->capture_default_str();
  chain->add_option("--jobs", ch.jobs, "Worker threads (0 = hardware)");
  ch_flags.attach(chain);

  ResistanceArgs rs;
  RuleFlags rs_flags;
  auto* resistance = app.add_subcommand("resistance", "Log-log slope fits of elementary transitions");
  resistance->add_option("--market", rs.market, "2x2 market JSON file")->required();
  resistance->add_option("--epsilon", rs.epsilons, "Grid (repeatable, at least 4)")
      ->check(check_epsilon);
  resistance->add_option("--tolerance", rs.tolerance)->capture_default_str();
  resistance->add_option("--out", rs.out, "Table file (stdout if omitted)");
  resistance->add_option("--jobs", rs.jobs, "Worker threads (0 = hardware)");
  rs_flags.attach(resistance);

  GenArgs gen;
  auto* gen_market = app.add_subcommand("gen-market", "Random market with strict preferences");
  gen_market->add_option("--n", gen.n, "Proposers")->required();
  gen_market->add_option("--m", gen.m, "Acceptors")->required();
  gen_market->add_option("--seed", gen.seed)->capture_default_str();
  gen_market->add_option("--mode", gen.mode)->check(CLI::IsMember({"rank", "uniform"}))
      ->capture_default_str();
  gen_market->add_flag("--ordinal", gen.ordinal, "Write ordered lists instead of values");
  gen_market->add_option("--out", gen.out, "Output file (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gs) return cmd_gs(gs_market);
    if (*nash) return cmd_nash(nash_market);
    if (*simulate) return cmd_simulate(sim, sim_flags);
    if (*chain) return cmd_chain(ch, ch_flags);
    if (*resistance) return cmd_resistance(rs, rs_flags);
    if (*gen_market) return cmd_gen_market(gen);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
