#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "jumpest/baseline_kalman.hpp"
#include "jumpest/designer.hpp"
#include "jumpest/model.hpp"
#include "jumpest/outcome_chain.hpp"
#include "jumpest/simulator.hpp"

namespace jumpest {

struct ExperimentConfig {
  PlantModel plant;
  int d_max = 0;
  DelayDistribution dist;
  std::vector<Strategy> strategies;
  std::vector<double> rho_grid;
  int runs = 2000;
  int horizon = 500;
  int burn_in = 200;
  std::uint64_t seed = 1;
  double tol = 1e-9;
  int max_iter = 5000;
  std::string output_dir = "out";
};

/// Strict parse: unknown keys and malformed values are rejected with the
/// offending key path in the message.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);
std::string emit_config(const ExperimentConfig& cfg);

/// Adds rho to every entry of A (the destabilizing sweep parameter).
PlantModel apply_rho(const PlantModel& plant, double rho);

/// Performance-loss factor in percent: positive means worse than the Kalman
/// baseline. Throws std::invalid_argument when the denominator trace is not
/// positive.
double epsilon_percent(double trace_S, double trace_Kal);

/// Matched Monte-Carlo comparison: jump observer and Kalman filter run on
/// identical disturbance, noise and delay realizations.
struct MatchedEvaluation {
  double jump_trace_mean = 0.0;
  double jump_trace_se = 0.0;
  double kal_trace_mean = 0.0;
  double kal_trace_se = 0.0;
  double diff_mean = 0.0;  // jump - kalman, per-run paired differences
  double diff_se = 0.0;
  double epsilon = 0.0;
  double epsilon_se = 0.0;
  int runs = 0;
};

MatchedEvaluation evaluate_matched(const AugmentedModel& model,
                                   const OutcomeChain& chain,
                                   const GainSchedule& schedule,
                                   const DelayDistribution& dist, int runs,
                                   int horizon, int burn_in,
                                   std::uint64_t seed);

struct SweepCell {
  double rho = 0.0;
  Strategy strategy = Strategy::S1;
  int num_gains = 0;
  double objective = 0.0;          // designed current-state trace, Cx-projected
  MatchedEvaluation eval;
  long long flops_jump = 0;        // worst availability pattern
  long long flops_kalman = 0;
  bool stability_ok = false;
  bool fixed_point_ok = false;
  std::string status = "ok";       // per-cell failures recorded, never thrown
};

struct SweepReport {
  std::vector<SweepCell> cells;
  std::string csv() const;
  std::string summary() const;
};

SweepReport run_experiment(const ExperimentConfig& cfg);

}  // namespace jumpest
