#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "jumpest/model.hpp"
#include "jumpest/outcome_chain.hpp"

namespace jumpest {

enum class Strategy { S1, S2, S3, S4, S5, Custom };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);

/// Gain lookup table for the jump observer. grouping maps a chain state to a
/// gain index, or -1 for the implicit zero gain (no measurement received).
struct GainSchedule {
  std::vector<int> grouping;
  std::vector<Matrix> gains;  // each nx x ny_bar
  Strategy strategy = Strategy::Custom;

  bool has_gain(int state) const { return grouping[state] >= 0; }
  const Matrix& gain(int state) const { return gains[grouping[state]]; }
  int num_gains() const { return static_cast<int>(gains.size()); }
};

/// Per-state covariance family P = (P_0, ..., P_r). Entries for states with
/// zero stationary mass are kept at zero and skipped by the recursions.
struct CovarianceTuple {
  std::vector<Matrix> P;

  static CovarianceTuple zero(int count, int dim);
  static CovarianceTuple identity_scaled(int count, int dim, double scale);
  double weighted_trace(const Vector& pi) const;
  double max_rel_distance(const CovarianceTuple& other) const;
};

/// Grouping map for one of the preconfigured complexity strategies. Entry -1
/// marks the zero-gain states (availability eta_0); shared indices are dense
/// in 0..num_groups-1.
std::vector<int> group_assignment(const OutcomeChain& chain, Strategy strategy);

/// One application of the covariance operator: for each reachable state j,
/// P'_j = sum_i p_{i,j} (pi_i/pi_j) [F_j (A P_i A' + Bw W Bw') F_j' + X_j V X_j']
/// with F_j = I - L_g(j) alpha_j Cbar and X_j = L_g(j) alpha_j.
CovarianceTuple covariance_step(const OutcomeChain& chain,
                                const AugmentedModel& model,
                                const GainSchedule& schedule,
                                const CovarianceTuple& P);

/// The noise-free part of the covariance operator.
CovarianceTuple lyapunov_step(const OutcomeChain& chain,
                              const AugmentedModel& model,
                              const GainSchedule& schedule,
                              const CovarianceTuple& Y);

/// Estimated spectral radius of the noise-free operator by power iteration on
/// the tuple space.
double lyapunov_spectral_radius(const OutcomeChain& chain,
                                const AugmentedModel& model,
                                const GainSchedule& schedule, int iters = 400);

/// Least-squares optimal shared gain for one group given the current
/// covariance tuple: minimizes sum_{j in group} pi_j tr(P'_j(L)). Rank
/// deficiency resolves to the minimum-norm solution; measurement slots never
/// active in the group get exact zero columns.
Matrix group_gain_update(const OutcomeChain& chain, const AugmentedModel& model,
                         const std::vector<int>& grouping,
                         const CovarianceTuple& P, int group_id);

struct SynthesisOptions {
  double tol = 1e-9;
  int max_iter = 5000;
  std::optional<CovarianceTuple> init;  // default: all-zero tuple
};

struct SynthesisReport {
  int iterations = 0;
  double objective = 0.0;
  std::vector<double> objective_trace;
  double fixed_point_residual = 0.0;  // max_j ||E{P}_j - P_j||_F
  bool converged = false;
};

struct SynthesisResult {
  GainSchedule schedule;
  CovarianceTuple P;
  SynthesisReport report;
};

/// Block coordinate descent: alternate per-group optimal gains with one
/// covariance-operator sweep until the tuple and the weighted-trace objective
/// settle. Throws std::runtime_error when the objective passes the divergence
/// ceiling (no stabilizing schedule for this grouping).
SynthesisResult synthesize(const OutcomeChain& chain,
                           const AugmentedModel& model, Strategy strategy,
                           const SynthesisOptions& opts = {});

struct StabilityVerdict {
  bool pass = false;
  bool contraction_ok = false;  // T(P) <= P within tolerance at the fixed point
  bool bounded_ok = false;      // iterates from 100 I stay below the bound
  double contraction_margin = 0.0;  // min_j min-eig(P_j - T_j(P)) (relative)
  double bound_slack = 0.0;         // worst min-eig(M_j - P_{t,j}) (relative)
};

StabilityVerdict verify_stability(const OutcomeChain& chain,
                                  const AugmentedModel& model,
                                  const GainSchedule& schedule,
                                  const CovarianceTuple& P_bar);

struct FixedPointVerdict {
  bool pass = false;
  bool monotone_from_zero = false;
  double max_pairwise_distance = 0.0;  // relative Frobenius between limits
};

/// Iterates the covariance operator from three PSD initial conditions (zero,
/// a perturbed copy of the converged tuple, 100 I) and checks that all runs
/// reach the same fixed point.
FixedPointVerdict verify_fixed_point(const OutcomeChain& chain,
                                     const AugmentedModel& model,
                                     const GainSchedule& schedule);

/// Text serialization of a schedule: strategy tag, grouping map and gain
/// matrices in row-major decimal with 17 significant digits; round-trips
/// exactly.
void write_schedule(const GainSchedule& schedule, std::ostream& os);
GainSchedule read_schedule(std::istream& is);

}  // namespace jumpest
