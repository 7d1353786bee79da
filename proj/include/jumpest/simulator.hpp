#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "jumpest/designer.hpp"
#include "jumpest/model.hpp"
#include "jumpest/outcome_chain.hpp"

namespace jumpest {

/// Delay above d_max: the sample never reaches the estimator.
inline constexpr int kLost = -1;

/// Realized network behavior: per-sensor per-sample delays, with the derived
/// per-step chain state of the reception window.
struct NetworkTrace {
  int n_y = 0;
  int d_max = 0;
  int horizon = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<int>> delays;  // [sensor][sample time]
  std::vector<int> theta_indices;        // per step

  /// First d_max+1 steps; excluded from statistics (the window is not yet
  /// fully populated there).
  int warmup() const { return d_max + 1; }

  bool received_at(int sensor, int sample_time, int at_time) const {
    if (sample_time < 0) return false;
    const int d = delays[sensor][sample_time];
    return d != kLost && sample_time + d == at_time;
  }
};

NetworkTrace sample_network(const DelayDistribution& dist, int horizon,
                            std::uint64_t seed);

struct SimOptions {
  std::uint64_t noise_seed = 1;
  bool random_input = false;  // seeded excitation; zero input otherwise
  std::uint64_t input_seed = 99;
  double x0_stddev = 1.0;     // initial true state, N(0, x0_stddev^2 I)
  Vector x0_exact;            // when nonempty, used verbatim (no x0 draw)
  Vector xhat0;               // initial estimate; zero when empty
};

struct RunResult {
  std::vector<Vector> x_true;  // augmented true state per step
  std::vector<Vector> x_est;   // augmented estimate per step
  std::vector<Vector> err;     // x_true - x_est, exactly
  std::vector<int> theta_indices;
  std::vector<long long> flops_per_step;  // update path only
  std::uint64_t seed = 0;
};

/// Jump observer on a sampled trace. The estimate is initialized before any
/// measurement; updates start at t = 1 (sample 0's own-instant delivery falls
/// outside the update loop, which only matters inside the warm-up prefix).
RunResult run_observer(const AugmentedModel& model, const GainSchedule& schedule,
                       const OutcomeChain& chain, const NetworkTrace& trace,
                       const SimOptions& opts = {});

/// Scalar-multiply/add count for one jump-observer step with the given number
/// of active measurement slots, for the structure-exploiting update the
/// simulator actually performs.
long long jump_step_flops(const AugmentedModel& model, int active_count);

/// Propagates the estimation-error recursion directly (no explicit plant
/// state), which stays finite for open-loop unstable plants. Noise draw order
/// matches run_observer, so matched runs see identical realizations.
class JumpErrorSimulator {
 public:
  JumpErrorSimulator(const AugmentedModel& model, const GainSchedule& schedule,
                     const OutcomeChain& chain);

  /// sink(t, theta_index, err) is called for every step t >= 1.
  void run(const NetworkTrace& trace, std::uint64_t noise_seed,
           double x0_stddev,
           const std::function<void(int, int, const Vector&)>& sink) const;

 private:
  const AugmentedModel& model_;
  const OutcomeChain& chain_;
  std::vector<Matrix> F_;         // per state, I - L alpha Cbar
  std::vector<Matrix> L_active_;  // per state, L with inactive columns zeroed
  Matrix w_sqrt_;
};

/// Streaming per-state second-moment accumulator for estimation errors.
struct EmpiricalCovariance {
  std::vector<Matrix> sum;
  std::vector<long long> count;
  Matrix overall_sum;
  long long total = 0;

  void init(int num_states, int dim);
  void add(int theta_index, const Vector& err);
  Matrix state_cov(int j) const;
  Matrix overall() const;
  Vector pi_hat() const;
  /// States with fewer samples than the threshold (reported, not asserted).
  std::vector<int> undersampled(long long threshold) const;
};

/// Conditional covariances grouped by chain state over finished runs, warm-up
/// and burn-in excluded. Requires at least two runs.
EmpiricalCovariance empirical_covariance(const std::vector<RunResult>& runs,
                                         const OutcomeChain& chain,
                                         int burn_in);

}  // namespace jumpest
