#pragma once

#include <cstdint>
#include <vector>

#include "jumpest/model.hpp"
#include "jumpest/outcome_chain.hpp"
#include "jumpest/simulator.hpp"

namespace jumpest {

struct KalmanState {
  Vector x_hat;
  Matrix P;
  long long flops = 0;  // running count
};

KalmanState kalman_init(const AugmentedModel& model, const Vector& xhat0,
                        const Matrix& P0);

/// One predict/update cycle of the time-varying Kalman filter on the
/// augmented model. Only the measurement rows flagged in alpha participate;
/// the covariance update uses the Joseph form. m_bar holds the stacked
/// received values (entries at inactive slots are ignored).
void kalman_step(KalmanState& state, const AugmentedModel& model,
                 const Eigen::VectorXi& alpha, const Vector& m_bar,
                 const Vector& u);

/// Per-step flop count of the dense Kalman cycle for a pattern with the given
/// number of active slots (same counting convention as jump_step_flops;
/// inversion of an m x m matrix counts (2/3)m^3 + 2m^2).
long long kalman_step_flops(const AugmentedModel& model, int active_count);

/// Kalman estimation-error recursion on shared noise draws; mirrors
/// JumpErrorSimulator::run draw-for-draw so matched comparisons see identical
/// disturbance, noise and delay realizations.
class KalmanErrorSimulator {
 public:
  KalmanErrorSimulator(const AugmentedModel& model, const OutcomeChain& chain);

  /// sink(t, theta_index, err) for every step t >= 1.
  void run(const NetworkTrace& trace, std::uint64_t noise_seed,
           double x0_stddev,
           const std::function<void(int, int, const Vector&)>& sink) const;

 private:
  const AugmentedModel& model_;
  const OutcomeChain& chain_;
  Matrix w_sqrt_;
};

struct KalmanCovarianceEstimate {
  double trace_mean = 0.0;   // tr(Cx E{err err'} Cx')
  double trace_stderr = 0.0; // across-run standard error of the mean
  Matrix P;                  // Cx E{err err'} Cx'
};

/// Monte-Carlo estimate of the expected current-state error covariance of the
/// time-varying Kalman filter over the stationary regime. Throws
/// std::runtime_error when the running trace passes the divergence ceiling.
KalmanCovarianceEstimate kalman_expected_covariance(
    const AugmentedModel& model, const OutcomeChain& chain,
    const DelayDistribution& dist, int runs, int horizon, int burn_in,
    std::uint64_t seed);

}  // namespace jumpest
