#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "jumpest/model.hpp"

namespace jumpest {

/// Marks a sample that has not been received within the observation window.
inline constexpr int kNotReceived = -1;

/// Per-sensor delivery-delay distribution: beta[s][d] = Pr{tau_s = d} for
/// d = 0..d_max; the remaining mass 1 - sum_d beta[s][d] is the loss tail.
struct DelayDistribution {
  std::vector<std::vector<double>> beta;

  int n_sensors() const { return static_cast<int>(beta.size()); }
  int d_max() const { return beta.empty() ? -1 : static_cast<int>(beta[0].size()) - 1; }

  /// Tail probability Pr{tau_s > d}; tail(s, -1) = 1.
  double tail(int s, int d) const;

  std::vector<std::string> validate() const;
};

/// One historical measurement-transmission outcome. For every
/// (sensor, sample age) pair the state stores a single reception offset:
/// the delay o in 0..age with which the sample of that age was delivered,
/// or kNotReceived when it has not arrived within the window. The redundant
/// per-(sensor, age, delay) bit vector is reconstructed on demand by
/// theta_bits().
struct OutcomeState {
  std::vector<int> offsets;  // index (s, age) -> s*(d_max+1)+age
  int index = 0;

  int offset(int sensor, int age, int d_max) const {
    return offsets[sensor * (d_max + 1) + age];
  }

  /// Reconstructs the redundant binary encoding, sensor-major, then sample
  /// age, then reception offset within each sub-vector.
  std::vector<int> theta_bits(int n_y, int d_max) const;
};

/// The enumerated outcome Markov chain with transition matrix, stationary
/// distribution and the availability map onto the pattern set Xi.
struct OutcomeChain {
  int n_y = 0;
  int d_max = 0;
  std::vector<OutcomeState> states;
  Matrix Lambda;                       // row-stochastic
  Vector pi;                           // stationary, pi = pi * Lambda
  std::vector<Eigen::VectorXi> avail;  // state -> binary pattern, length ny_bar
  std::vector<Eigen::VectorXi> Xi;     // deduplicated patterns, Xi[0] = 0
  std::vector<int> pattern_of_state;   // state -> index into Xi

  int size() const { return static_cast<int>(states.size()); }
  int ny_bar() const { return n_y * (d_max + 1); }
  bool reachable(int state) const { return pi[state] > 0.0; }
};

/// Number of outcome states, ((d_max+2)!)^n_y. Throws std::overflow_error
/// when the count exceeds cap.
long long outcome_state_count(int n_y, int d_max, long long cap = 1000000);

std::vector<OutcomeState> enumerate_states(int n_y, int d_max,
                                           long long cap = 1000000);

/// Canonical positional encoding; inverse of enumerate_states ordering.
/// Throws std::invalid_argument if an offset violates the at-most-once
/// window constraint (offset > age).
int state_index(const std::vector<int>& offsets, int n_y, int d_max);

/// Window-shift feasibility predicate between consecutive outcomes.
bool transition_feasible(const OutcomeState& from, const OutcomeState& to,
                         int n_y, int d_max);

/// Transition matrix by direct conditional enumeration over the underlying
/// per-sample delay variables. Rows whose conditional tails vanish fall back
/// to the lost-sample convention (the sample is deemed lost, so the row
/// stays stochastic); such source states carry zero stationary mass.
Matrix transition_matrix(const std::vector<OutcomeState>& states,
                         const DelayDistribution& dist, int n_y, int d_max);

/// The closed-form ratio-of-products transition probability. Returns NaN when
/// a denominator tail is zero. Used as a cross-check of transition_matrix.
double transition_prob_ratio(const OutcomeState& from, const OutcomeState& to,
                             const DelayDistribution& dist, int n_y, int d_max);

/// Stationary distribution of a row-stochastic matrix: null-space solve with
/// the normalization constraint, power iteration as fallback. Throws
/// std::runtime_error when neither reaches the 1e-12 residual tolerance.
Vector stationary(const Matrix& Lambda, int max_power_iters = 200000);

/// Availability pattern of each state (the diagonal of alpha = f(theta)) and
/// the deduplicated image Xi with the all-zero pattern first.
void availability_map(const std::vector<OutcomeState>& states, int n_y,
                      int d_max, std::vector<Eigen::VectorXi>& avail,
                      std::vector<Eigen::VectorXi>& Xi,
                      std::vector<int>& pattern_of_state);

OutcomeChain build_outcome_chain(const DelayDistribution& dist,
                                 long long cap = 1000000);

/// Debug dump: one CSV block per object (states, Lambda, pi, availability).
void dump_chain(const OutcomeChain& chain, std::ostream& os);

}  // namespace jumpest
