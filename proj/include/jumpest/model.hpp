#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace jumpest {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raw LTI plant: x[t+1] = A x + Bu u + Bw w, scalar sensor outputs
/// y_s = c_s x + v_s with E{w w'} = W and E{v_s^2} = sigma2[s].
struct PlantModel {
  Matrix A;
  Matrix Bu;
  Matrix Bw;
  Matrix C;       // one row per sensor
  Matrix W;
  Vector sigma2;

  int n() const { return static_cast<int>(A.rows()); }
  int n_u() const { return static_cast<int>(Bu.cols()); }
  int n_w() const { return static_cast<int>(Bw.cols()); }
  int n_y() const { return static_cast<int>(C.rows()); }
};

struct PlantDiagnostics {
  std::vector<std::string> violations;
  double max_abs_eigenvalue = 0.0;  // |lambda(A)|_max

  bool ok() const { return violations.empty(); }
};

/// Delay-augmented plant. The state stacks the last d_max+1 plant states;
/// each (sensor, delay) pair becomes a fictitious sensor with constant delay.
/// Measurement slots are ordered sensor-major then delay:
/// slot(s, d) = s*(d_max+1) + d.
struct AugmentedModel {
  Matrix Abar;
  Matrix Bu_bar;
  Matrix Bw_bar;
  Matrix Cbar;     // rows are cbar_{s,d}
  Matrix V;        // diagonal stacked sensor noise covariance
  Matrix W;        // raw disturbance covariance, kept for the recursions
  int n = 0;
  int n_y = 0;
  int d_max = 0;
  int ny_bar = 0;  // n_y * (d_max + 1)

  int nx() const { return n * (d_max + 1); }
  int slot(int sensor, int delay) const { return sensor * (d_max + 1) + delay; }

  /// [I_n 0] selector picking the current-state block.
  Matrix current_state_selector() const;

  /// Augmented process-noise covariance Bw_bar W Bw_bar'.
  Matrix process_noise() const { return Bw_bar * W * Bw_bar.transpose(); }
};

PlantDiagnostics validate_plant(const PlantModel& plant);

/// Builds the augmented model. Throws std::invalid_argument on dimension
/// mismatch (message names the offending pair) or invalid plant.
AugmentedModel build_augmented(const PlantModel& plant, int d_max);

}  // namespace jumpest
