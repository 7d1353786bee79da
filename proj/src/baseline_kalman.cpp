#include "jumpest/baseline_kalman.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>
#include <stdexcept>

namespace jumpest {

namespace {

Matrix psd_sqrt(const Matrix& W) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (W + W.transpose()));
  Vector lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

long long matvec_flops(long long rows, long long cols) {
  if (rows <= 0 || cols <= 0) return 0;
  return rows * cols + rows * (cols - 1);
}

long long matmul_flops(long long m, long long k, long long l) {
  if (m <= 0 || k <= 0 || l <= 0) return 0;
  return m * l * (2 * k - 1);
}

struct ActiveRows {
  std::vector<int> slots;
  Matrix Ca;
  Vector Va;  // diagonal
};

ActiveRows select_rows(const AugmentedModel& model, const Eigen::VectorXi& alpha) {
  ActiveRows act;
  for (int k = 0; k < model.ny_bar; ++k)
    if (alpha[k] == 1) act.slots.push_back(k);
  const int m = static_cast<int>(act.slots.size());
  act.Ca.resize(m, model.nx());
  act.Va.resize(m);
  for (int r = 0; r < m; ++r) {
    act.Ca.row(r) = model.Cbar.row(act.slots[r]);
    act.Va[r] = model.V(act.slots[r], act.slots[r]);
  }
  return act;
}

// shared measurement-update: x and P in place, err-form callers pass the
// negated noise through m_residual
void joseph_update(KalmanState& state, const AugmentedModel& model,
                   const ActiveRows& act, const Vector& residual) {
  const int m = static_cast<int>(act.slots.size());
  const Matrix CaP = act.Ca * state.P;
  Matrix S = CaP * act.Ca.transpose();
  S.diagonal() += act.Va;
  const Matrix K = S.ldlt().solve(CaP).transpose();
  state.x_hat += K * residual;
  const Matrix IKC =
      Matrix::Identity(model.nx(), model.nx()) - K * act.Ca;
  state.P = IKC * state.P * IKC.transpose() +
            K * act.Va.asDiagonal() * K.transpose();
  state.P = 0.5 * (state.P + state.P.transpose());
  (void)m;
}

}  // namespace

KalmanState kalman_init(const AugmentedModel& model, const Vector& xhat0,
                        const Matrix& P0) {
  KalmanState st;
  st.x_hat = xhat0.size() > 0 ? xhat0 : Vector::Zero(model.nx());
  st.P = P0;
  st.flops = 0;
  return st;
}

void kalman_step(KalmanState& state, const AugmentedModel& model,
                 const Eigen::VectorXi& alpha, const Vector& m_bar,
                 const Vector& u) {
  state.x_hat = model.Abar * state.x_hat + model.Bu_bar * u;
  state.P = model.Abar * state.P * model.Abar.transpose() + model.process_noise();
  const ActiveRows act = select_rows(model, alpha);
  const int m = static_cast<int>(act.slots.size());
  state.flops += kalman_step_flops(model, m);
  if (m == 0) return;
  Vector received(m);
  for (int r = 0; r < m; ++r) received[r] = m_bar[act.slots[r]];
  const Vector residual = received - act.Ca * state.x_hat;
  joseph_update(state, model, act, residual);
}

long long kalman_step_flops(const AugmentedModel& model, int active_count) {
  const long long nx = model.nx();
  const long long nu = model.Bu_bar.cols();
  const long long k = active_count;
  long long flops = matvec_flops(nx, nx) + matvec_flops(nx, nu) + nx  // x prior
                    + 2 * matmul_flops(nx, nx, nx) + nx * nx;         // P prior
  if (k == 0) return flops;
  flops += matmul_flops(k, nx, nx);               // Ca P
  flops += matmul_flops(k, nx, k) + k;            // innovation covariance
  flops += (2 * k * k * k) / 3 + 2 * k * k;       // inverse
  flops += matmul_flops(nx, k, k);                // K
  flops += matvec_flops(k, nx) + k;               // residual
  flops += matvec_flops(nx, k) + nx;              // state update
  flops += matmul_flops(nx, k, nx) + nx * nx;     // I - K Ca
  flops += 2 * matmul_flops(nx, nx, nx);          // Joseph sandwich
  flops += nx * k + matmul_flops(nx, k, nx) + nx * nx;  // K Va K'
  return flops;
}

KalmanErrorSimulator::KalmanErrorSimulator(const AugmentedModel& model,
                                           const OutcomeChain& chain)
    : model_(model), chain_(chain) {
  w_sqrt_ = psd_sqrt(model.W);
}

void KalmanErrorSimulator::run(
    const NetworkTrace& trace, std::uint64_t noise_seed, double x0_stddev,
    const std::function<void(int, int, const Vector&)>& sink) const {
  const int n = model_.n;
  const int nx = model_.nx();
  const int d1 = model_.d_max + 1;
  const int n_w = static_cast<int>(model_.W.rows());

  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Vector err = Vector::Zero(nx);
  for (int k = 0; k < n; ++k) err[k] = x0_stddev * gauss(rng);
  Matrix P = Matrix::Zero(nx, nx);
  P.topLeftCorner(n, n) = x0_stddev * x0_stddev * Matrix::Identity(n, n);

  std::vector<std::vector<double>> v_ring(trace.n_y,
                                          std::vector<double>(d1, 0.0));
  for (int s = 0; s < trace.n_y; ++s)
    v_ring[s][0] = std::sqrt(model_.V(model_.slot(s, 0), model_.slot(s, 0))) *
                   gauss(rng);

  const Matrix Qw = model_.process_noise();
  Vector w(n_w);
  for (int t = 1; t < trace.horizon; ++t) {
    for (int k = 0; k < n_w; ++k) w[k] = gauss(rng);
    for (int s = 0; s < trace.n_y; ++s)
      v_ring[s][t % d1] =
          std::sqrt(model_.V(model_.slot(s, 0), model_.slot(s, 0))) *
          gauss(rng);

    err = model_.Abar * err + model_.Bw_bar * (w_sqrt_ * w);
    P = model_.Abar * P * model_.Abar.transpose() + Qw;

    const int theta = trace.theta_indices[t];
    const ActiveRows act = select_rows(model_, chain_.avail[theta]);
    const int m = static_cast<int>(act.slots.size());
    if (m > 0) {
      const Matrix CaP = act.Ca * P;
      Matrix S = CaP * act.Ca.transpose();
      S.diagonal() += act.Va;
      const Matrix K = S.ldlt().solve(CaP).transpose();
      Vector v_active(m);
      for (int r = 0; r < m; ++r) {
        const int slot = act.slots[r];
        const int s = slot / d1;
        const int d = slot % d1;
        v_active[r] = v_ring[s][(t - d) % d1];
      }
      err = err - K * (act.Ca * err + v_active);
      const Matrix IKC = Matrix::Identity(nx, nx) - K * act.Ca;
      P = IKC * P * IKC.transpose() + K * act.Va.asDiagonal() * K.transpose();
      P = 0.5 * (P + P.transpose());
    }
    sink(t, theta, err);
  }
}

KalmanCovarianceEstimate kalman_expected_covariance(
    const AugmentedModel& model, const OutcomeChain& chain,
    const DelayDistribution& dist, int runs, int horizon, int burn_in,
    std::uint64_t seed) {
  if (runs < 100) throw std::invalid_argument("need at least 100 runs");
  const int n = model.n;
  const double ceiling = 1e9 * (1.0 + model.W.trace());

  KalmanErrorSimulator sim(model, chain);
  const int skip = std::max(burn_in, model.d_max + 1);
  Matrix acc = Matrix::Zero(n, n);
  double sum_tr = 0.0, sum_tr2 = 0.0;
  for (int run = 0; run < runs; ++run) {
    NetworkTrace trace = sample_network(dist, horizon, seed + 1000003ULL * run);
    double run_tr = 0.0;
    long long steps = 0;
    Matrix run_acc = Matrix::Zero(n, n);
    sim.run(trace, seed ^ (0x9E3779B97F4A7C15ULL + run), 1.0,
            [&](int t, int, const Vector& err) {
              if (t < skip) return;
              const double tr = err.head(n).squaredNorm();
              if (tr > ceiling)
                throw std::runtime_error("Kalman covariance estimate diverged");
              run_acc += err.head(n) * err.head(n).transpose();
              run_tr += tr;
              ++steps;
            });
    run_tr /= steps;
    acc += run_acc / static_cast<double>(steps);
    sum_tr += run_tr;
    sum_tr2 += run_tr * run_tr;
  }

  KalmanCovarianceEstimate est;
  est.P = acc / runs;
  est.trace_mean = sum_tr / runs;
  const double var = (sum_tr2 / runs - est.trace_mean * est.trace_mean) /
                     std::max(1, runs - 1);
  est.trace_stderr = std::sqrt(std::max(var, 0.0));
  return est;
}

}  // namespace jumpest
