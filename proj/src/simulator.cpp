#include "jumpest/simulator.hpp"

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

int theta_index_at(const NetworkTrace& trace, int t) {
  const int d1 = trace.d_max + 1;
  std::vector<int> offsets(trace.n_y * d1, kNotReceived);
  for (int s = 0; s < trace.n_y; ++s)
    for (int age = 0; age <= trace.d_max; ++age) {
      const int sample = t - age;
      if (sample < 0) continue;
      const int d = trace.delays[s][sample];
      if (d != kLost && d <= age) offsets[s * d1 + age] = d;
    }
  return state_index(offsets, trace.n_y, trace.d_max);
}

}  // namespace

NetworkTrace sample_network(const DelayDistribution& dist, int horizon,
                            std::uint64_t seed) {
  const auto problems = dist.validate();
  if (!problems.empty())
    throw std::invalid_argument("invalid delay distribution: " + problems.front());
  if (horizon < dist.d_max() + 1)
    throw std::invalid_argument("horizon shorter than the window length");

  NetworkTrace trace;
  trace.n_y = dist.n_sensors();
  trace.d_max = dist.d_max();
  trace.horizon = horizon;
  trace.seed = seed;
  trace.delays.assign(trace.n_y, std::vector<int>(horizon, kLost));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  // draw order: sensor-major, then sample time
  for (int s = 0; s < trace.n_y; ++s)
    for (int t = 0; t < horizon; ++t) {
      double u = unif(rng);
      int delay = kLost;
      for (int d = 0; d <= trace.d_max; ++d) {
        if (u < dist.beta[s][d]) {
          delay = d;
          break;
        }
        u -= dist.beta[s][d];
      }
      trace.delays[s][t] = delay;
    }

  trace.theta_indices.resize(horizon);
  for (int t = 0; t < horizon; ++t)
    trace.theta_indices[t] = theta_index_at(trace, t);
  return trace;
}

long long jump_step_flops(const AugmentedModel& model, int active_count) {
  const int n = model.n;
  const long long predict = matvec_flops(n, n) +
                            matvec_flops(n, model.Bu_bar.cols()) + n;
  if (active_count == 0) return predict;
  const long long innovation = active_count * (matvec_flops(1, n) + 1);
  const long long correction =
      matvec_flops(model.nx(), active_count) + model.nx();
  return predict + innovation + correction;
}

RunResult run_observer(const AugmentedModel& model, const GainSchedule& schedule,
                       const OutcomeChain& chain, const NetworkTrace& trace,
                       const SimOptions& opts) {
  if (chain.n_y != trace.n_y || chain.d_max != trace.d_max)
    throw std::invalid_argument("trace does not match the chain shape");
  if (static_cast<int>(schedule.grouping.size()) != chain.size())
    throw std::invalid_argument("schedule does not match the chain");

  const int n = model.n;
  const int nx = model.nx();
  const int d1 = model.d_max + 1;
  const int T = trace.horizon;

  std::mt19937_64 noise_rng(opts.noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::mt19937_64 input_rng(opts.input_seed);
  std::normal_distribution<double> input_gauss(0.0, 1.0);
  const Matrix w_sqrt = psd_sqrt(model.W);
  const int n_w = static_cast<int>(model.W.rows());
  const int n_u = static_cast<int>(model.Bu_bar.cols());

  RunResult res;
  res.seed = trace.seed;
  res.x_true.reserve(T);
  res.x_est.reserve(T);
  res.err.reserve(T);
  res.theta_indices = trace.theta_indices;
  res.flops_per_step.reserve(T);

  Vector x_bar = Vector::Zero(nx);
  if (opts.x0_exact.size() > 0) {
    x_bar.head(n) = opts.x0_exact;
  } else {
    for (int k = 0; k < n; ++k) x_bar[k] = opts.x0_stddev * gauss(noise_rng);
  }
  Vector x_hat = Vector::Zero(nx);
  if (opts.xhat0.size() > 0) x_hat = opts.xhat0;

  // measurement-noise ring buffer, v[s][t mod (d_max+1)]
  std::vector<std::vector<double>> v_ring(trace.n_y,
                                          std::vector<double>(d1, 0.0));
  for (int s = 0; s < trace.n_y; ++s)
    v_ring[s][0] = std::sqrt(model.V(model.slot(s, 0), model.slot(s, 0))) *
                   gauss(noise_rng);

  res.x_true.push_back(x_bar);
  res.x_est.push_back(x_hat);
  res.err.push_back(x_bar - x_hat);
  res.flops_per_step.push_back(0);

  Vector u = Vector::Zero(n_u);
  for (int t = 1; t < T; ++t) {
    if (opts.random_input)
      for (int k = 0; k < n_u; ++k) u[k] = input_gauss(input_rng);
    Vector w(n_w);
    for (int k = 0; k < n_w; ++k) w[k] = gauss(noise_rng);
    w = w_sqrt * w;
    for (int s = 0; s < trace.n_y; ++s)
      v_ring[s][t % d1] =
          std::sqrt(model.V(model.slot(s, 0), model.slot(s, 0))) *
          gauss(noise_rng);

    x_bar = model.Abar * x_bar + model.Bu_bar * u + model.Bw_bar * w;

    // structured prediction: new top block, shifted history
    Vector x_prior(nx);
    x_prior.head(n) =
        model.Abar.topLeftCorner(n, n) * x_hat.head(n) + model.Bu_bar.topRows(n) * u;
    for (int d = 1; d < d1; ++d)
      x_prior.segment(d * n, n) = x_hat.segment((d - 1) * n, n);

    const int theta = trace.theta_indices[t];
    int active = 0;
    if (schedule.has_gain(theta)) {
      const Eigen::VectorXi& a = chain.avail[theta];
      const Matrix& L = schedule.gain(theta);
      Vector correction = Vector::Zero(nx);
      for (int s = 0; s < trace.n_y; ++s)
        for (int d = 0; d <= model.d_max; ++d) {
          const int k = model.slot(s, d);
          if (a[k] == 0) continue;
          ++active;
          const double y =
              model.Cbar.row(k).segment(d * n, n).dot(x_bar.segment(d * n, n)) +
              v_ring[s][(t - d) % d1];
          const double innov =
              y - model.Cbar.row(k).segment(d * n, n).dot(x_prior.segment(d * n, n));
          correction += L.col(k) * innov;
        }
      x_hat = x_prior + correction;
    } else {
      x_hat = x_prior;
    }

    res.x_true.push_back(x_bar);
    res.x_est.push_back(x_hat);
    res.err.push_back(x_bar - x_hat);
    res.flops_per_step.push_back(jump_step_flops(model, active));
  }
  return res;
}

JumpErrorSimulator::JumpErrorSimulator(const AugmentedModel& model,
                                       const GainSchedule& schedule,
                                       const OutcomeChain& chain)
    : model_(model), chain_(chain) {
  if (static_cast<int>(schedule.grouping.size()) != chain.size())
    throw std::invalid_argument("schedule does not match the chain");
  const int nx = model.nx();
  F_.assign(chain.size(), Matrix());
  L_active_.assign(chain.size(), Matrix());
  for (int j = 0; j < chain.size(); ++j) {
    if (!schedule.has_gain(j)) continue;
    Matrix La = schedule.gain(j);
    for (int k = 0; k < model.ny_bar; ++k)
      if (chain.avail[j][k] == 0) La.col(k).setZero();
    F_[j] = Matrix::Identity(nx, nx) - La * model.Cbar;
    L_active_[j] = std::move(La);
  }
  w_sqrt_ = psd_sqrt(model.W);
}

void JumpErrorSimulator::run(
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

  std::vector<std::vector<double>> v_ring(trace.n_y,
                                          std::vector<double>(d1, 0.0));
  for (int s = 0; s < trace.n_y; ++s)
    v_ring[s][0] = std::sqrt(model_.V(model_.slot(s, 0), model_.slot(s, 0))) *
                   gauss(rng);

  Vector w(n_w), prior(nx);
  for (int t = 1; t < trace.horizon; ++t) {
    for (int k = 0; k < n_w; ++k) w[k] = gauss(rng);
    for (int s = 0; s < trace.n_y; ++s)
      v_ring[s][t % d1] =
          std::sqrt(model_.V(model_.slot(s, 0), model_.slot(s, 0))) *
          gauss(rng);

    prior.noalias() = model_.Abar * err;
    prior.noalias() += model_.Bw_bar * (w_sqrt_ * w);

    const int theta = trace.theta_indices[t];
    if (F_[theta].size() > 0) {
      err.noalias() = F_[theta] * prior;
      for (int s = 0; s < trace.n_y; ++s)
        for (int d = 0; d <= model_.d_max; ++d) {
          const int k = model_.slot(s, d);
          if (chain_.avail[theta][k] == 1)
            err.noalias() -= L_active_[theta].col(k) * v_ring[s][(t - d) % d1];
        }
    } else {
      err = prior;
    }
    sink(t, theta, err);
  }
}

void EmpiricalCovariance::init(int num_states, int dim) {
  sum.assign(num_states, Matrix::Zero(dim, dim));
  count.assign(num_states, 0);
  overall_sum = Matrix::Zero(dim, dim);
  total = 0;
}

void EmpiricalCovariance::add(int theta_index, const Vector& err) {
  const Matrix outer = err * err.transpose();
  sum[theta_index] += outer;
  ++count[theta_index];
  overall_sum += outer;
  ++total;
}

Matrix EmpiricalCovariance::state_cov(int j) const {
  if (count[j] == 0) return Matrix::Zero(sum[j].rows(), sum[j].cols());
  return sum[j] / static_cast<double>(count[j]);
}

Matrix EmpiricalCovariance::overall() const {
  if (total == 0) return overall_sum;
  return overall_sum / static_cast<double>(total);
}

Vector EmpiricalCovariance::pi_hat() const {
  Vector p = Vector::Zero(count.size());
  for (size_t j = 0; j < count.size(); ++j)
    p[j] = total > 0 ? static_cast<double>(count[j]) / total : 0.0;
  return p;
}

std::vector<int> EmpiricalCovariance::undersampled(long long threshold) const {
  std::vector<int> out;
  for (size_t j = 0; j < count.size(); ++j)
    if (count[j] < threshold) out.push_back(static_cast<int>(j));
  return out;
}

EmpiricalCovariance empirical_covariance(const std::vector<RunResult>& runs,
                                         const OutcomeChain& chain,
                                         int burn_in) {
  if (runs.size() < 2)
    throw std::invalid_argument("need at least two runs for empirical covariances");
  EmpiricalCovariance acc;
  acc.init(chain.size(), static_cast<int>(runs.front().err.front().size()));
  const int skip = std::max(burn_in, chain.d_max + 1);
  for (const RunResult& run : runs)
    for (size_t t = skip; t < run.err.size(); ++t)
      acc.add(run.theta_indices[t], run.err[t]);
  return acc;
}

}  // namespace jumpest
