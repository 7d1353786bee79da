#include "jumpest/designer.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace jumpest {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::S1: return "S1";
    case Strategy::S2: return "S2";
    case Strategy::S3: return "S3";
    case Strategy::S4: return "S4";
    case Strategy::S5: return "S5";
    case Strategy::Custom: return "custom";
  }
  return "custom";
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "S1") return Strategy::S1;
  if (name == "S2") return Strategy::S2;
  if (name == "S3") return Strategy::S3;
  if (name == "S4") return Strategy::S4;
  if (name == "S5") return Strategy::S5;
  if (name == "custom") return Strategy::Custom;
  throw std::invalid_argument("unknown strategy: " + name);
}

CovarianceTuple CovarianceTuple::zero(int count, int dim) {
  CovarianceTuple t;
  t.P.assign(count, Matrix::Zero(dim, dim));
  return t;
}

CovarianceTuple CovarianceTuple::identity_scaled(int count, int dim,
                                                 double scale) {
  CovarianceTuple t;
  t.P.assign(count, scale * Matrix::Identity(dim, dim));
  return t;
}

double CovarianceTuple::weighted_trace(const Vector& pi) const {
  double acc = 0.0;
  for (size_t j = 0; j < P.size(); ++j) acc += pi[j] * P[j].trace();
  return acc;
}

double CovarianceTuple::max_rel_distance(const CovarianceTuple& other) const {
  double worst = 0.0;
  for (size_t j = 0; j < P.size(); ++j) {
    const double d = (P[j] - other.P[j]).norm() / (1.0 + other.P[j].norm());
    worst = std::max(worst, d);
  }
  return worst;
}

std::vector<int> group_assignment(const OutcomeChain& chain,
                                  Strategy strategy) {
  const int count = chain.size();
  std::vector<long long> keys(count, -1);
  for (int i = 0; i < count; ++i) {
    if (chain.pattern_of_state[i] == 0) continue;  // eta_0 -> zero gain
    const Eigen::VectorXi& a = chain.avail[i];
    switch (strategy) {
      case Strategy::S1:
        keys[i] = 0;
        break;
      case Strategy::S2: {
        long long sensors = 0;
        for (int s = 0; s < chain.n_y; ++s) {
          bool any = false;
          for (int d = 0; d <= chain.d_max; ++d)
            any = any || a[s * (chain.d_max + 1) + d] == 1;
          sensors += any ? 1 : 0;
        }
        keys[i] = sensors;
        break;
      }
      case Strategy::S3:
        keys[i] = a.sum();
        break;
      case Strategy::S4:
        keys[i] = chain.pattern_of_state[i];
        break;
      case Strategy::S5:
        keys[i] = i;
        break;
      case Strategy::Custom:
        throw std::invalid_argument("custom groupings are read from a schedule file");
    }
  }
  std::map<long long, int> ids;
  for (int i = 0; i < count; ++i)
    if (keys[i] >= 0) ids.emplace(keys[i], 0);
  int next = 0;
  for (auto& kv : ids) kv.second = next++;
  std::vector<int> grouping(count, -1);
  for (int i = 0; i < count; ++i)
    if (keys[i] >= 0) grouping[i] = ids[keys[i]];
  return grouping;
}

namespace {

// Per-state availability as a dense diagonal action on measurement vectors.
struct GainPieces {
  Matrix F;  // I - L alpha Cbar
  Matrix X;  // L alpha
};

GainPieces make_pieces(const OutcomeChain& chain, const AugmentedModel& model,
                       const GainSchedule& schedule, int state) {
  const int nx = model.nx();
  GainPieces p;
  if (!schedule.has_gain(state)) {
    p.F = Matrix::Identity(nx, nx);
    p.X = Matrix::Zero(nx, model.ny_bar);
    return p;
  }
  const Eigen::VectorXi& a = chain.avail[state];
  Matrix La = schedule.gain(state);
  for (int k = 0; k < model.ny_bar; ++k)
    if (a[k] == 0) La.col(k).setZero();
  p.F = Matrix::Identity(nx, nx) - La * model.Cbar;
  p.X = std::move(La);
  return p;
}

// S_j = sum_i p_{i,j} (pi_i/pi_j) (A P_i A' + [Qw]); also returns the weight
// sum c_j = sum_i p_{i,j} pi_i / pi_j (equal to 1 at stationarity).
struct WeightedSums {
  std::vector<Matrix> S;
  std::vector<double> c;
};

WeightedSums weighted_sums(const OutcomeChain& chain,
                           const AugmentedModel& model,
                           const CovarianceTuple& P, bool include_noise) {
  const int count = chain.size();
  const int nx = model.nx();
  if (static_cast<int>(P.P.size()) != count)
    throw std::invalid_argument("covariance tuple size does not match the chain");
  const Matrix Qw = model.process_noise();

  std::vector<Matrix> G(count);
  for (int i = 0; i < count; ++i) {
    if (!chain.reachable(i)) continue;
    G[i] = model.Abar * P.P[i] * model.Abar.transpose();
    if (include_noise) G[i] += Qw;
  }

  WeightedSums out;
  out.S.assign(count, Matrix());
  out.c.assign(count, 0.0);
  for (int j = 0; j < count; ++j) {
    if (!chain.reachable(j)) continue;
    Matrix acc = Matrix::Zero(nx, nx);
    double cw = 0.0;
    for (int i = 0; i < count; ++i) {
      const double w = chain.Lambda(i, j) * chain.pi[i];
      if (w <= 0.0 || !chain.reachable(i)) continue;
      acc += w * G[i];
      cw += w;
    }
    out.S[j] = acc / chain.pi[j];
    out.c[j] = cw / chain.pi[j];
  }
  return out;
}

CovarianceTuple step_from_sums(const OutcomeChain& chain,
                               const AugmentedModel& model,
                               const GainSchedule& schedule,
                               const WeightedSums& sums) {
  CovarianceTuple out = CovarianceTuple::zero(chain.size(), model.nx());
  for (int j = 0; j < chain.size(); ++j) {
    if (!chain.reachable(j)) continue;
    const GainPieces p = make_pieces(chain, model, schedule, j);
    Matrix Pj = p.F * sums.S[j] * p.F.transpose() +
                sums.c[j] * p.X * model.V * p.X.transpose();
    out.P[j] = 0.5 * (Pj + Pj.transpose());
  }
  return out;
}

Matrix gain_from_sums(const OutcomeChain& chain, const AugmentedModel& model,
                      const std::vector<int>& grouping,
                      const WeightedSums& sums, int group_id) {
  const int nx = model.nx();
  const int ny = model.ny_bar;
  Matrix M = Matrix::Zero(ny, ny);
  Matrix B = Matrix::Zero(nx, ny);
  std::vector<bool> ever_active(ny, false);
  bool any_member = false;

  for (int j = 0; j < chain.size(); ++j) {
    if (grouping[j] != group_id || !chain.reachable(j)) continue;
    any_member = true;
    const Eigen::VectorXi& a = chain.avail[j];
    const double w = chain.pi[j];

    Matrix CSC = model.Cbar * sums.S[j] * model.Cbar.transpose();
    Matrix SC = sums.S[j] * model.Cbar.transpose();
    for (int k = 0; k < ny; ++k) {
      if (a[k] == 1) {
        ever_active[k] = true;
        continue;
      }
      CSC.row(k).setZero();
      CSC.col(k).setZero();
      SC.col(k).setZero();
    }
    M += w * CSC;
    B += w * SC;
    for (int k = 0; k < ny; ++k)
      if (a[k] == 1) M(k, k) += w * sums.c[j] * model.V(k, k);
  }
  if (!any_member) return Matrix::Zero(nx, ny);

  // minimum-norm solution of L M = B
  Matrix Lt = M.completeOrthogonalDecomposition().solve(B.transpose());
  Matrix L = Lt.transpose();
  for (int k = 0; k < ny; ++k)
    if (!ever_active[k]) L.col(k).setZero();
  if (!L.allFinite())
    throw std::runtime_error("gain solve produced non-finite entries");
  return L;
}

double min_eig_rel(const Matrix& D, double scale) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (D + D.transpose()));
  return es.eigenvalues().minCoeff() / (1.0 + scale);
}

}  // namespace

CovarianceTuple covariance_step(const OutcomeChain& chain,
                                const AugmentedModel& model,
                                const GainSchedule& schedule,
                                const CovarianceTuple& P) {
  return step_from_sums(chain, model, schedule,
                        weighted_sums(chain, model, P, true));
}

CovarianceTuple lyapunov_step(const OutcomeChain& chain,
                              const AugmentedModel& model,
                              const GainSchedule& schedule,
                              const CovarianceTuple& Y) {
  const WeightedSums sums = weighted_sums(chain, model, Y, false);
  CovarianceTuple out = CovarianceTuple::zero(chain.size(), model.nx());
  for (int j = 0; j < chain.size(); ++j) {
    if (!chain.reachable(j)) continue;
    const GainPieces p = make_pieces(chain, model, schedule, j);
    Matrix Tj = p.F * sums.S[j] * p.F.transpose();
    out.P[j] = 0.5 * (Tj + Tj.transpose());
  }
  return out;
}

double lyapunov_spectral_radius(const OutcomeChain& chain,
                                const AugmentedModel& model,
                                const GainSchedule& schedule, int iters) {
  CovarianceTuple Y = CovarianceTuple::zero(chain.size(), model.nx());
  for (int j = 0; j < chain.size(); ++j)
    if (chain.reachable(j)) Y.P[j].setIdentity();
  double rho = 0.0;
  for (int it = 0; it < iters; ++it) {
    CovarianceTuple next = lyapunov_step(chain, model, schedule, Y);
    double norm = 0.0;
    for (const Matrix& m : next.P) norm += m.squaredNorm();
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    rho = norm;  // Y was unit-norm
    for (Matrix& m : next.P) m /= norm;
    Y = std::move(next);
  }
  return rho;
}

Matrix group_gain_update(const OutcomeChain& chain, const AugmentedModel& model,
                         const std::vector<int>& grouping,
                         const CovarianceTuple& P, int group_id) {
  return gain_from_sums(chain, model, grouping,
                        weighted_sums(chain, model, P, true), group_id);
}

SynthesisResult synthesize(const OutcomeChain& chain,
                           const AugmentedModel& model, Strategy strategy,
                           const SynthesisOptions& opts) {
  SynthesisResult res;
  res.schedule.strategy = strategy;
  res.schedule.grouping = group_assignment(chain, strategy);
  const int num_groups =
      1 + *std::max_element(res.schedule.grouping.begin(),
                            res.schedule.grouping.end());
  res.schedule.gains.assign(std::max(num_groups, 0),
                            Matrix::Zero(model.nx(), model.ny_bar));

  CovarianceTuple P =
      opts.init ? *opts.init : CovarianceTuple::zero(chain.size(), model.nx());
  const double ceiling = 1e9 * (1.0 + model.W.trace());
  double obj_prev = std::numeric_limits<double>::quiet_NaN();

  for (int it = 1; it <= opts.max_iter; ++it) {
    const WeightedSums sums = weighted_sums(chain, model, P, true);
    for (int g = 0; g < num_groups; ++g)
      res.schedule.gains[g] =
          gain_from_sums(chain, model, res.schedule.grouping, sums, g);
    CovarianceTuple next = step_from_sums(chain, model, res.schedule, sums);

    const double obj = next.weighted_trace(chain.pi);
    res.report.objective_trace.push_back(obj);
    res.report.iterations = it;
    if (!std::isfinite(obj) || obj > ceiling)
      throw std::runtime_error(
          "covariance iteration diverged: no stabilizing schedule found for " +
          to_string(strategy));

    const double delta = next.max_rel_distance(P);
    const bool obj_settled =
        std::isfinite(obj_prev) && std::abs(obj - obj_prev) < opts.tol * (1.0 + std::abs(obj));
    P = std::move(next);
    obj_prev = obj;
    if (delta < opts.tol && obj_settled) {
      res.report.converged = true;
      break;
    }
  }

  res.report.objective = obj_prev;
  const CovarianceTuple check = covariance_step(chain, model, res.schedule, P);
  double residual = 0.0;
  for (int j = 0; j < chain.size(); ++j)
    residual = std::max(residual, (check.P[j] - P.P[j]).norm());
  res.report.fixed_point_residual = residual;
  res.P = std::move(P);
  return res;
}

StabilityVerdict verify_stability(const OutcomeChain& chain,
                                  const AugmentedModel& model,
                                  const GainSchedule& schedule,
                                  const CovarianceTuple& P_bar) {
  StabilityVerdict v;
  const int nx = model.nx();

  const CovarianceTuple T = lyapunov_step(chain, model, schedule, P_bar);
  double margin = std::numeric_limits<double>::infinity();
  for (int j = 0; j < chain.size(); ++j) {
    if (!chain.reachable(j)) continue;
    margin = std::min(margin,
                      min_eig_rel(P_bar.P[j] - T.P[j], P_bar.P[j].norm()));
  }
  v.contraction_margin = margin;
  v.contraction_ok = margin >= -1e-8;

  // Comparison bound M = (1+c) P_bar with c scaling the initial excess.
  const CovarianceTuple P0 =
      CovarianceTuple::identity_scaled(chain.size(), nx, 100.0);
  double c = 0.0;
  for (int j = 0; j < chain.size(); ++j) {
    if (!chain.reachable(j)) continue;
    const Matrix ridge =
        P_bar.P[j] + 1e-10 * (1.0 + P_bar.P[j].trace()) * Matrix::Identity(nx, nx);
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(
        0.5 * (P0.P[j] - P_bar.P[j] + (P0.P[j] - P_bar.P[j]).transpose()), ridge);
    c = std::max(c, ges.eigenvalues().maxCoeff());
  }

  CovarianceTuple Pt = P0;
  double slack = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 50; ++t) {
    Pt = covariance_step(chain, model, schedule, Pt);
    for (int j = 0; j < chain.size(); ++j) {
      if (!chain.reachable(j)) continue;
      const Matrix M = (1.0 + c) * P_bar.P[j];
      slack = std::min(slack, min_eig_rel(M - Pt.P[j], M.norm()));
    }
  }
  v.bound_slack = slack;
  v.bounded_ok = slack >= -1e-6;
  v.pass = v.contraction_ok && v.bounded_ok;
  return v;
}

FixedPointVerdict verify_fixed_point(const OutcomeChain& chain,
                                     const AugmentedModel& model,
                                     const GainSchedule& schedule) {
  FixedPointVerdict v;
  const int nx = model.nx();

  auto iterate = [&](CovarianceTuple P, bool check_monotone) {
    bool monotone = true;
    for (int it = 0; it < 20000; ++it) {
      CovarianceTuple next = covariance_step(chain, model, schedule, P);
      if (check_monotone && it < 50) {
        for (int j = 0; j < chain.size(); ++j) {
          if (!chain.reachable(j)) continue;
          if (min_eig_rel(next.P[j] - P.P[j], P.P[j].norm()) < -1e-8)
            monotone = false;
        }
      }
      const double d = next.max_rel_distance(P);
      P = std::move(next);
      if (d < 1e-10) break;
    }
    return std::make_pair(P, monotone);
  };

  auto [P_zero, monotone] = iterate(CovarianceTuple::zero(chain.size(), nx), true);
  v.monotone_from_zero = monotone;

  std::mt19937_64 rng(20240901);
  std::normal_distribution<double> gauss(0.0, 1.0);
  CovarianceTuple P_pert = P_zero;
  for (int j = 0; j < chain.size(); ++j) {
    if (!chain.reachable(j)) continue;
    Matrix R(nx, nx);
    for (int a = 0; a < nx; ++a)
      for (int b = 0; b < nx; ++b) R(a, b) = gauss(rng);
    const Matrix psd = R * R.transpose();
    P_pert.P[j] += 0.1 * (1.0 + P_zero.P[j].norm()) * psd / (1.0 + psd.norm());
  }
  auto [P_from_pert, m1] = iterate(P_pert, false);
  auto [P_from_large,
        m2] = iterate(CovarianceTuple::identity_scaled(chain.size(), nx, 100.0),
                      false);
  (void)m1;
  (void)m2;

  auto rel_dist = [&](const CovarianceTuple& a, const CovarianceTuple& b) {
    double num = 0.0, den = 0.0;
    for (int j = 0; j < chain.size(); ++j) {
      num += (a.P[j] - b.P[j]).squaredNorm();
      den += b.P[j].squaredNorm();
    }
    return std::sqrt(num) / (1e-300 + std::sqrt(den));
  };
  v.max_pairwise_distance = std::max(rel_dist(P_from_pert, P_zero),
                                     rel_dist(P_from_large, P_zero));
  v.pass = v.monotone_from_zero && v.max_pairwise_distance <= 1e-6;
  return v;
}

void write_schedule(const GainSchedule& schedule, std::ostream& os) {
  os << "jumpest-schedule v1\n";
  os << "strategy " << to_string(schedule.strategy) << "\n";
  os << "states " << schedule.grouping.size() << "\n";
  os << "grouping";
  for (int g : schedule.grouping) os << " " << g;
  os << "\n";
  const int rows = schedule.gains.empty() ? 0 : (int)schedule.gains[0].rows();
  const int cols = schedule.gains.empty() ? 0 : (int)schedule.gains[0].cols();
  os << "gains " << schedule.gains.size() << " " << rows << " " << cols << "\n";
  char buf[64];
  for (const Matrix& L : schedule.gains) {
    for (int r = 0; r < L.rows(); ++r) {
      for (int ccol = 0; ccol < L.cols(); ++ccol) {
        std::snprintf(buf, sizeof(buf), "%.17g", L(r, ccol));
        os << buf << (ccol + 1 < L.cols() ? " " : "\n");
      }
    }
  }
}

GainSchedule read_schedule(std::istream& is) {
  std::string magic, version;
  is >> magic >> version;
  if (magic != "jumpest-schedule" || version != "v1")
    throw std::runtime_error("not a schedule file");
  GainSchedule sched;
  std::string key, strat;
  size_t count = 0;
  is >> key >> strat;
  if (key != "strategy") throw std::runtime_error("schedule file: expected strategy");
  sched.strategy = strategy_from_string(strat);
  is >> key >> count;
  if (key != "states") throw std::runtime_error("schedule file: expected states");
  sched.grouping.resize(count);
  is >> key;
  if (key != "grouping") throw std::runtime_error("schedule file: expected grouping");
  for (size_t i = 0; i < count; ++i) is >> sched.grouping[i];
  size_t n_gains = 0;
  int rows = 0, cols = 0;
  is >> key >> n_gains >> rows >> cols;
  if (key != "gains") throw std::runtime_error("schedule file: expected gains");
  sched.gains.assign(n_gains, Matrix::Zero(rows, cols));
  for (auto& L : sched.gains)
    for (int r = 0; r < rows; ++r)
      for (int ccol = 0; ccol < cols; ++ccol) is >> L(r, ccol);
  if (!is) throw std::runtime_error("schedule file: truncated");
  return sched;
}

}  // namespace jumpest
