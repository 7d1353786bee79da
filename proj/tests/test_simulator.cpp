#include <doctest.h>

#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>

#include "jumpest/simulator.hpp"

using namespace jumpest;

namespace {

PlantModel study_plant(double rho = 0.0) {
  PlantModel p;
  p.A = Matrix{{0.73, -0.42}, {0.42, 0.73}};
  p.A.array() += rho;
  p.Bu = Matrix{{-0.33}, {0.34}};
  p.Bw = Matrix{{0.01, 0.13}, {0.01, 0.08}};
  p.C = Matrix{{0.53, 0.39}, {0.72, 0.35}};
  p.W = Matrix{{0.26, -0.003}, {-0.003, 0.25}};
  p.sigma2 = Vector{{0.0086, 0.0079}};
  return p;
}

DelayDistribution study_network() {
  DelayDistribution d;
  d.beta = {{0.32, 0.22}, {0.22, 0.32}};
  return d;
}

GainSchedule zero_schedule(const OutcomeChain& chain) {
  GainSchedule s;
  s.grouping.assign(chain.size(), -1);
  return s;
}

Matrix lyapunov_solution(const Matrix& A, const Matrix& Q) {
  const int n = static_cast<int>(A.rows());
  Matrix K = Matrix::Identity(n * n, n * n) -
             Eigen::kroneckerProduct(A, A).eval();
  Vector q(n * n);
  for (int c = 0; c < n; ++c) q.segment(c * n, n) = Q.col(c);
  const Vector p = K.fullPivLu().solve(q);
  Matrix P(n, n);
  for (int c = 0; c < n; ++c) P.col(c) = p.segment(c * n, n);
  return P;
}

}  // namespace

TEST_CASE("certain immediate delivery pins the trace to one window state") {
  DelayDistribution dist;
  dist.beta = {{1.0, 0.0}};
  const NetworkTrace trace = sample_network(dist, 50, 7);
  for (int t = 0; t < 50; ++t) CHECK(trace.delays[0][t] == 0);
  const int full = state_index({0, 0}, 1, 1);
  for (int t = trace.warmup(); t < 50; ++t)
    CHECK(trace.theta_indices[t] == full);
  CHECK(trace.received_at(0, 10, 10));
  CHECK_FALSE(trace.received_at(0, 10, 11));
}

TEST_CASE("sampled delay frequencies match the distribution") {
  const auto dist = study_network();
  const int T = 200000;
  const NetworkTrace trace = sample_network(dist, T, 20240818);
  for (int s = 0; s < 2; ++s) {
    std::vector<double> freq(3, 0.0);  // delay 0, delay 1, lost
    for (int t = 0; t < T; ++t) {
      const int d = trace.delays[s][t];
      freq[d == kLost ? 2 : d] += 1.0 / T;
    }
    const std::vector<double> expect = {dist.beta[s][0], dist.beta[s][1],
                                        1.0 - dist.beta[s][0] - dist.beta[s][1]};
    for (int k = 0; k < 3; ++k) {
      const double se = std::sqrt(expect[k] * (1 - expect[k]) / T);
      CHECK(std::abs(freq[k] - expect[k]) <= 3.0 * se);
    }
  }
}

TEST_CASE("window states agree with the availability map everywhere") {
  const auto dist = study_network();
  const auto chain = build_outcome_chain(dist);
  const NetworkTrace trace = sample_network(dist, 2000, 99);
  for (int t = trace.warmup(); t < trace.horizon; ++t) {
    const int theta = trace.theta_indices[t];
    for (int s = 0; s < 2; ++s)
      for (int d = 0; d <= 1; ++d)
        CHECK(chain.avail[theta][s * 2 + d] ==
              (trace.received_at(s, t - d, t) ? 1 : 0));
  }
}

TEST_CASE("runs are reproducible from their seeds") {
  const auto dist = study_network();
  const auto chain = build_outcome_chain(dist);
  const AugmentedModel model = build_augmented(study_plant(0.0), 1);
  const SynthesisResult res = synthesize(chain, model, Strategy::S3);
  const NetworkTrace trace = sample_network(dist, 300, 5);

  SimOptions opts;
  opts.noise_seed = 42;
  const RunResult a = run_observer(model, res.schedule, chain, trace, opts);
  const RunResult b = run_observer(model, res.schedule, chain, trace, opts);
  REQUIRE(a.err.size() == b.err.size());
  for (size_t t = 0; t < a.err.size(); ++t) CHECK(a.err[t] == b.err[t]);

  opts.noise_seed = 43;
  const RunResult c = run_observer(model, res.schedule, chain, trace, opts);
  double diff = 0.0;
  for (size_t t = 0; t < a.err.size(); ++t) diff += (a.err[t] - c.err[t]).norm();
  CHECK(diff > 0.0);
}

TEST_CASE("noise-free exact start keeps the open-loop error at zero") {
  PlantModel p = study_plant(0.0);
  p.W.setZero();
  const AugmentedModel model = build_augmented(p, 1);
  const auto dist = study_network();
  const auto chain = build_outcome_chain(dist);
  const NetworkTrace trace = sample_network(dist, 200, 3);

  SimOptions opts;
  opts.random_input = true;
  opts.x0_exact = Vector{{0.4, -0.7}};
  opts.xhat0 = Vector::Zero(model.nx());
  opts.xhat0.head(2) = opts.x0_exact;
  const RunResult run =
      run_observer(model, zero_schedule(chain), chain, trace, opts);
  for (const Vector& e : run.err) CHECK(e.norm() < 1e-12);
}

TEST_CASE("open-loop error follows the plant power with no process noise") {
  PlantModel p = study_plant(0.0);
  p.W.setZero();
  const AugmentedModel model = build_augmented(p, 1);
  const auto dist = study_network();
  const auto chain = build_outcome_chain(dist);
  const NetworkTrace trace = sample_network(dist, 60, 3);

  SimOptions opts;
  opts.random_input = true;  // must cancel out of the error
  opts.x0_exact = Vector{{1.0, 0.5}};
  const RunResult run =
      run_observer(model, zero_schedule(chain), chain, trace, opts);
  Vector x = opts.x0_exact;
  for (int t = 0; t < 60; ++t) {
    CHECK((run.err[t].head(2) - x).norm() < 1e-10 * (1.0 + x.norm()));
    x = p.A * x;
  }
}

TEST_CASE("input excitation never leaks into the estimation error") {
  const auto dist = study_network();
  const auto chain = build_outcome_chain(dist);
  const AugmentedModel model = build_augmented(study_plant(0.25), 1);
  const SynthesisResult res = synthesize(chain, model, Strategy::S5);
  const NetworkTrace trace = sample_network(dist, 250, 11);

  SimOptions quiet, driven;
  quiet.noise_seed = driven.noise_seed = 8;
  driven.random_input = true;
  const RunResult a = run_observer(model, res.schedule, chain, trace, quiet);
  const RunResult b = run_observer(model, res.schedule, chain, trace, driven);
  for (size_t t = 0; t < a.err.size(); ++t)
    CHECK((a.err[t] - b.err[t]).norm() < 1e-9 * (1.0 + a.err[t].norm()));
}

TEST_CASE("error recursion reproduces the full state-space simulation") {
  const auto dist = study_network();
  const auto chain = build_outcome_chain(dist);
  const AugmentedModel model = build_augmented(study_plant(0.0), 1);
  const SynthesisResult res = synthesize(chain, model, Strategy::S4);
  const NetworkTrace trace = sample_network(dist, 400, 21);

  SimOptions opts;
  opts.noise_seed = 77;
  opts.x0_stddev = 2.0;
  const RunResult full = run_observer(model, res.schedule, chain, trace, opts);

  JumpErrorSimulator sim(model, res.schedule, chain);
  sim.run(trace, 77, 2.0, [&](int t, int theta, const Vector& err) {
    CHECK(theta == full.theta_indices[t]);
    CHECK((err - full.err[t]).norm() < 1e-9 * (1.0 + err.norm()));
  });
}

TEST_CASE("step flop counts reflect the active measurement set") {
  const AugmentedModel model = build_augmented(study_plant(0.0), 1);
  const long long predict_only = jump_step_flops(model, 0);
  CHECK(predict_only > 0);
  for (int a = 1; a <= model.ny_bar; ++a)
    CHECK(jump_step_flops(model, a) > jump_step_flops(model, a - 1));

  const auto dist = study_network();
  const auto chain = build_outcome_chain(dist);
  const SynthesisResult res = synthesize(chain, model, Strategy::S2);
  const NetworkTrace trace = sample_network(dist, 120, 13);
  const RunResult run = run_observer(model, res.schedule, chain, trace, {});
  for (int t = 1; t < trace.horizon; ++t) {
    const int theta = run.theta_indices[t];
    const int active = res.schedule.has_gain(theta)
                           ? chain.avail[theta].sum()
                           : 0;
    CHECK(run.flops_per_step[t] == jump_step_flops(model, active));
  }
}

TEST_CASE("conditional accumulator decomposes the overall second moment") {
  const auto dist = study_network();
  const auto chain = build_outcome_chain(dist);
  const AugmentedModel model = build_augmented(study_plant(0.0), 1);
  const SynthesisResult res = synthesize(chain, model, Strategy::S1);

  std::vector<RunResult> runs;
  for (int r = 0; r < 4; ++r) {
    const NetworkTrace trace = sample_network(dist, 150, 100 + r);
    SimOptions opts;
    opts.noise_seed = 200 + r;
    runs.push_back(run_observer(model, res.schedule, chain, trace, opts));
  }
  const EmpiricalCovariance acc = empirical_covariance(runs, chain, 20);

  Matrix mix = Matrix::Zero(model.nx(), model.nx());
  const Vector pi_hat = acc.pi_hat();
  for (int j = 0; j < chain.size(); ++j) mix += pi_hat[j] * acc.state_cov(j);
  CHECK((mix - acc.overall()).norm() < 1e-10 * (1.0 + mix.norm()));
  CHECK(pi_hat.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(acc.total == 4 * (150 - 20));

  std::vector<RunResult> one(runs.begin(), runs.begin() + 1);
  CHECK_THROWS_AS(empirical_covariance(one, chain, 20), std::invalid_argument);
}

TEST_CASE("long open-loop statistics approach the stationary solution") {
  const auto dist = study_network();
  const auto chain = build_outcome_chain(dist);
  const AugmentedModel model = build_augmented(study_plant(0.0), 1);
  const GainSchedule zero = zero_schedule(chain);
  const Matrix expect = lyapunov_solution(model.Abar, model.process_noise());

  JumpErrorSimulator sim(model, zero, chain);
  EmpiricalCovariance acc;
  acc.init(chain.size(), model.nx());
  const int burn_in = 100;
  for (int r = 0; r < 400; ++r) {
    const NetworkTrace trace = sample_network(dist, 400, 5000 + r);
    sim.run(trace, 9000 + r, 1.0, [&](int t, int theta, const Vector& err) {
      if (t >= burn_in) acc.add(theta, err);
    });
  }
  CHECK((acc.overall() - expect).norm() < 0.05 * expect.norm());
  // with zero gains the error is independent of the window state
  for (int j = 0; j < chain.size(); ++j) {
    if (acc.count[j] < 4000) continue;
    CHECK((acc.state_cov(j) - expect).norm() < 0.15 * expect.norm());
  }
}
