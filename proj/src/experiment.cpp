#include "jumpest/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace jumpest {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("config error at " + path + ": " + what);
}

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& path) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) fail(path + "." + it.key(), "unknown key");
}

Matrix parse_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    fail(path, "expected a 2-D numeric array");
  const size_t rows = j.size();
  const size_t cols = j[0].size();
  Matrix M(rows, cols);
  for (size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      fail(path, "ragged rows in matrix");
    for (size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) fail(path, "non-numeric matrix entry");
      M(r, c) = j[r][c].get<double>();
    }
  }
  return M;
}

Vector parse_vector(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected a numeric array");
  Vector v(j.size());
  for (size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) fail(path, "non-numeric entry");
    v[k] = j[k].get<double>();
  }
  return v;
}

json matrix_to_json(const Matrix& M) {
  json rows = json::array();
  for (int r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("config parse error: ") + e.what());
  }
  reject_unknown(j,
                 {"plant", "d_max", "beta", "strategies", "rho_grid", "runs",
                  "horizon", "burn_in", "seed", "tol", "max_iter", "output_dir"},
                 "$");

  ExperimentConfig cfg;
  if (!j.contains("plant")) fail("$.plant", "missing");
  const json& p = j["plant"];
  reject_unknown(p, {"A", "Bu", "Bw", "C", "W", "sigma2"}, "$.plant");
  for (const char* key : {"A", "Bu", "Bw", "C", "W", "sigma2"})
    if (!p.contains(key)) fail(std::string("$.plant.") + key, "missing");
  cfg.plant.A = parse_matrix(p["A"], "$.plant.A");
  cfg.plant.Bu = parse_matrix(p["Bu"], "$.plant.Bu");
  cfg.plant.Bw = parse_matrix(p["Bw"], "$.plant.Bw");
  cfg.plant.C = parse_matrix(p["C"], "$.plant.C");
  cfg.plant.W = parse_matrix(p["W"], "$.plant.W");
  cfg.plant.sigma2 = parse_vector(p["sigma2"], "$.plant.sigma2");

  if (!j.contains("d_max") || !j["d_max"].is_number_integer())
    fail("$.d_max", "missing or not an integer");
  cfg.d_max = j["d_max"].get<int>();
  if (cfg.d_max < 0) fail("$.d_max", "must be nonnegative");

  if (!j.contains("beta") || !j["beta"].is_array())
    fail("$.beta", "missing or not an array");
  const int n_y = cfg.plant.n_y();
  for (int s = 0; s < n_y; ++s) {
    if (s >= static_cast<int>(j["beta"].size())) {
      std::ostringstream os;
      os << "missing beta vector for sensor " << s;
      fail("$.beta", os.str());
    }
    std::ostringstream path;
    path << "$.beta[" << s << "]";
    const Vector b = parse_vector(j["beta"][s], path.str());
    if (b.size() != cfg.d_max + 1)
      fail(path.str(), "expected d_max+1 delay probabilities");
    cfg.dist.beta.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  }
  if (static_cast<int>(j["beta"].size()) > n_y)
    fail("$.beta", "more beta vectors than sensors");
  const auto dist_problems = cfg.dist.validate();
  if (!dist_problems.empty()) fail("$.beta", dist_problems.front());

  cfg.strategies = {Strategy::S1, Strategy::S2, Strategy::S3, Strategy::S4,
                    Strategy::S5};
  if (j.contains("strategies")) {
    cfg.strategies.clear();
    for (size_t k = 0; k < j["strategies"].size(); ++k) {
      if (!j["strategies"][k].is_string()) fail("$.strategies", "expected strings");
      cfg.strategies.push_back(
          strategy_from_string(j["strategies"][k].get<std::string>()));
    }
  }
  if (j.contains("rho_grid")) {
    const Vector g = parse_vector(j["rho_grid"], "$.rho_grid");
    cfg.rho_grid.assign(g.data(), g.data() + g.size());
  } else {
    cfg.rho_grid = {0.0};
  }
  for (double rho : cfg.rho_grid)
    if (rho < 0.0 || rho > 0.5) fail("$.rho_grid", "rho outside [0, 0.5]");

  auto get_int = [&](const char* key, int fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number_integer()) fail(std::string("$.") + key, "not an integer");
    return j[key].get<int>();
  };
  cfg.runs = get_int("runs", cfg.runs);
  cfg.horizon = get_int("horizon", cfg.horizon);
  cfg.burn_in = get_int("burn_in", cfg.burn_in);
  cfg.max_iter = get_int("max_iter", cfg.max_iter);
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("tol")) {
    if (!j["tol"].is_number()) fail("$.tol", "not a number");
    cfg.tol = j["tol"].get<double>();
  }
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) fail("$.output_dir", "not a string");
    cfg.output_dir = j["output_dir"].get<std::string>();
  }

  const PlantDiagnostics diag = validate_plant(cfg.plant);
  if (!diag.ok()) fail("$.plant", diag.violations.front());
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string emit_config(const ExperimentConfig& cfg) {
  json j;
  j["plant"]["A"] = matrix_to_json(cfg.plant.A);
  j["plant"]["Bu"] = matrix_to_json(cfg.plant.Bu);
  j["plant"]["Bw"] = matrix_to_json(cfg.plant.Bw);
  j["plant"]["C"] = matrix_to_json(cfg.plant.C);
  j["plant"]["W"] = matrix_to_json(cfg.plant.W);
  j["plant"]["sigma2"] = json::array();
  for (int k = 0; k < cfg.plant.sigma2.size(); ++k)
    j["plant"]["sigma2"].push_back(cfg.plant.sigma2[k]);
  j["d_max"] = cfg.d_max;
  j["beta"] = cfg.dist.beta;
  j["strategies"] = json::array();
  for (Strategy s : cfg.strategies) j["strategies"].push_back(to_string(s));
  j["rho_grid"] = cfg.rho_grid;
  j["runs"] = cfg.runs;
  j["horizon"] = cfg.horizon;
  j["burn_in"] = cfg.burn_in;
  j["seed"] = cfg.seed;
  j["tol"] = cfg.tol;
  j["max_iter"] = cfg.max_iter;
  j["output_dir"] = cfg.output_dir;
  return j.dump(2);
}

PlantModel apply_rho(const PlantModel& plant, double rho) {
  PlantModel out = plant;
  out.A.array() += rho;
  return out;
}

double epsilon_percent(double trace_S, double trace_Kal) {
  if (!(trace_Kal > 0.0))
    throw std::invalid_argument("epsilon needs a positive baseline trace");
  return (trace_S - trace_Kal) / trace_Kal * 100.0;
}

namespace {

struct RunStats {
  std::vector<double> jump;
  std::vector<double> kal;
};

// Matched per-run time-averaged current-state error traces.
RunStats paired_runs(const AugmentedModel& model, const OutcomeChain& chain,
                     const GainSchedule& schedule,
                     const DelayDistribution& dist, int runs, int horizon,
                     int burn_in, std::uint64_t seed) {
  RunStats stats;
  stats.jump.reserve(runs);
  stats.kal.reserve(runs);
  const int n = model.n;
  const int skip = std::max(burn_in, model.d_max + 1);

  JumpErrorSimulator jump_sim(model, schedule, chain);
  KalmanErrorSimulator kal_sim(model, chain);
  for (int run = 0; run < runs; ++run) {
    const NetworkTrace trace =
        sample_network(dist, horizon, seed + 1000003ULL * run);
    const std::uint64_t noise_seed = seed ^ (0x9E3779B97F4A7C15ULL + run);
    double jump_acc = 0.0, kal_acc = 0.0;
    long long steps = 0;
    jump_sim.run(trace, noise_seed, 1.0, [&](int t, int, const Vector& err) {
      if (t < skip) return;
      jump_acc += err.head(n).squaredNorm();
      ++steps;
    });
    kal_sim.run(trace, noise_seed, 1.0, [&](int t, int, const Vector& err) {
      if (t < skip) return;
      kal_acc += err.head(n).squaredNorm();
    });
    stats.jump.push_back(jump_acc / steps);
    stats.kal.push_back(kal_acc / steps);
  }
  return stats;
}

double mean_of(const std::vector<double>& xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / xs.size();
}

double cov_of(const std::vector<double>& xs, const std::vector<double>& ys,
              double mx, double my) {
  double acc = 0.0;
  for (size_t k = 0; k < xs.size(); ++k) acc += (xs[k] - mx) * (ys[k] - my);
  return acc / (xs.size() - 1);
}

}  // namespace

MatchedEvaluation evaluate_matched(const AugmentedModel& model,
                                   const OutcomeChain& chain,
                                   const GainSchedule& schedule,
                                   const DelayDistribution& dist, int runs,
                                   int horizon, int burn_in,
                                   std::uint64_t seed) {
  if (runs < 2) throw std::invalid_argument("need at least two matched runs");
  const RunStats stats =
      paired_runs(model, chain, schedule, dist, runs, horizon, burn_in, seed);

  MatchedEvaluation ev;
  ev.runs = runs;
  ev.jump_trace_mean = mean_of(stats.jump);
  ev.kal_trace_mean = mean_of(stats.kal);
  const double var_j =
      cov_of(stats.jump, stats.jump, ev.jump_trace_mean, ev.jump_trace_mean);
  const double var_k =
      cov_of(stats.kal, stats.kal, ev.kal_trace_mean, ev.kal_trace_mean);
  const double cov_jk =
      cov_of(stats.jump, stats.kal, ev.jump_trace_mean, ev.kal_trace_mean);
  ev.jump_trace_se = std::sqrt(var_j / runs);
  ev.kal_trace_se = std::sqrt(var_k / runs);
  ev.diff_mean = ev.jump_trace_mean - ev.kal_trace_mean;
  ev.diff_se = std::sqrt(std::max(var_j + var_k - 2.0 * cov_jk, 0.0) / runs);

  const double K = ev.kal_trace_mean;
  const double D = ev.diff_mean;
  ev.epsilon = epsilon_percent(ev.jump_trace_mean, K);
  // delta method on (D, K), with the per-run pairing carried through
  const double var_d = std::max(var_j + var_k - 2.0 * cov_jk, 0.0);
  const double cov_dk = cov_jk - var_k;
  const double var_eps = (var_d / (K * K) + D * D * var_k / (K * K * K * K) -
                          2.0 * D * cov_dk / (K * K * K)) /
                         runs;
  ev.epsilon_se = 100.0 * std::sqrt(std::max(var_eps, 0.0));
  return ev;
}

std::string SweepReport::csv() const {
  std::ostringstream os;
  os << "rho,strategy,num_gains,objective,epsilon,epsilon_se,flops_jump,"
        "flops_kalman,stability_ok,fixed_point_ok,status\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
  };
  for (const SweepCell& c : cells) {
    os << num(c.rho) << "," << to_string(c.strategy) << "," << c.num_gains
       << "," << num(c.objective) << "," << num(c.eval.epsilon) << ","
       << num(c.eval.epsilon_se) << "," << c.flops_jump << ","
       << c.flops_kalman << "," << (c.stability_ok ? 1 : 0) << ","
       << (c.fixed_point_ok ? 1 : 0) << "," << c.status << "\n";
  }
  return os.str();
}

std::string SweepReport::summary() const {
  std::ostringstream os;
  for (const SweepCell& c : cells) {
    os << "rho=" << c.rho << " " << to_string(c.strategy)
       << ": gains=" << c.num_gains;
    if (c.status == "ok") {
      os << " objective=" << c.objective << " epsilon=" << c.eval.epsilon
         << "% (se " << c.eval.epsilon_se << ") flops " << c.flops_jump << "/"
         << c.flops_kalman
         << " stability=" << (c.stability_ok ? "pass" : "FAIL")
         << " fixed-point=" << (c.fixed_point_ok ? "pass" : "FAIL");
    } else {
      os << " FAILED: " << c.status;
    }
    os << "\n";
  }
  return os.str();
}

SweepReport run_experiment(const ExperimentConfig& cfg) {
  SweepReport report;
  const OutcomeChain chain = build_outcome_chain(cfg.dist);

  for (double rho : cfg.rho_grid) {
    const PlantModel plant = apply_rho(cfg.plant, rho);
    const AugmentedModel model = build_augmented(plant, cfg.d_max);
    long long worst_active = 0;
    for (const auto& pattern : chain.Xi)
      worst_active = std::max<long long>(worst_active, pattern.sum());

    for (Strategy strategy : cfg.strategies) {
      SweepCell cell;
      cell.rho = rho;
      cell.strategy = strategy;
      cell.flops_jump = jump_step_flops(model, static_cast<int>(worst_active));
      cell.flops_kalman =
          kalman_step_flops(model, static_cast<int>(worst_active));
      try {
        SynthesisOptions opts;
        opts.tol = cfg.tol;
        opts.max_iter = cfg.max_iter;
        SynthesisResult res = synthesize(chain, model, strategy, opts);
        cell.num_gains = res.schedule.num_gains();
        cell.objective = res.report.objective;
        cell.stability_ok =
            verify_stability(chain, model, res.schedule, res.P).pass;
        cell.fixed_point_ok =
            verify_fixed_point(chain, model, res.schedule).pass;
        cell.eval = evaluate_matched(model, chain, res.schedule, cfg.dist,
                                     cfg.runs, cfg.horizon, cfg.burn_in,
                                     cfg.seed);
      } catch (const std::exception& e) {
        cell.status = e.what();
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

}  // namespace jumpest
