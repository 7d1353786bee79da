#include "jumpest/outcome_chain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace jumpest {

double DelayDistribution::tail(int s, int d) const {
  if (d < 0) return 1.0;
  double acc = 1.0;
  const int dd = std::min<int>(d, static_cast<int>(beta[s].size()) - 1);
  for (int k = 0; k <= dd; ++k) acc -= beta[s][k];
  return std::max(acc, 0.0);
}

std::vector<std::string> DelayDistribution::validate() const {
  std::vector<std::string> problems;
  if (beta.empty()) problems.push_back("no sensors in delay distribution");
  for (int s = 0; s < n_sensors(); ++s) {
    if (static_cast<int>(beta[s].size()) != d_max() + 1) {
      std::ostringstream os;
      os << "beta length mismatch for sensor " << s;
      problems.push_back(os.str());
      continue;
    }
    double sum = 0.0;
    for (double b : beta[s]) {
      if (b < 0.0 || b > 1.0) {
        std::ostringstream os;
        os << "beta out of [0,1] for sensor " << s;
        problems.push_back(os.str());
        break;
      }
      sum += b;
    }
    if (sum > 1.0 + 1e-12) {
      std::ostringstream os;
      os << "beta sums above 1 for sensor " << s;
      problems.push_back(os.str());
    }
  }
  return problems;
}

std::vector<int> OutcomeState::theta_bits(int n_y, int d_max) const {
  std::vector<int> bits;
  bits.reserve(n_y * (d_max + 1) * (d_max + 2) / 2);
  for (int s = 0; s < n_y; ++s)
    for (int age = 0; age <= d_max; ++age) {
      const int o = offset(s, age, d_max);
      for (int j = 0; j <= age; ++j) bits.push_back(o == j ? 1 : 0);
    }
  return bits;
}

namespace {

// Place value of the (sensor, age) digit: ages are minor within a sensor,
// higher ages more significant, radix (age+2), symbol = offset+1 (0 for NR).
long long sensor_weight(int d_max) {
  long long w = 1;
  for (int a = 0; a <= d_max; ++a) w *= (a + 2);
  return w;  // (d_max+2)!
}

long long age_weight(int age) {
  long long w = 1;
  for (int a = 0; a < age; ++a) w *= (a + 2);
  return w;  // (age+1)!
}

}  // namespace

long long outcome_state_count(int n_y, int d_max, long long cap) {
  if (n_y < 1 || d_max < 0) throw std::invalid_argument("need n_y >= 1, d_max >= 0");
  long long count = 1;
  const long long per_sensor = sensor_weight(d_max);
  for (int s = 0; s < n_y; ++s) {
    if (count > cap / per_sensor)
      throw std::overflow_error("outcome state count exceeds cap");
    count *= per_sensor;
  }
  return count;
}

int state_index(const std::vector<int>& offsets, int n_y, int d_max) {
  if (static_cast<int>(offsets.size()) != n_y * (d_max + 1))
    throw std::invalid_argument("window has wrong number of (sensor, age) slots");
  long long idx = 0;
  const long long sw = sensor_weight(d_max);
  for (int s = 0; s < n_y; ++s) {
    long long sidx = 0;
    for (int age = 0; age <= d_max; ++age) {
      const int o = offsets[s * (d_max + 1) + age];
      if (o != kNotReceived && (o < 0 || o > age))
        throw std::invalid_argument("reception offset violates the window constraint");
      sidx += static_cast<long long>(o + 1) * age_weight(age);
    }
    idx = idx * sw + sidx;
  }
  return static_cast<int>(idx);
}

std::vector<OutcomeState> enumerate_states(int n_y, int d_max, long long cap) {
  const long long count = outcome_state_count(n_y, d_max, cap);
  std::vector<OutcomeState> states(count);
  const int slots = n_y * (d_max + 1);
  std::vector<int> offsets(slots, kNotReceived);
  for (long long i = 0; i < count; ++i) {
    // decode the mixed-radix index
    long long rem = i;
    const long long sw = sensor_weight(d_max);
    for (int s = n_y - 1; s >= 0; --s) {
      long long sidx = rem % sw;
      rem /= sw;
      for (int age = d_max; age >= 0; --age) {
        const long long w = age_weight(age);
        offsets[s * (d_max + 1) + age] = static_cast<int>(sidx / w) - 1;
        sidx %= w;
      }
    }
    states[i].offsets = offsets;
    states[i].index = static_cast<int>(i);
  }
  return states;
}

bool transition_feasible(const OutcomeState& from, const OutcomeState& to,
                         int n_y, int d_max) {
  for (int s = 0; s < n_y; ++s)
    for (int age = 1; age <= d_max; ++age) {
      const int prev = from.offset(s, age - 1, d_max);
      const int next = to.offset(s, age, d_max);
      if (prev != kNotReceived) {
        if (next != prev) return false;
      } else {
        if (next != kNotReceived && next != age) return false;
      }
    }
  return true;
}

Matrix transition_matrix(const std::vector<OutcomeState>& states,
                         const DelayDistribution& dist, int n_y, int d_max) {
  const auto problems = dist.validate();
  if (!problems.empty())
    throw std::invalid_argument("invalid delay distribution: " + problems.front());
  if (dist.n_sensors() != n_y || dist.d_max() != d_max)
    throw std::invalid_argument("delay distribution does not match the chain shape");

  const int r1 = static_cast<int>(states.size());
  Matrix Lambda = Matrix::Zero(r1, r1);
  const int slots = n_y * (d_max + 1);

  struct Branch {
    std::vector<int> offsets;
    double prob;
  };

  for (int i = 0; i < r1; ++i) {
    std::vector<Branch> partial{{std::vector<int>(), 1.0}};
    partial[0].offsets.reserve(slots);
    for (int s = 0; s < n_y; ++s) {
      for (int age = 0; age <= d_max; ++age) {
        std::vector<Branch> next;
        next.reserve(partial.size() * 2);
        for (const Branch& b : partial) {
          auto push = [&](int offset, double p) {
            if (p <= 0.0) return;
            Branch nb = b;
            nb.offsets.push_back(offset);
            nb.prob *= p;
            next.push_back(std::move(nb));
          };
          if (age == 0) {
            push(0, dist.beta[s][0]);
            push(kNotReceived, dist.tail(s, 0));
          } else {
            const int prev = states[i].offset(s, age - 1, d_max);
            if (prev != kNotReceived) {
              push(prev, 1.0);
            } else {
              const double tail_prev = dist.tail(s, age - 1);
              if (tail_prev <= 0.0) {
                // conditioning event has zero probability; deem the sample lost
                push(kNotReceived, 1.0);
              } else {
                push(age, dist.beta[s][age] / tail_prev);
                push(kNotReceived, dist.tail(s, age) / tail_prev);
              }
            }
          }
        }
        partial = std::move(next);
      }
    }
    for (const Branch& b : partial)
      Lambda(i, state_index(b.offsets, n_y, d_max)) += b.prob;
  }
  return Lambda;
}

double transition_prob_ratio(const OutcomeState& from, const OutcomeState& to,
                             const DelayDistribution& dist, int n_y, int d_max) {
  if (!transition_feasible(from, to, n_y, d_max)) return 0.0;
  double prob = 1.0;
  for (int s = 0; s < n_y; ++s) {
    double num = 1.0;
    for (int age = 0; age <= d_max; ++age) {
      const int o = to.offset(s, age, d_max);
      if (o == kNotReceived)
        num *= dist.tail(s, age);
      else if (o == age)  // received at the new instant
        num *= dist.beta[s][age];
    }
    double den = 1.0;
    for (int age = 0; age < d_max; ++age)
      if (from.offset(s, age, d_max) == kNotReceived) den *= dist.tail(s, age);
    if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
    prob *= num / den;
  }
  return prob;
}

Vector stationary(const Matrix& Lambda, int max_power_iters) {
  const int m = static_cast<int>(Lambda.rows());
  if (Lambda.cols() != m) throw std::invalid_argument("Lambda must be square");

  auto residual = [&](const Vector& p) {
    return (Lambda.transpose() * p - p).cwiseAbs().maxCoeff();
  };
  auto clean = [&](Vector p) {
    for (int i = 0; i < m; ++i) p[i] = std::max(p[i], 0.0);
    const double sum = p.sum();
    if (sum > 0.0) p /= sum;
    return p;
  };

  // null-space solve of [Lambda' - I; 1'] pi = [0; 1]
  Matrix M(m + 1, m);
  M.topRows(m) = Lambda.transpose() - Matrix::Identity(m, m);
  M.bottomRows(1).setOnes();
  Vector b = Vector::Zero(m + 1);
  b[m] = 1.0;
  Vector pi = clean(M.colPivHouseholderQr().solve(b));
  if (residual(pi) <= 1e-12) return pi;

  // power iteration fallback
  pi = Vector::Constant(m, 1.0 / m);
  for (int it = 0; it < max_power_iters; ++it) {
    pi = clean(Lambda.transpose() * pi);
    if (residual(pi) <= 1e-12) return pi;
  }
  throw std::runtime_error("stationary distribution did not converge");
}

void availability_map(const std::vector<OutcomeState>& states, int n_y,
                      int d_max, std::vector<Eigen::VectorXi>& avail,
                      std::vector<Eigen::VectorXi>& Xi,
                      std::vector<int>& pattern_of_state) {
  const int ny_bar = n_y * (d_max + 1);
  avail.assign(states.size(), Eigen::VectorXi());
  pattern_of_state.assign(states.size(), -1);
  Xi.clear();
  Xi.push_back(Eigen::VectorXi::Zero(ny_bar));  // eta_0

  for (size_t i = 0; i < states.size(); ++i) {
    Eigen::VectorXi a = Eigen::VectorXi::Zero(ny_bar);
    for (int s = 0; s < n_y; ++s)
      for (int d = 0; d <= d_max; ++d)
        // slot is active iff the age-d sample arrived exactly now
        if (states[i].offset(s, d, d_max) == d) a[s * (d_max + 1) + d] = 1;
    int found = -1;
    for (size_t k = 0; k < Xi.size(); ++k)
      if (Xi[k] == a) {
        found = static_cast<int>(k);
        break;
      }
    if (found < 0) {
      found = static_cast<int>(Xi.size());
      Xi.push_back(a);
    }
    avail[i] = a;
    pattern_of_state[i] = found;
  }
}

OutcomeChain build_outcome_chain(const DelayDistribution& dist, long long cap) {
  OutcomeChain chain;
  chain.n_y = dist.n_sensors();
  chain.d_max = dist.d_max();
  chain.states = enumerate_states(chain.n_y, chain.d_max, cap);
  chain.Lambda = transition_matrix(chain.states, dist, chain.n_y, chain.d_max);
  chain.pi = stationary(chain.Lambda);
  availability_map(chain.states, chain.n_y, chain.d_max, chain.avail, chain.Xi,
                   chain.pattern_of_state);
  return chain;
}

void dump_chain(const OutcomeChain& chain, std::ostream& os) {
  os << "# states\nindex,theta_bits,availability\n";
  for (const auto& st : chain.states) {
    os << st.index << ",";
    for (int b : st.theta_bits(chain.n_y, chain.d_max)) os << b;
    os << ",";
    for (int k = 0; k < chain.avail[st.index].size(); ++k)
      os << chain.avail[st.index][k];
    os << "\n";
  }
  os << "# Lambda\n";
  for (int i = 0; i < chain.size(); ++i) {
    for (int j = 0; j < chain.size(); ++j)
      os << chain.Lambda(i, j) << (j + 1 < chain.size() ? "," : "\n");
  }
  os << "# pi\n";
  for (int i = 0; i < chain.size(); ++i)
    os << chain.pi[i] << (i + 1 < chain.size() ? "," : "\n");
}

}  // namespace jumpest
