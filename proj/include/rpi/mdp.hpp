#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "rpi/rng.hpp"

namespace rpi {

/// Finite MDP with dense transition tensor P[s][a][s'] and reward table
/// r[s][a]. State-action pairs are indexed row-major as s * num_actions + a
/// throughout the library.
struct TabularMDP {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> transition;  // S*A*S, P[(s*A + a)*S + s']
  std::vector<double> reward;      // S*A
  double discount = 0.0;

  TabularMDP() = default;
  TabularMDP(int S, int A, std::vector<double> P, std::vector<double> r,
             double gamma)
      : num_states(S),
        num_actions(A),
        transition(std::move(P)),
        reward(std::move(r)),
        discount(gamma) {
    validate();
  }

  double p(int s, int a, int s2) const {
    return transition[static_cast<std::size_t>(s * num_actions + a) * num_states + s2];
  }
  double r(int s, int a) const { return reward[s * num_actions + a]; }
  int sa_size() const { return num_states * num_actions; }

  /// Checks the probability-row and discount invariants. Rows must sum to 1
  /// within 1e-12 with nonnegative entries; gamma must lie in [0, 1).
  void validate() const {
    if (num_states <= 0 || num_actions <= 0)
      throw std::invalid_argument("TabularMDP: num_states and num_actions must be positive");
    if (!(discount >= 0.0 && discount < 1.0))
      throw std::invalid_argument("TabularMDP: discount must be in [0, 1)");
    if (transition.size() != static_cast<std::size_t>(num_states) * num_actions * num_states)
      throw std::invalid_argument("TabularMDP: transition tensor has wrong size");
    if (reward.size() != static_cast<std::size_t>(num_states) * num_actions)
      throw std::invalid_argument("TabularMDP: reward table has wrong size");
    for (int s = 0; s < num_states; ++s) {
      for (int a = 0; a < num_actions; ++a) {
        double row_sum = 0.0;
        for (int s2 = 0; s2 < num_states; ++s2) {
          double v = p(s, a, s2);
          if (v < 0.0)
            throw std::invalid_argument("TabularMDP: negative transition probability at (" +
                                        std::to_string(s) + "," + std::to_string(a) + ")");
          row_sum += v;
        }
        if (std::abs(row_sum - 1.0) > 1e-12)
          throw std::invalid_argument("TabularMDP: transition row (" + std::to_string(s) +
                                      "," + std::to_string(a) + ") sums to " +
                                      std::to_string(row_sum));
      }
    }
    for (double v : reward)
      if (!std::isfinite(v))
        throw std::invalid_argument("TabularMDP: non-finite reward");
  }
};

/// Dense action-value table of shape S x A.
struct QFunction {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> values;  // S*A, row-major

  QFunction() = default;
  QFunction(int S, int A, double fill = 0.0)
      : num_states(S), num_actions(A),
        values(static_cast<std::size_t>(S) * A, fill) {}
  QFunction(int S, int A, std::vector<double> v)
      : num_states(S), num_actions(A), values(std::move(v)) {
    if (values.size() != static_cast<std::size_t>(S) * A)
      throw std::invalid_argument("QFunction: value table has wrong size");
  }

  double& at(int s, int a) { return values[s * num_actions + a]; }
  double at(int s, int a) const { return values[s * num_actions + a]; }

  bool finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void require_shape(const TabularMDP& mdp, const char* who) const {
    if (num_states != mdp.num_states || num_actions != mdp.num_actions)
      throw std::invalid_argument(std::string(who) + ": QFunction shape mismatch");
  }
};

inline double max_abs_diff(const QFunction& a, const QFunction& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

/// Stationary policy, deterministic (one action per state) or stochastic
/// (per-state distribution over actions).
struct Policy {
  enum class Kind { Deterministic, Stochastic };

  Kind kind = Kind::Deterministic;
  int num_states = 0;
  int num_actions = 0;
  std::vector<int> actions;      // deterministic: one entry per state
  std::vector<double> probs;     // stochastic: S*A row-major

  static Policy deterministic(std::vector<int> acts, int num_actions) {
    Policy pi;
    pi.kind = Kind::Deterministic;
    pi.num_states = static_cast<int>(acts.size());
    pi.num_actions = num_actions;
    pi.actions = std::move(acts);
    for (int a : pi.actions)
      if (a < 0 || a >= num_actions)
        throw std::invalid_argument("Policy: action index out of range");
    return pi;
  }

  static Policy stochastic(int S, int A, std::vector<double> p) {
    Policy pi;
    pi.kind = Kind::Stochastic;
    pi.num_states = S;
    pi.num_actions = A;
    pi.probs = std::move(p);
    if (pi.probs.size() != static_cast<std::size_t>(S) * A)
      throw std::invalid_argument("Policy: probability table has wrong size");
    for (int s = 0; s < S; ++s) {
      double row = 0.0;
      for (int a = 0; a < A; ++a) {
        double v = pi.probs[s * A + a];
        if (v < 0.0) throw std::invalid_argument("Policy: negative probability");
        row += v;
      }
      if (std::abs(row - 1.0) > 1e-12)
        throw std::invalid_argument("Policy: row " + std::to_string(s) +
                                    " sums to " + std::to_string(row));
    }
    return pi;
  }

  /// mu(a | s).
  double prob(int s, int a) const {
    if (kind == Kind::Deterministic) return actions[s] == a ? 1.0 : 0.0;
    return probs[s * num_actions + a];
  }

  void require_shape(const TabularMDP& mdp, const char* who) const {
    if (num_states != mdp.num_states || num_actions != mdp.num_actions)
      throw std::invalid_argument(std::string(who) + ": Policy shape mismatch");
  }
};

/// One Bellman backup: (T_mu q)(s,a) = r(s,a)
///   + gamma * sum_{s',a'} P(s'|s,a) mu(a'|s') q(s',a').
/// Pure function; inputs are untouched.
inline QFunction bellman_apply(const TabularMDP& mdp, const Policy& policy,
                               const QFunction& q) {
  policy.require_shape(mdp, "bellman_apply");
  q.require_shape(mdp, "bellman_apply");
  const int S = mdp.num_states, A = mdp.num_actions;

  // v_mu(s') = sum_a' mu(a'|s') q(s',a'), computed once per state.
  std::vector<double> v(S, 0.0);
  for (int s2 = 0; s2 < S; ++s2)
    for (int a2 = 0; a2 < A; ++a2) v[s2] += policy.prob(s2, a2) * q.at(s2, a2);

  QFunction out(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      double acc = 0.0;
      for (int s2 = 0; s2 < S; ++s2) acc += mdp.p(s, a, s2) * v[s2];
      out.at(s, a) = mdp.r(s, a) + mdp.discount * acc;
    }
  return out;
}

/// State-action transition matrix induced by (mdp, policy):
/// P_mu[(s,a),(s',a')] = P(s'|s,a) * mu(a'|s'). Shape (S*A) x (S*A).
inline Eigen::MatrixXd state_action_transition_matrix(const TabularMDP& mdp,
                                                      const Policy& policy) {
  policy.require_shape(mdp, "state_action_transition_matrix");
  const int S = mdp.num_states, A = mdp.num_actions, n = S * A;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      for (int s2 = 0; s2 < S; ++s2) {
        double ptrans = mdp.p(s, a, s2);
        if (ptrans == 0.0) continue;
        for (int a2 = 0; a2 < A; ++a2) {
          double mu = policy.prob(s2, a2);
          if (mu != 0.0) P(s * A + a, s2 * A + a2) = ptrans * mu;
        }
      }
  return P;
}

/// Exact policy evaluation: the fixed point of T_mu, obtained by solving the
/// dense (SA x SA) linear system (I - gamma P_mu) q = r with partial-pivot LU.
/// The system is nonsingular for gamma < 1; the residual is checked anyway.
inline QFunction exact_policy_eval(const TabularMDP& mdp, const Policy& policy) {
  const int n = mdp.sa_size();
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) -
                      mdp.discount * state_action_transition_matrix(mdp, policy);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) b(i) = mdp.reward[i];
  Eigen::VectorXd x = A.partialPivLu().solve(b);

  QFunction q(mdp.num_states, mdp.num_actions);
  for (int i = 0; i < n; ++i) q.values[i] = x(i);
  if (max_abs_diff(bellman_apply(mdp, policy, q), q) > 1e-10)
    throw std::runtime_error("exact_policy_eval: linear solve residual exceeds 1e-10");
  return q;
}

/// Deterministic greedy policy; per-state argmax with ties broken by the
/// lowest action index.
inline Policy greedy_policy(const QFunction& q) {
  if (!q.finite()) throw std::invalid_argument("greedy_policy: non-finite values");
  std::vector<int> acts(q.num_states, 0);
  for (int s = 0; s < q.num_states; ++s) {
    int best = 0;
    for (int a = 1; a < q.num_actions; ++a)
      if (q.at(s, a) > q.at(s, best)) best = a;
    acts[s] = best;
  }
  return Policy::deterministic(std::move(acts), q.num_actions);
}

struct PolicyIterationResult {
  Policy policy;
  QFunction q;
  int iterations = 0;
};

/// Classical policy iteration with exact evaluation. Terminates when the
/// greedy policy reproduces itself; at most A^S improvement rounds. When
/// `trace` is given it receives the exact Q of every policy iterate,
/// starting with the initial policy's.
inline PolicyIterationResult classical_policy_iteration(
    const TabularMDP& mdp, const Policy& init,
    std::vector<QFunction>* trace = nullptr) {
  init.require_shape(mdp, "classical_policy_iteration");
  Policy pi = init;
  QFunction q = exact_policy_eval(mdp, pi);
  if (trace) trace->push_back(q);
  int iters = 0;
  while (true) {
    ++iters;
    Policy next = greedy_policy(q);
    bool same = pi.kind == Policy::Kind::Deterministic && next.actions == pi.actions;
    pi = next;
    QFunction q_next = exact_policy_eval(mdp, pi);
    if (same) return {pi, q_next, iters};
    if (trace) trace->push_back(q_next);
    q = q_next;
  }
}

/// Value iteration on the optimality operator (max over a'). Stops when the
/// sup-norm Bellman residual drops to tol.
inline QFunction value_iteration(const TabularMDP& mdp, double tol,
                                 int max_sweeps = 1000000) {
  if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be > 0");
  const int S = mdp.num_states, A = mdp.num_actions;
  QFunction q(S, A);
  std::vector<double> vmax(S, 0.0);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    for (int s = 0; s < S; ++s) {
      double m = q.at(s, 0);
      for (int a = 1; a < A; ++a) m = std::max(m, q.at(s, a));
      vmax[s] = m;
    }
    QFunction next(S, A);
    double delta = 0.0;
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        double acc = 0.0;
        for (int s2 = 0; s2 < S; ++s2) acc += mdp.p(s, a, s2) * vmax[s2];
        next.at(s, a) = mdp.r(s, a) + mdp.discount * acc;
        delta = std::max(delta, std::abs(next.at(s, a) - q.at(s, a)));
      }
    q = std::move(next);
    if (delta <= tol) break;
  }
  return q;
}

/// Random MDP for tests and property sweeps: transition rows drawn from a
/// symmetric Dirichlet(1) (normalized unit exponentials), rewards uniform in
/// [-1, 1].
inline TabularMDP make_random_mdp(int S, int A, double gamma, Rng& rng) {
  std::vector<double> P(static_cast<std::size_t>(S) * A * S);
  std::vector<double> r(static_cast<std::size_t>(S) * A);
  for (int sa = 0; sa < S * A; ++sa) {
    double sum = 0.0;
    for (int s2 = 0; s2 < S; ++s2) {
      double e = -std::log(1.0 - rng.uniform());
      P[static_cast<std::size_t>(sa) * S + s2] = e;
      sum += e;
    }
    for (int s2 = 0; s2 < S; ++s2) P[static_cast<std::size_t>(sa) * S + s2] /= sum;
    r[sa] = rng.uniform(-1.0, 1.0);
  }
  return TabularMDP(S, A, std::move(P), std::move(r), gamma);
}

// --- Fixture serialization ---------------------------------------------------
//
// Text schema (whitespace separated, '#' starts a comment that runs to the
// end of the line):
//   rpi-mdp 1
//   S A gamma
//   S*A*S transition entries, row-major over (s, a, s')
//   S*A reward entries, row-major over (s, a)

inline void save_mdp(const TabularMDP& mdp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_mdp: cannot open " + path);
  char buf[64];
  out << "rpi-mdp 1\n";
  std::snprintf(buf, sizeof(buf), "%.17g", mdp.discount);
  out << mdp.num_states << ' ' << mdp.num_actions << ' ' << buf << '\n';
  for (int sa = 0; sa < mdp.sa_size(); ++sa) {
    for (int s2 = 0; s2 < mdp.num_states; ++s2) {
      std::snprintf(buf, sizeof(buf), "%.17g", mdp.transition[static_cast<std::size_t>(sa) * mdp.num_states + s2]);
      out << buf << (s2 + 1 == mdp.num_states ? '\n' : ' ');
    }
  }
  for (int sa = 0; sa < mdp.sa_size(); ++sa) {
    std::snprintf(buf, sizeof(buf), "%.17g", mdp.reward[sa]);
    out << buf << (sa + 1 == mdp.sa_size() ? '\n' : ' ');
  }
  if (!out) throw std::runtime_error("save_mdp: write failed for " + path);
}

inline TabularMDP load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_mdp: cannot open " + path);
  std::string text, line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    text += line;
    text += '\n';
  }
  std::istringstream ss(text);
  std::string magic;
  int version = 0;
  ss >> magic >> version;
  if (magic != "rpi-mdp" || version != 1)
    throw std::runtime_error("load_mdp: " + path + " is not an rpi-mdp v1 file");
  int S = 0, A = 0;
  double gamma = 0.0;
  ss >> S >> A >> gamma;
  if (!ss || S <= 0 || A <= 0)
    throw std::runtime_error("load_mdp: bad header in " + path);
  std::vector<double> P(static_cast<std::size_t>(S) * A * S);
  std::vector<double> r(static_cast<std::size_t>(S) * A);
  for (double& v : P) ss >> v;
  for (double& v : r) ss >> v;
  if (!ss) throw std::runtime_error("load_mdp: truncated data in " + path);
  return TabularMDP(S, A, std::move(P), std::move(r), gamma);
}

}  // namespace rpi
