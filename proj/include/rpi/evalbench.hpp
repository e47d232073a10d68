#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpi/agents.hpp"
#include "rpi/cartpole.hpp"

namespace rpi {

/// One evaluation checkpoint: Monte Carlo returns of the greedy policy and
/// the critic's estimate at the rollouts' initial state-action pairs.
struct EvalPoint {
  std::int64_t training_step = 0;
  double mc_return_discounted = 0.0;
  double mc_return_undiscounted = 0.0;
  double critic_estimate = 0.0;
  double return_std = 0.0;
  int num_rollouts = 0;
};

/// Per-seed learning curve plus everything needed to recompute its metrics.
struct RunRecord {
  std::string config_fingerprint;
  std::uint64_t seed = 0;
  std::int64_t total_steps = 0;
  double solve_threshold = 0.0;
  int eval_rollouts = 0;
  std::string status = "done";  // or "aborted_nonfinite_loss"
  std::vector<EvalPoint> points;

  void validate() const {
    for (std::size_t i = 1; i < points.size(); ++i)
      if (points[i].training_step <= points[i - 1].training_step)
        throw std::invalid_argument("RunRecord: training steps must be strictly increasing");
  }
};

/// Upper bound on the discounted return: surviving every step of the cap.
inline double theoretical_max_discounted_return(const EnvSpec& spec, double gamma) {
  if (gamma <= 0.0) return 1.0;
  return (1.0 - std::pow(gamma, spec.max_episode_steps)) / (1.0 - gamma);
}

/// "Solved" defaults to 95% of the theoretical maximum.
inline double default_solve_threshold(const EnvSpec& spec, double gamma) {
  return 0.95 * theoretical_max_discounted_return(spec, gamma);
}

/// Greedy-policy evaluation over `num_rollouts` episodes. Episodes run in
/// lockstep so the policy network is applied once per timestep across all
/// live rollouts; results are identical to evaluating them one by one. The
/// rng only seeds the episode resets, drawn up front in rollout order.
inline EvalPoint evaluate(const Agent& agent, const EnvSpec& spec, int num_rollouts,
                          double gamma, Rng& rng) {
  if (num_rollouts < 1) throw std::invalid_argument("evaluate: num_rollouts must be >= 1");

  std::vector<EnvState> states(static_cast<std::size_t>(num_rollouts));
  RowMatrix obs(num_rollouts, 4);
  for (int i = 0; i < num_rollouts; ++i) {
    states[static_cast<std::size_t>(i)] = reset(spec, rng);
    const EnvState& s = states[static_cast<std::size_t>(i)];
    obs(i, 0) = s.x; obs(i, 1) = s.x_dot; obs(i, 2) = s.theta; obs(i, 3) = s.theta_dot;
  }

  Eigen::VectorXd first_actions = agent.greedy_actions(obs);
  Eigen::VectorXd estimates = agent.critic_values(obs, first_actions);

  std::vector<double> disc(static_cast<std::size_t>(num_rollouts), 0.0);
  std::vector<double> undisc(static_cast<std::size_t>(num_rollouts), 0.0);
  std::vector<double> gamma_pow(static_cast<std::size_t>(num_rollouts), 1.0);
  std::vector<char> alive(static_cast<std::size_t>(num_rollouts), 1);
  std::vector<int> alive_idx;
  int num_alive = num_rollouts;
  Eigen::VectorXd actions = first_actions;

  while (num_alive > 0) {
    // Step every live episode with its current greedy action.
    alive_idx.clear();
    for (int i = 0; i < num_rollouts; ++i) {
      if (!alive[static_cast<std::size_t>(i)]) continue;
      EnvState& s = states[static_cast<std::size_t>(i)];
      Transition tr = agent.discrete()
          ? step(spec, s, static_cast<int>(actions(i)))
          : step(spec, s, actions(i));
      disc[static_cast<std::size_t>(i)] += gamma_pow[static_cast<std::size_t>(i)] * tr.reward;
      undisc[static_cast<std::size_t>(i)] += tr.reward;
      gamma_pow[static_cast<std::size_t>(i)] *= gamma;
      if (tr.terminated || tr.truncated) {
        alive[static_cast<std::size_t>(i)] = 0;
        --num_alive;
      } else {
        s = tr.next_state;
        alive_idx.push_back(i);
      }
    }
    if (num_alive == 0) break;

    RowMatrix live_obs(num_alive, 4);
    for (int k = 0; k < num_alive; ++k) {
      const EnvState& s = states[static_cast<std::size_t>(alive_idx[static_cast<std::size_t>(k)])];
      live_obs(k, 0) = s.x; live_obs(k, 1) = s.x_dot;
      live_obs(k, 2) = s.theta; live_obs(k, 3) = s.theta_dot;
    }
    Eigen::VectorXd live_actions = agent.greedy_actions(live_obs);
    for (int k = 0; k < num_alive; ++k)
      actions(alive_idx[static_cast<std::size_t>(k)]) = live_actions(k);
  }

  EvalPoint pt;
  pt.num_rollouts = num_rollouts;
  double mean_d = 0.0, mean_u = 0.0;
  for (int i = 0; i < num_rollouts; ++i) {
    mean_d += disc[static_cast<std::size_t>(i)];
    mean_u += undisc[static_cast<std::size_t>(i)];
  }
  mean_d /= num_rollouts;
  mean_u /= num_rollouts;
  double var = 0.0;
  for (int i = 0; i < num_rollouts; ++i) {
    double d = disc[static_cast<std::size_t>(i)] - mean_d;
    var += d * d;
  }
  pt.mc_return_discounted = mean_d;
  pt.mc_return_undiscounted = mean_u;
  pt.return_std = std::sqrt(var / num_rollouts);
  pt.critic_estimate = estimates.mean();
  return pt;
}

// --- Metrics -------------------------------------------------------------------

/// Mean discounted return over evaluation points in the final 10% of
/// training (training_step > 0.9 * total_steps).
inline double final_performance(const RunRecord& rec) {
  double cutoff = 0.9 * static_cast<double>(rec.total_steps);
  double sum = 0.0;
  int n = 0;
  for (const EvalPoint& p : rec.points)
    if (static_cast<double>(p.training_step) > cutoff) {
      sum += p.mc_return_discounted;
      ++n;
    }
  if (n == 0)
    throw std::invalid_argument("final_performance: no evaluation points in the final 10% window");
  return sum / n;
}

/// Trapezoidal integral of the discounted return over [0, total_steps].
/// The first point's value extends back to step 0 and the last point's value
/// extends forward to total_steps.
inline double auc(const RunRecord& rec) {
  if (rec.points.empty()) throw std::invalid_argument("auc: no evaluation points");
  double area = 0.0;
  const auto& pts = rec.points;
  area += pts.front().mc_return_discounted * static_cast<double>(pts.front().training_step);
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += 0.5 * (pts[i].mc_return_discounted + pts[i - 1].mc_return_discounted) *
            static_cast<double>(pts[i].training_step - pts[i - 1].training_step);
  area += pts.back().mc_return_discounted *
          static_cast<double>(rec.total_steps - pts.back().training_step);
  return area;
}

inline double auc_millions(const RunRecord& rec) { return auc(rec) / 1e6; }

/// Training step of the first evaluation point at or above the threshold.
inline std::optional<std::int64_t> steps_to_solve(const RunRecord& rec, double threshold) {
  for (const EvalPoint& p : rec.points)
    if (p.mc_return_discounted >= threshold) return p.training_step;
  return std::nullopt;
}

/// Fraction of evaluation points whose critic estimate exceeds the measured
/// return by more than `margin` (the lower-bound audit).
inline double lower_bound_violation_rate(const RunRecord& rec, double margin) {
  if (rec.points.empty()) return 0.0;
  int bad = 0;
  for (const EvalPoint& p : rec.points)
    if (p.critic_estimate > p.mc_return_discounted + margin) ++bad;
  return static_cast<double>(bad) / static_cast<double>(rec.points.size());
}

/// Mean and population standard deviation across seeds; unsolved runs are
/// reported through the solve rate and excluded from the solve-time moments.
struct AggregateSummary {
  int num_runs = 0;
  double final_mean = 0.0, final_std = 0.0;
  double auc_mean = 0.0, auc_std = 0.0;  // in units of 1e6
  double solve_rate = 0.0;
  int num_solved = 0;
  double solve_steps_mean = 0.0, solve_steps_std = 0.0;  // over solvers only
};

namespace detail {

inline void mean_std(const std::vector<double>& xs, double& mean, double& std_out) {
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  std_out = std::sqrt(var / static_cast<double>(xs.size()));
}

}  // namespace detail

inline AggregateSummary aggregate(const std::vector<RunRecord>& records) {
  if (records.empty()) throw std::invalid_argument("aggregate: no records");
  for (const RunRecord& r : records)
    if (r.config_fingerprint != records.front().config_fingerprint)
      throw std::invalid_argument("aggregate: mixed config fingerprints (" +
                                  r.config_fingerprint + " vs " +
                                  records.front().config_fingerprint + ")");

  AggregateSummary s;
  s.num_runs = static_cast<int>(records.size());
  std::vector<double> finals, aucs, solves;
  for (const RunRecord& r : records) {
    finals.push_back(final_performance(r));
    aucs.push_back(auc_millions(r));
    if (auto st = steps_to_solve(r, r.solve_threshold))
      solves.push_back(static_cast<double>(*st));
  }
  detail::mean_std(finals, s.final_mean, s.final_std);
  detail::mean_std(aucs, s.auc_mean, s.auc_std);
  s.num_solved = static_cast<int>(solves.size());
  s.solve_rate = static_cast<double>(s.num_solved) / s.num_runs;
  if (!solves.empty()) detail::mean_std(solves, s.solve_steps_mean, s.solve_steps_std);
  return s;
}

// --- Persistence ----------------------------------------------------------------
//
// Curve CSV columns: step, return_disc, return_undisc, critic_est, return_std.
// The metrics sidecar is key=value text carrying identity, thresholds, and
// the derived metrics so every table number can be recomputed from disk.

namespace detail {

inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void save_record_csv(const RunRecord& rec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_record_csv: cannot open " + path);
  out << "step,return_disc,return_undisc,critic_est,return_std\n";
  for (const EvalPoint& p : rec.points)
    out << p.training_step << ',' << detail::fmt17(p.mc_return_discounted) << ','
        << detail::fmt17(p.mc_return_undiscounted) << ','
        << detail::fmt17(p.critic_estimate) << ','
        << detail::fmt17(p.return_std) << '\n';
  if (!out) throw std::runtime_error("save_record_csv: write failed for " + path);
}

inline void save_metrics(const RunRecord& rec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_metrics: cannot open " + path);
  out << "fingerprint=" << rec.config_fingerprint << '\n'
      << "seed=" << rec.seed << '\n'
      << "status=" << rec.status << '\n'
      << "total_steps=" << rec.total_steps << '\n'
      << "eval_rollouts=" << rec.eval_rollouts << '\n'
      << "solve_threshold=" << detail::fmt17(rec.solve_threshold) << '\n';
  if (!rec.points.empty()) {
    // The final-10% window can be empty for degenerate runs (total_steps = 0
    // or an early abort); such metrics are recorded as "none".
    try {
      out << "final_performance=" << detail::fmt17(final_performance(rec)) << '\n';
    } catch (const std::invalid_argument&) {
      out << "final_performance=none\n";
    }
    out << "auc=" << detail::fmt17(auc(rec)) << '\n'
        << "auc_millions=" << detail::fmt17(auc_millions(rec)) << '\n';
    auto st = steps_to_solve(rec, rec.solve_threshold);
    out << "steps_to_solve=" << (st ? std::to_string(*st) : std::string("none")) << '\n';
    out << "lb_violation_rate_margin5=" << detail::fmt17(lower_bound_violation_rate(rec, 5.0)) << '\n';
  }
  if (!out) throw std::runtime_error("save_metrics: write failed for " + path);
}

inline RunRecord load_record(const std::string& csv_path, const std::string& metrics_path) {
  RunRecord rec;
  {
    std::ifstream in(metrics_path);
    if (!in) throw std::runtime_error("load_record: cannot open " + metrics_path);
    std::string line;
    while (std::getline(in, line)) {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(0, eq), val = line.substr(eq + 1);
      if (key == "fingerprint") rec.config_fingerprint = val;
      else if (key == "seed") rec.seed = std::stoull(val);
      else if (key == "status") rec.status = val;
      else if (key == "total_steps") rec.total_steps = std::stoll(val);
      else if (key == "eval_rollouts") rec.eval_rollouts = std::stoi(val);
      else if (key == "solve_threshold") rec.solve_threshold = std::stod(val);
    }
  }
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("load_record: cannot open " + csv_path);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EvalPoint p;
    p.num_rollouts = rec.eval_rollouts;
    std::istringstream ss(line);
    char comma;
    ss >> p.training_step >> comma >> p.mc_return_discounted >> comma >>
        p.mc_return_undiscounted >> comma >> p.critic_estimate >> comma >> p.return_std;
    if (!ss) throw std::runtime_error("load_record: bad row in " + csv_path + ": " + line);
    rec.points.push_back(p);
  }
  rec.validate();
  return rec;
}

}  // namespace rpi
