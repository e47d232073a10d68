#include "rpi/evalbench.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace rpi;

namespace {

RunRecord record_from(std::vector<std::pair<std::int64_t, double>> curve,
                      std::int64_t total_steps, double threshold = 95.0) {
  RunRecord rec;
  rec.config_fingerprint = "test";
  rec.total_steps = total_steps;
  rec.solve_threshold = threshold;
  rec.eval_rollouts = 1;
  for (auto [step, ret] : curve) {
    EvalPoint p;
    p.training_step = step;
    p.mc_return_discounted = ret;
    p.mc_return_undiscounted = ret;
    p.critic_estimate = ret;
    p.num_rollouts = 1;
    rec.points.push_back(p);
  }
  return rec;
}

MlpParams constant_net(const MlpSpec& spec, const std::vector<double>& out_bias) {
  MlpParams p;
  p.spec = spec;
  p.data.assign(static_cast<std::size_t>(spec.param_count()), 0.0);
  for (int i = 0; i < spec.output_dim; ++i)
    p.data[p.b3() + static_cast<std::size_t>(i)] = out_bias[static_cast<std::size_t>(i)];
  return p;
}

// Discrete agent whose greedy action is fixed; used to exercise rollouts.
Agent fixed_action_agent(const EnvSpec& spec, int action) {
  AgentConfig cfg = AgentConfig::defaults_for(Algorithm::Dqn);
  Agent agent(cfg, spec, 0);
  std::vector<double> bias = action == 1 ? std::vector<double>{0.0, 1.0}
                                         : std::vector<double>{1.0, 0.0};
  agent.load_critic(constant_net(cfg.critic_spec(spec), bias));
  return agent;
}

}  // namespace

TEST(Evaluate, FullSurvivalHitsTheDiscountedCeiling) {
  // Unfailable variant: thresholds so wide every episode runs the full cap.
  EnvSpec spec = cartpole_discrete_spec();
  spec.theta_threshold = 1e9;
  spec.x_threshold = 1e9;
  Agent agent = fixed_action_agent(spec, 1);
  Rng rng(3);
  EvalPoint pt = evaluate(agent, spec, 5, 0.99, rng);
  EXPECT_NEAR(pt.mc_return_discounted, 99.34, 0.01);
  EXPECT_DOUBLE_EQ(pt.mc_return_undiscounted, 500.0);
  EXPECT_DOUBLE_EQ(pt.return_std, 0.0);
  EXPECT_NEAR(pt.mc_return_discounted, theoretical_max_discounted_return(spec, 0.99), 1e-9);
}

TEST(Evaluate, ThousandStepSurvivalMatchesGeometricSeries) {
  EnvSpec spec = cartpole_continuous_spec();
  spec.theta_threshold = 1e9;
  spec.x_threshold = 1e9;
  AgentConfig cfg = AgentConfig::defaults_for(Algorithm::Ddpg);
  Agent agent(cfg, spec, 0);
  agent.load_actor(constant_net(cfg.actor_spec(spec), {0.0}));
  Rng rng(5);
  EvalPoint pt = evaluate(agent, spec, 3, 0.99, rng);
  EXPECT_NEAR(pt.mc_return_discounted, 99.9957, 1e-3);
  EXPECT_DOUBLE_EQ(pt.mc_return_undiscounted, 1000.0);
}

TEST(Evaluate, OneStepEpisodeReturnsOne) {
  EnvSpec spec = cartpole_continuous_spec();
  spec.max_episode_steps = 1;
  AgentConfig cfg = AgentConfig::defaults_for(Algorithm::Ddpg);
  Agent agent(cfg, spec, 0);
  agent.load_actor(constant_net(cfg.actor_spec(spec), {0.0}));
  Rng rng(7);
  EvalPoint pt = evaluate(agent, spec, 10, 0.99, rng);
  EXPECT_DOUBLE_EQ(pt.mc_return_discounted, 1.0);
  EXPECT_DOUBLE_EQ(pt.mc_return_undiscounted, 1.0);
}

TEST(Evaluate, ReproducibleBitForBit) {
  EnvSpec spec = cartpole_discrete_spec();
  Agent agent = fixed_action_agent(spec, 0);
  Rng a(11), b(11);
  EvalPoint pa = evaluate(agent, spec, 100, 0.99, a);
  EvalPoint pb = evaluate(agent, spec, 100, 0.99, b);
  EXPECT_EQ(pa.mc_return_discounted, pb.mc_return_discounted);
  EXPECT_EQ(pa.mc_return_undiscounted, pb.mc_return_undiscounted);
  EXPECT_EQ(pa.critic_estimate, pb.critic_estimate);
  EXPECT_EQ(pa.return_std, pb.return_std);
}

TEST(Evaluate, ReturnNeverExceedsTheCeiling) {
  EnvSpec spec = cartpole_discrete_spec();
  Agent agent = fixed_action_agent(spec, 1);
  Rng rng(13);
  for (int i = 0; i < 5; ++i) {
    EvalPoint pt = evaluate(agent, spec, 20, 0.99, rng);
    EXPECT_LE(pt.mc_return_discounted,
              theoretical_max_discounted_return(spec, 0.99) + 1e-12);
  }
}

TEST(FinalPerformance, ConstantAndWindowedCurves) {
  EXPECT_DOUBLE_EQ(final_performance(record_from({{25000, 50}, {50000, 50}, {100000, 50}}, 100000)), 50.0);
  // Only the 100k point lands in the (90k, 100k] window.
  EXPECT_DOUBLE_EQ(final_performance(record_from({{90000, 10}, {100000, 90}}, 100000)), 90.0);
  EXPECT_DOUBLE_EQ(final_performance(record_from({{91000, 80}, {100000, 100}}, 100000)), 90.0);
  EXPECT_THROW(final_performance(record_from({{1000, 5}}, 100000)), std::invalid_argument);
}

TEST(Auc, HandTrapezoids) {
  EXPECT_NEAR(auc(record_from({{0, 0}, {50000, 50}, {100000, 100}}, 100000)), 5.0e6, 1e-6);
  EXPECT_NEAR(auc_millions(record_from({{0, 0}, {50000, 50}, {100000, 100}}, 100000)), 5.0, 1e-12);
  // Constant 99.34 over the whole run.
  EXPECT_NEAR(auc(record_from({{2000, 99.34}, {100000, 99.34}}, 100000)), 9.934e6, 1e-3);
  // Single repeated value extends across [0, total_steps].
  EXPECT_NEAR(auc(record_from({{30000, 7}, {60000, 7}}, 100000)), 7.0 * 100000, 1e-9);
}

TEST(Auc, MonotoneInTheCurve) {
  Rng rng(17);
  for (int t = 0; t < 20; ++t) {
    std::vector<std::pair<std::int64_t, double>> lo, hi;
    for (int i = 0; i <= 10; ++i) {
      double v = rng.uniform(0, 100);
      lo.push_back({i * 10000, v});
      hi.push_back({i * 10000, v + rng.uniform(0, 10)});
    }
    EXPECT_GE(auc(record_from(hi, 100000)), auc(record_from(lo, 100000)));
  }
}

TEST(StepsToSolve, FirstCrossingOrNone) {
  auto rec = record_from({{10000, 10}, {20000, 96}, {30000, 99}}, 100000);
  EXPECT_EQ(steps_to_solve(rec, 95.0).value(), 20000);
  EXPECT_FALSE(steps_to_solve(rec, 99.5).has_value());
  EXPECT_EQ(steps_to_solve(rec, 0.0).value(), 10000);
}

TEST(Aggregate, MeanStdAndSolveRate) {
  auto a = record_from({{91000, 40}, {100000, 40}}, 100000);
  auto b = record_from({{91000, 60}, {100000, 60}}, 100000);
  auto s = aggregate({a, b});
  EXPECT_DOUBLE_EQ(s.final_mean, 50.0);
  EXPECT_DOUBLE_EQ(s.final_std, 10.0);
  EXPECT_EQ(s.num_runs, 2);

  // One solver at 10k, one never: rate 0.5, mean over solvers.
  auto solved = record_from({{10000, 99}, {100000, 99}}, 100000, 95.0);
  auto unsolved = record_from({{10000, 10}, {100000, 10}}, 100000, 95.0);
  auto s2 = aggregate({solved, unsolved});
  EXPECT_DOUBLE_EQ(s2.solve_rate, 0.5);
  EXPECT_DOUBLE_EQ(s2.solve_steps_mean, 10000.0);

  auto single = aggregate({a});
  EXPECT_DOUBLE_EQ(single.final_std, 0.0);

  auto alien = record_from({{91000, 1}, {100000, 1}}, 100000);
  alien.config_fingerprint = "other";
  EXPECT_THROW(aggregate({a, alien}), std::invalid_argument);
}

TEST(LowerBoundViolationRate, CountsOnlyBeyondMargin) {
  RunRecord rec = record_from({{1000, 50}, {2000, 50}, {3000, 50}, {4000, 50}}, 100000);
  rec.points[1].critic_estimate = 54.0;  // within margin 5
  rec.points[2].critic_estimate = 56.0;  // violation
  EXPECT_DOUBLE_EQ(lower_bound_violation_rate(rec, 5.0), 0.25);
}

TEST(Persistence, RoundTripPreservesEverything) {
  RunRecord rec = record_from({{0, 1.5}, {2000, 37.25}, {4000, 99.125}}, 4000, 94.5);
  rec.config_fingerprint = "cafef00d";
  rec.seed = 3;
  rec.eval_rollouts = 100;
  rec.points[1].critic_estimate = -12.0625;
  rec.points[2].return_std = 0.001953125;

  auto dir = std::filesystem::temp_directory_path();
  auto csv = (dir / "rpi_rec.csv").string();
  auto met = (dir / "rpi_rec_metrics.txt").string();
  save_record_csv(rec, csv);
  save_metrics(rec, met);
  RunRecord back = load_record(csv, met);

  EXPECT_EQ(back.config_fingerprint, rec.config_fingerprint);
  EXPECT_EQ(back.seed, rec.seed);
  EXPECT_EQ(back.total_steps, rec.total_steps);
  EXPECT_EQ(back.solve_threshold, rec.solve_threshold);
  EXPECT_EQ(back.eval_rollouts, rec.eval_rollouts);
  ASSERT_EQ(back.points.size(), rec.points.size());
  for (std::size_t i = 0; i < rec.points.size(); ++i) {
    EXPECT_EQ(back.points[i].training_step, rec.points[i].training_step);
    EXPECT_EQ(back.points[i].mc_return_discounted, rec.points[i].mc_return_discounted);
    EXPECT_EQ(back.points[i].critic_estimate, rec.points[i].critic_estimate);
    EXPECT_EQ(back.points[i].return_std, rec.points[i].return_std);
  }
  std::filesystem::remove(csv);
  std::filesystem::remove(met);
}

TEST(Thresholds, DefaultSolveThresholds) {
  EXPECT_NEAR(default_solve_threshold(cartpole_discrete_spec(), 0.99), 94.376, 0.01);
  EXPECT_NEAR(default_solve_threshold(cartpole_continuous_spec(), 0.99), 95.0, 0.01);
}
