#include "rpi/agents.hpp"

#include <gtest/gtest.h>

#include "rpi/cartpole.hpp"

using namespace rpi;

namespace {

// Minimal training loop used across the agent tests; mirrors the harness.
void drive(Agent& agent, const EnvSpec& spec, int steps, std::uint64_t seed) {
  Rng env_rng(derive_seed(seed, {1}));
  Rng explore_rng(derive_seed(seed, {2}));
  EnvState s = reset(spec, env_rng);
  for (int t = 0; t < steps; ++t) {
    double a = agent.act(obs_of(s), true, explore_rng);
    Transition tr = agent.discrete() ? step(spec, s, static_cast<int>(a))
                                     : step(spec, s, a);
    agent.train_step(tr);
    s = (tr.terminated || tr.truncated) ? reset(spec, env_rng) : tr.next_state;
  }
}

// Network that ignores its input: zero weights, chosen output biases.
MlpParams constant_net(const MlpSpec& spec, const std::vector<double>& out_bias) {
  MlpParams p;
  p.spec = spec;
  p.data.assign(static_cast<std::size_t>(spec.param_count()), 0.0);
  for (int i = 0; i < spec.output_dim; ++i) p.data[p.b3() + static_cast<std::size_t>(i)] = out_bias[static_cast<std::size_t>(i)];
  return p;
}

}  // namespace

TEST(RpiCriticLoss, HandEvaluatedCases) {
  // f=5, y=4, q_min=0, c=1, l1=2, l2=3: loss = -5 + 2 = -3, d = -1 + 2 = 1.
  RpiLossParams p{1.0, 2.0, 3.0, 0.0};
  auto r = rpi_critic_loss({5.0}, {4.0}, p);
  EXPECT_DOUBLE_EQ(r.loss, -3.0);
  EXPECT_DOUBLE_EQ(r.dloss_df[0], 1.0);

  // f = y and f >= q_min: both hinges inactive at the boundary.
  RpiLossParams q{0.5, 1.0, 1.0, 0.0};
  auto r2 = rpi_critic_loss({4.0}, {4.0}, q);
  EXPECT_DOUBLE_EQ(r2.loss, -0.5 * 4.0);
  EXPECT_DOUBLE_EQ(r2.dloss_df[0], -0.5);

  // f=-1, q_min=0, y=4, c=l1=l2=1: loss = 1 + 0 + 1 = 2, d = -1 - 1 = -2.
  RpiLossParams u{1.0, 1.0, 1.0, 0.0};
  auto r3 = rpi_critic_loss({-1.0}, {4.0}, u);
  EXPECT_DOUBLE_EQ(r3.loss, 2.0);
  EXPECT_DOUBLE_EQ(r3.dloss_df[0], -2.0);
}

TEST(RpiCriticLoss, BatchMeanAndValidation) {
  RpiLossParams p{1.0, 2.0, 3.0, 0.0};
  auto r = rpi_critic_loss({5.0, -1.0}, {4.0, 4.0}, p);
  EXPECT_DOUBLE_EQ(r.loss, 0.5 * (-3.0) + 0.5 * (-(-1.0) + 3.0 * 1.0));
  EXPECT_DOUBLE_EQ(r.dloss_df[0], 0.5 * 1.0);
  EXPECT_THROW(rpi_critic_loss({1.0}, {1.0, 2.0}, p), std::invalid_argument);
  RpiLossParams bad{0.0, 1.0, 1.0, 0.0};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(RpiCriticLoss, DerivativeMatchesFiniteDifferencesAwayFromHinges) {
  Rng rng(91);
  RpiLossParams p{0.37, 1.3, 2.1, -0.5};
  const double h = 1e-6;
  for (int trial = 0; trial < 200; ++trial) {
    double y = rng.uniform(-3, 3);
    double f = rng.uniform(-3, 3);
    if (std::abs(f - y) < 10 * h || std::abs(f - p.q_min) < 10 * h) continue;
    auto base = rpi_critic_loss({f}, {y}, p);
    auto up = rpi_critic_loss({f + h}, {y}, p);
    auto dn = rpi_critic_loss({f - h}, {y}, p);
    double fd = (up.loss - dn.loss) / (2 * h);
    EXPECT_NEAR(base.dloss_df[0], fd, 1e-6);
  }
}

TEST(MsbeLoss, QuadraticAndGradient) {
  auto r = msbe_loss({3.0, 1.0}, {1.0, 1.0});
  EXPECT_DOUBLE_EQ(r.loss, 2.0);
  EXPECT_DOUBLE_EQ(r.dloss_df[0], 2.0);
  EXPECT_DOUBLE_EQ(r.dloss_df[1], 0.0);
}

TEST(ReplayBuffer, FifoOverwrite) {
  ReplayBuffer buf(5);
  for (int i = 0; i < 8; ++i) {
    StoredTransition t;
    t.reward = i;
    buf.push(t);
  }
  EXPECT_EQ(buf.size(), 5);
  auto fifo = buf.snapshot_fifo();
  ASSERT_EQ(fifo.size(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(fifo[static_cast<std::size_t>(i)].reward, 3.0 + i);
}

TEST(ComputeTarget, TerminalAndDiscountZero) {
  MlpSpec cs{4, 4, 4, 2, OutputActivation::Identity};
  MlpParams critic = constant_net(cs, {2.0, 7.0});
  TargetNets nets{&critic, nullptr, nullptr};
  RowMatrix ns = RowMatrix::Zero(1, 4);
  auto y_term = compute_target(Algorithm::Dqn, ns, {1.0}, {1}, nets, &critic, 0.99,
                               0.2, 0.5, nullptr);
  EXPECT_DOUBLE_EQ(y_term[0], 1.0);
  auto y_g0 = compute_target(Algorithm::Dqn, ns, {1.0}, {0}, nets, &critic, 0.0,
                             0.2, 0.5, nullptr);
  EXPECT_DOUBLE_EQ(y_g0[0], 1.0);
}

TEST(ComputeTarget, DqnVsDoubleDqnRules) {
  MlpSpec cs{4, 4, 4, 2, OutputActivation::Identity};
  MlpParams target = constant_net(cs, {2.0, 7.0});
  // Online net prefers action 0, so the double rule bootstraps from 2.
  MlpParams online = constant_net(cs, {9.0, 1.0});
  TargetNets nets{&target, nullptr, nullptr};
  RowMatrix ns = RowMatrix::Zero(1, 4);

  auto y_dqn = compute_target(Algorithm::Dqn, ns, {1.0}, {0}, nets, &online, 0.99,
                              0.2, 0.5, nullptr);
  EXPECT_NEAR(y_dqn[0], 1.0 + 0.99 * 7.0, 1e-12);

  auto y_ddqn = compute_target(Algorithm::Ddqn, ns, {1.0}, {0}, nets, &online, 0.99,
                               0.2, 0.5, nullptr);
  EXPECT_NEAR(y_ddqn[0], 1.0 + 0.99 * 2.0, 1e-12);

  auto y_rpi = compute_target(Algorithm::RpiDqn, ns, {1.0}, {0}, nets, &online, 0.99,
                              0.2, 0.5, nullptr, /*rpi_dqn_double_target=*/true);
  EXPECT_NEAR(y_rpi[0], y_ddqn[0], 1e-12);
}

TEST(ComputeTarget, DdpgAndTd3Rules) {
  MlpSpec critic_spec{5, 4, 4, 1, OutputActivation::Identity};
  MlpSpec actor_spec{4, 4, 4, 1, OutputActivation::Tanh};
  MlpParams q1 = constant_net(critic_spec, {3.0});
  MlpParams q2 = constant_net(critic_spec, {2.5});
  MlpParams actor = constant_net(actor_spec, {0.0});
  RowMatrix ns = RowMatrix::Zero(2, 4);

  TargetNets ddpg_nets{&q1, nullptr, &actor};
  auto y = compute_target(Algorithm::Ddpg, ns, {1.0, 1.0}, {0, 1}, ddpg_nets,
                          nullptr, 0.99, 0.2, 0.5, nullptr);
  EXPECT_NEAR(y[0], 1.0 + 0.99 * 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(y[1], 1.0);  // terminal

  TargetNets td3_nets{&q1, &q2, &actor};
  Rng noise(4);
  auto y3 = compute_target(Algorithm::Td3, ns, {1.0, 1.0}, {0, 0}, td3_nets,
                           nullptr, 0.99, 0.2, 0.5, &noise);
  // Constant critics make the smoothing noise moot: min(3.0, 2.5) = 2.5.
  EXPECT_NEAR(y3[0], 1.0 + 0.99 * 2.5, 1e-12);
  EXPECT_NEAR(y3[1], 1.0 + 0.99 * 2.5, 1e-12);
}

TEST(Act, EpsilonOneIsUniform) {
  EnvSpec spec = cartpole_discrete_spec();
  AgentConfig cfg = AgentConfig::defaults_for(Algorithm::Dqn);
  cfg.eps_start = cfg.eps_end = 1.0;
  Agent agent(cfg, spec, 0);
  Rng rng(77);
  int ones = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ones += agent.act({0, 0, 0, 0}, true, rng) == 1.0;
  EXPECT_NEAR(ones / static_cast<double>(n), 0.5, 0.02);
}

TEST(Act, GreedyPicksArgmaxAndTiesBreakLow) {
  EnvSpec spec = cartpole_discrete_spec();
  AgentConfig cfg = AgentConfig::defaults_for(Algorithm::Dqn);
  Agent agent(cfg, spec, 0);
  agent.load_critic(constant_net(cfg.critic_spec(spec), {3.0, 9.0}));
  Rng rng(1);
  EXPECT_EQ(agent.act({0, 0, 0, 0}, false, rng), 1.0);
  agent.load_critic(constant_net(cfg.critic_spec(spec), {4.0, 4.0}));
  EXPECT_EQ(agent.act({0, 0, 0, 0}, false, rng), 0.0);
}

TEST(Act, ContinuousNoiseIsClippedToTheBox) {
  EnvSpec spec = cartpole_continuous_spec();
  AgentConfig cfg = AgentConfig::defaults_for(Algorithm::Ddpg);
  Agent agent(cfg, spec, 0);
  // Actor emitting tanh(b) = 0.95 regardless of input.
  agent.load_actor(constant_net(cfg.actor_spec(spec), {std::atanh(0.95)}));

  // Exact formula check with the rng replicated on the side.
  Rng probe(123);
  double expected = std::clamp(0.95 + probe.normal(0.0, cfg.gauss_sigma), -1.0, 1.0);
  Rng rng(123);
  EXPECT_DOUBLE_EQ(agent.act({0, 0, 0, 0}, true, rng), expected);

  // Large noise never escapes [-1, 1].
  AgentConfig big = cfg;
  big.gauss_sigma = 50.0;
  Agent wild(big, spec, 0);
  wild.load_actor(constant_net(cfg.actor_spec(spec), {std::atanh(0.95)}));
  Rng rng2(5);
  bool clipped_high = false;
  for (int i = 0; i < 200; ++i) {
    double a = wild.act({0, 0, 0, 0}, true, rng2);
    ASSERT_GE(a, -1.0);
    ASSERT_LE(a, 1.0);
    clipped_high |= a == 1.0;
  }
  EXPECT_TRUE(clipped_high);
}

TEST(TrainStep, WarmupGateLeavesParametersUnchanged) {
  EnvSpec spec = cartpole_discrete_spec();
  AgentConfig cfg = AgentConfig::defaults_for(Algorithm::Dqn);
  cfg.learning_starts = 1000;
  Agent agent(cfg, spec, 3);
  std::vector<double> before = agent.critic().data;
  drive(agent, spec, 500, 3);
  EXPECT_EQ(agent.critic().data, before);
  EXPECT_EQ(agent.grad_steps(), 0);
}

TEST(TrainStep, SingleTransitionRpiUpdateMatchesComposedOracles) {
  EnvSpec spec = cartpole_discrete_spec();
  AgentConfig cfg = AgentConfig::defaults_for(Algorithm::RpiDqn);
  cfg.batch_size = 1;
  cfg.learning_starts = 0;
  Agent agent(cfg, spec, 17);

  MlpParams critic0 = agent.critic();  // snapshot before the update
  EnvState s0;
  Transition tr = step(spec, s0, 1);

  // Hand-compose the expected update from the public oracles.
  RowMatrix ns = Agent::to_row(obs_of(tr.next_state));
  TargetNets nets{&critic0, nullptr, nullptr};
  std::vector<double> y = compute_target(Algorithm::RpiDqn, ns, {tr.reward},
                                         {tr.terminated ? char(1) : char(0)}, nets,
                                         &critic0, cfg.discount, 0.2, 0.5, nullptr);
  ForwardCache cache = forward_cached(critic0, Agent::to_row(obs_of(tr.state)));
  auto lr = rpi_critic_loss({cache.out(0, 1)}, y, *cfg.rpi);
  RowMatrix dout = RowMatrix::Zero(1, 2);
  dout(0, 1) = lr.dloss_df[0];
  MlpParams expected = critic0;
  AdamState adam(expected.data.size());
  adam_step(expected, backward(critic0, cache, dout), adam, cfg.lr_critic);

  agent.train_step(tr);
  EXPECT_EQ(agent.critic().data, expected.data);
  EXPECT_DOUBLE_EQ(agent.last_loss(), lr.loss);
}

TEST(TrainStep, DeterministicAcrossIdenticalRuns) {
  EnvSpec spec = cartpole_discrete_spec();
  AgentConfig cfg = AgentConfig::defaults_for(Algorithm::Dqn);
  cfg.learning_starts = 100;
  Agent a(cfg, spec, 7), b(cfg, spec, 7);
  drive(a, spec, 1000, 7);
  drive(b, spec, 1000, 7);
  EXPECT_EQ(a.critic().data, b.critic().data);
  EXPECT_EQ(a.grad_steps(), b.grad_steps());
}

TEST(TrainStep, HardSyncMakesTargetBitIdentical) {
  EnvSpec spec = cartpole_discrete_spec();
  AgentConfig cfg = AgentConfig::defaults_for(Algorithm::Dqn);
  cfg.learning_starts = 10;
  cfg.batch_size = 8;
  cfg.target_update.period = 25;
  Agent agent(cfg, spec, 11);

  Rng env_rng(derive_seed(11, {1}));
  Rng explore_rng(derive_seed(11, {2}));
  EnvState s = reset(spec, env_rng);
  while (agent.target_sync_count() == 0) {
    double a = agent.act(obs_of(s), true, explore_rng);
    Transition tr = step(spec, s, static_cast<int>(a));
    agent.train_step(tr);
    s = (tr.terminated || tr.truncated) ? reset(spec, env_rng) : tr.next_state;
  }
  EXPECT_EQ(agent.critic_target().data, agent.critic().data);
  EXPECT_EQ(agent.grad_steps() % cfg.target_update.period, 0);
}

TEST(TrainStep, PolyakUpdateIsExact) {
  EnvSpec spec = cartpole_continuous_spec();
  AgentConfig cfg = AgentConfig::defaults_for(Algorithm::Ddpg);
  cfg.learning_starts = 64;
  Agent agent(cfg, spec, 13);
  drive(agent, spec, 80, 13);  // past warm-up, targets have drifted

  std::vector<double> target_old = agent.critic_target().data;
  Rng env_rng(derive_seed(99, {1}));
  EnvState s = reset(spec, env_rng);
  Rng explore_rng(derive_seed(99, {2}));
  double a = agent.act(obs_of(s), true, explore_rng);
  agent.train_step(step(spec, s, a));

  const double tau = cfg.target_update.tau;
  const std::vector<double>& online = agent.critic().data;
  const std::vector<double>& target = agent.critic_target().data;
  for (std::size_t i = 0; i < online.size(); ++i)
    EXPECT_DOUBLE_EQ(target[i], tau * online[i] + (1.0 - tau) * target_old[i]);
}

TEST(TrainStep, Td3DelaysActorUpdates) {
  EnvSpec spec = cartpole_continuous_spec();
  AgentConfig cfg = AgentConfig::defaults_for(Algorithm::Td3);
  cfg.learning_starts = 64;
  Agent agent(cfg, spec, 19);
  drive(agent, spec, 64, 19);
  ASSERT_EQ(agent.grad_steps(), 1);  // first gradient step is delayed (1 % 2 != 0)

  std::vector<double> actor_before = agent.actor()->data;
  drive(agent, spec, 1, 20);  // grad step 2: actor updates
  EXPECT_NE(agent.actor()->data, actor_before);

  actor_before = agent.actor()->data;
  drive(agent, spec, 1, 21);  // grad step 3: actor frozen
  EXPECT_EQ(agent.actor()->data, actor_before);
}

TEST(TrainStep, TenThousandRpiStepsStayFinite) {
  EnvSpec spec = cartpole_discrete_spec();
  AgentConfig cfg = AgentConfig::defaults_for(Algorithm::RpiDqn);
  cfg.critic_hidden1 = cfg.critic_hidden2 = 32;
  cfg.learning_starts = 100;
  Agent agent(cfg, spec, 23);
  drive(agent, spec, 10000, 23);
  EXPECT_TRUE(agent.critic().finite());
  EXPECT_TRUE(std::isfinite(agent.last_loss()));
  EXPECT_GT(agent.grad_steps(), 9000);
}

TEST(AgentConfig, ValidationRules) {
  AgentConfig cfg = AgentConfig::defaults_for(Algorithm::Dqn);
  cfg.rpi = RpiLossParams{};  // rpi block on a non-rpi algorithm
  EXPECT_THROW(cfg.validate(), std::invalid_argument);

  AgentConfig cfg2 = AgentConfig::defaults_for(Algorithm::RpiDqn);
  cfg2.rpi.reset();
  EXPECT_THROW(cfg2.validate(), std::invalid_argument);

  EXPECT_THROW(Agent(AgentConfig::defaults_for(Algorithm::Ddpg),
                     cartpole_discrete_spec(), 0),
               std::invalid_argument);
  EXPECT_THROW(Agent(AgentConfig::defaults_for(Algorithm::Dqn),
                     cartpole_continuous_spec(), 0),
               std::invalid_argument);
}
