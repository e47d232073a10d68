#include "rpi/mdp.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>

#include "test_helpers.hpp"

using namespace rpi;
using rpi::test::always;
using rpi::test::two_state_chain;

namespace {

// Independent fixed-point oracle: assemble (I - gamma P_mu) Q = r directly
// from first principles and solve it in test code.
QFunction solve_q_directly(const TabularMDP& mdp, const Policy& mu) {
  const int S = mdp.num_states, A = mdp.num_actions, n = S * A;
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd b(n);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      int row = s * A + a;
      b(row) = mdp.r(s, a);
      for (int s2 = 0; s2 < S; ++s2)
        for (int a2 = 0; a2 < A; ++a2)
          M(row, s2 * A + a2) -= mdp.discount * mdp.p(s, a, s2) * mu.prob(s2, a2);
    }
  Eigen::VectorXd x = M.colPivHouseholderQr().solve(b);
  QFunction q(S, A);
  for (int i = 0; i < n; ++i) q.values[i] = x(i);
  return q;
}

}  // namespace

TEST(TabularMdp, ValidatesRowsAndDiscount) {
  EXPECT_NO_THROW(two_state_chain());
  // Row not summing to one.
  std::vector<double> P = {0.5, 0.4, 0.0, 1.0};
  std::vector<double> r = {0.0, 0.0};
  EXPECT_THROW(TabularMDP(2, 1, P, r, 0.9), std::invalid_argument);
  // gamma = 1 rejected.
  std::vector<double> P2 = {1.0, 0.0, 0.0, 1.0};
  EXPECT_THROW(TabularMDP(2, 1, P2, r, 1.0), std::invalid_argument);
  // Negative probability rejected.
  std::vector<double> P3 = {1.5, -0.5, 0.0, 1.0};
  EXPECT_THROW(TabularMDP(2, 1, P3, r, 0.9), std::invalid_argument);
}

TEST(BellmanApply, DiscountZeroGivesReward) {
  Rng rng(7);
  TabularMDP mdp = make_random_mdp(4, 3, 0.0, rng);
  QFunction q(4, 3, 5.0);
  QFunction out = bellman_apply(mdp, always(1, 4, 3), q);
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 3; ++a) EXPECT_DOUBLE_EQ(out.at(s, a), mdp.r(s, a));
}

TEST(BellmanApply, ZeroInputReducesToReward) {
  TabularMDP mdp = two_state_chain();
  QFunction q(2, 2, 0.0);
  for (int a0 = 0; a0 < 2; ++a0) {
    QFunction out = bellman_apply(mdp, always(a0, 2, 2), q);
    EXPECT_DOUBLE_EQ(out.at(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(out.at(1, 1), 1.0);
  }
}

TEST(BellmanApply, ExactQIsFixedPoint) {
  TabularMDP mdp = two_state_chain();
  Policy mu = always(1, 2, 2);
  QFunction q = solve_q_directly(mdp, mu);
  EXPECT_NEAR(q.at(0, 1), 2.0, 1e-12);
  EXPECT_NEAR(q.at(1, 0), 2.0, 1e-12);
  QFunction tq = bellman_apply(mdp, mu, q);
  EXPECT_LT(max_abs_diff(tq, q), 1e-12);
  // Input untouched.
  EXPECT_NEAR(q.at(0, 1), 2.0, 1e-12);
}

TEST(BellmanApply, ShapeMismatchThrows) {
  TabularMDP mdp = two_state_chain();
  QFunction wrong(3, 2, 0.0);
  EXPECT_THROW(bellman_apply(mdp, always(0, 2, 2), wrong), std::invalid_argument);
  EXPECT_THROW(bellman_apply(mdp, always(0, 3, 2), QFunction(2, 2)), std::invalid_argument);
}

TEST(ExactPolicyEval, ZeroRewardGivesZero) {
  TabularMDP mdp = two_state_chain();
  std::fill(mdp.reward.begin(), mdp.reward.end(), 0.0);
  QFunction q = exact_policy_eval(mdp, always(1, 2, 2));
  for (double v : q.values) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(ExactPolicyEval, UnitRewardGeometricSeries) {
  Rng rng(3);
  TabularMDP mdp = make_random_mdp(6, 2, 0.99, rng);
  std::fill(mdp.reward.begin(), mdp.reward.end(), 1.0);
  QFunction q = exact_policy_eval(mdp, always(0, 6, 2));
  for (double v : q.values) EXPECT_NEAR(v, 100.0, 1e-8);
}

TEST(ExactPolicyEval, TwoStateChain) {
  TabularMDP mdp = two_state_chain();
  QFunction q = exact_policy_eval(mdp, always(1, 2, 2));
  EXPECT_NEAR(q.at(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(q.at(0, 1), 2.0, 1e-12);
  EXPECT_NEAR(q.at(1, 0), 2.0, 1e-12);
  EXPECT_NEAR(q.at(1, 1), 2.0, 1e-12);
}

TEST(ExactPolicyEval, FixedPointWithinTolOnRandomMdps) {
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    int S = 2 + rng.uniform_int(9);
    int A = 1 + rng.uniform_int(4);
    TabularMDP mdp = make_random_mdp(S, A, rng.uniform(0.5, 0.99), rng);
    std::vector<int> acts(S);
    for (int& a : acts) a = rng.uniform_int(A);
    Policy mu = Policy::deterministic(acts, A);
    QFunction q = exact_policy_eval(mdp, mu);
    EXPECT_LE(max_abs_diff(bellman_apply(mdp, mu, q), q), 1e-10);
    EXPECT_LT(max_abs_diff(q, solve_q_directly(mdp, mu)), 1e-9);
  }
}

TEST(GreedyPolicy, TieBreaksToLowestIndex) {
  QFunction q(3, 2, 0.0);
  Policy pi = greedy_policy(q);
  for (int s = 0; s < 3; ++s) EXPECT_EQ(pi.actions[s], 0);
}

TEST(GreedyPolicy, DirectArgmax) {
  QFunction q(2, 2, {1.0, 2.0, 5.0, 3.0});
  Policy pi = greedy_policy(q);
  EXPECT_EQ(pi.actions[0], 1);
  EXPECT_EQ(pi.actions[1], 0);
}

TEST(GreedyPolicy, ShiftInvariant) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    QFunction q(4, 3);
    for (double& v : q.values) v = rng.uniform(-10.0, 10.0);
    QFunction shifted = q;
    double c = rng.uniform(-100.0, 100.0);
    for (double& v : shifted.values) v += c;
    EXPECT_EQ(greedy_policy(q).actions, greedy_policy(shifted).actions);
  }
}

TEST(ClassicalPolicyIteration, DominantActionConvergesFast) {
  // Action 1 strictly dominates in every state.
  Rng rng(9);
  TabularMDP mdp = make_random_mdp(5, 2, 0.9, rng);
  for (int s = 0; s < 5; ++s) {
    mdp.reward[s * 2 + 0] = -1.0;
    mdp.reward[s * 2 + 1] = 1.0;
    // Make both actions share dynamics so the reward gap decides.
    for (int s2 = 0; s2 < 5; ++s2)
      mdp.transition[(s * 2 + 1) * 5 + s2] = mdp.transition[(s * 2 + 0) * 5 + s2];
  }
  auto res = classical_policy_iteration(mdp, always(0, 5, 2));
  EXPECT_LE(res.iterations, 2);
  for (int s = 0; s < 5; ++s) EXPECT_EQ(res.policy.actions[s], 1);
}

TEST(ClassicalPolicyIteration, TwoStateChain) {
  TabularMDP mdp = two_state_chain();
  auto res = classical_policy_iteration(mdp, always(0, 2, 2));
  EXPECT_EQ(res.policy.actions[0], 1);
  EXPECT_EQ(res.policy.actions[1], 0);  // tie at s1, lowest index
  EXPECT_NEAR(res.q.at(0, 1), 2.0, 1e-12);
}

TEST(ClassicalPolicyIteration, MatchesValueIterationOracle) {
  Rng rng(21);
  TabularMDP mdp = make_random_mdp(5, 3, 0.9, rng);
  auto res = classical_policy_iteration(mdp, always(0, 5, 3));
  QFunction qstar = value_iteration(mdp, 1e-12);
  EXPECT_LT(max_abs_diff(res.q, qstar), 1e-8);
}

TEST(ClassicalPolicyIteration, ExactQNonDecreasingAcrossIterates) {
  Rng rng(33);
  for (int trial = 0; trial < 30; ++trial) {
    int S = 2 + rng.uniform_int(7);
    int A = 2 + rng.uniform_int(3);
    TabularMDP mdp = make_random_mdp(S, A, rng.uniform(0.5, 0.95), rng);
    std::vector<QFunction> trace;
    classical_policy_iteration(mdp, always(0, S, A), &trace);
    for (std::size_t k = 1; k < trace.size(); ++k)
      for (std::size_t i = 0; i < trace[k].values.size(); ++i)
        EXPECT_GE(trace[k].values[i], trace[k - 1].values[i] - 1e-9);
  }
}

TEST(ValueIteration, UnitRewardHalfDiscount) {
  Rng rng(17);
  TabularMDP mdp = make_random_mdp(4, 2, 0.5, rng);
  std::fill(mdp.reward.begin(), mdp.reward.end(), 1.0);
  QFunction q = value_iteration(mdp, 1e-12);
  for (double v : q.values) EXPECT_NEAR(v, 2.0, 1e-10);
}

TEST(ValueIteration, DiscountZeroIsRewardAfterOneSweep) {
  Rng rng(18);
  TabularMDP mdp = make_random_mdp(4, 2, 0.0, rng);
  QFunction q = value_iteration(mdp, 1e-12);
  for (int i = 0; i < mdp.sa_size(); ++i) EXPECT_DOUBLE_EQ(q.values[i], mdp.reward[i]);
}

TEST(ValueIteration, TwoStateChainOptimum) {
  TabularMDP mdp = two_state_chain();
  QFunction q = value_iteration(mdp, 1e-12);
  EXPECT_NEAR(q.at(0, 0), 1.0, 1e-10);
  EXPECT_NEAR(q.at(0, 1), 2.0, 1e-10);
  EXPECT_NEAR(q.at(1, 0), 2.0, 1e-10);
  EXPECT_NEAR(q.at(1, 1), 2.0, 1e-10);
}

TEST(BellmanProperties, MonotoneAndContractive) {
  Rng rng(41);
  for (int trial = 0; trial < 40; ++trial) {
    int S = 2 + rng.uniform_int(6);
    int A = 1 + rng.uniform_int(3);
    TabularMDP mdp = make_random_mdp(S, A, rng.uniform(0.1, 0.99), rng);
    std::vector<int> acts(S);
    for (int& a : acts) a = rng.uniform_int(A);
    Policy mu = Policy::deterministic(acts, A);

    QFunction q1(S, A), q2(S, A);
    for (int i = 0; i < S * A; ++i) {
      q1.values[i] = rng.uniform(-5.0, 5.0);
      q2.values[i] = q1.values[i] + rng.uniform(0.0, 3.0);  // q2 >= q1
    }
    QFunction t1 = bellman_apply(mdp, mu, q1);
    QFunction t2 = bellman_apply(mdp, mu, q2);
    for (int i = 0; i < S * A; ++i) EXPECT_GE(t2.values[i], t1.values[i] - 1e-12);
    EXPECT_LE(max_abs_diff(t1, t2), mdp.discount * max_abs_diff(q1, q2) + 1e-12);
  }
}

TEST(MdpSerialization, RoundTripsExactly) {
  Rng rng(55);
  TabularMDP mdp = make_random_mdp(6, 3, 0.937, rng);
  auto path = std::filesystem::temp_directory_path() / "rpi_mdp_roundtrip.txt";
  save_mdp(mdp, path.string());
  TabularMDP back = load_mdp(path.string());
  EXPECT_EQ(back.num_states, mdp.num_states);
  EXPECT_EQ(back.num_actions, mdp.num_actions);
  EXPECT_EQ(back.discount, mdp.discount);
  EXPECT_EQ(back.transition, mdp.transition);
  EXPECT_EQ(back.reward, mdp.reward);
  std::filesystem::remove(path);
}

TEST(MdpSerialization, RejectsBadFiles) {
  auto path = std::filesystem::temp_directory_path() / "rpi_mdp_bad.txt";
  {
    std::ofstream out(path);
    out << "not-an-mdp 1\n";
  }
  EXPECT_THROW(load_mdp(path.string()), std::runtime_error);
  EXPECT_THROW(load_mdp("/nonexistent/nowhere.txt"), std::runtime_error);
  std::filesystem::remove(path);
}
