#include "rlscale/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "rlscale/io.hpp"
#include "test_util.hpp"

namespace rlscale {
namespace {

using rlscale::testing::make_problem;
using rlscale::testing::state_with_logits;

TEST(GroupAdvantages, ZeroVarianceGivesZeros) {
  const std::vector<double> rewards = {1.0, 1.0, 1.0, 1.0};
  for (bool std_norm : {false, true}) {
    const auto adv = group_advantages(rewards, std_norm);
    for (double a : adv) EXPECT_EQ(a, 0.0);
  }
  const auto single = group_advantages(std::vector<double>{1.0}, true);
  EXPECT_EQ(single[0], 0.0);
}

TEST(GroupAdvantages, SymmetricPair) {
  const auto adv = group_advantages(std::vector<double>{1.0, 0.0}, true);
  EXPECT_NEAR(adv[0], 1.0, 1e-12);
  EXPECT_NEAR(adv[1], -1.0, 1e-12);
}

TEST(GroupAdvantages, OneHotGroupClosedForm) {
  const auto adv = group_advantages(std::vector<double>{1.0, 0.0, 0.0, 0.0}, true);
  EXPECT_NEAR(adv[0], 1.7320508, 1e-6);
  for (int j = 1; j < 4; ++j) EXPECT_NEAR(adv[j], -0.5773503, 1e-6);
}

TEST(GroupAdvantages, SumToZeroProperty) {
  Rng rng(21);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 1 + rng.uniform_int(32);
    std::vector<double> rewards(n);
    const bool binary = rng.uniform() < 0.5;
    for (double& r : rewards) r = binary ? static_cast<double>(rng.uniform_int(2)) : rng.uniform();
    const auto adv = group_advantages(rewards, rng.uniform() < 0.5);
    double sum = 0.0;
    for (double a : adv) sum += a;
    ASSERT_LE(std::abs(sum), 1e-9);
  }
}

TEST(GroupAdvantagesDecoupled, SubsampleSharesFullStatistics) {
  const std::vector<double> rewards = {1.0, 0.0, 0.0, 0.0};
  const std::vector<int> subsample = {0};
  const auto adv = group_advantages_decoupled(rewards, subsample, true);
  ASSERT_EQ(adv.size(), 1u);
  EXPECT_NEAR(adv[0], 1.7320508, 1e-6);
}

TEST(GroupAdvantagesDecoupled, FullSampleIdentity) {
  const std::vector<double> rewards = {1.0, 0.0, 1.0, 1.0, 0.0};
  const std::vector<int> all = {0, 1, 2, 3, 4};
  const auto a = group_advantages_decoupled(rewards, all, true);
  const auto b = group_advantages(rewards, true);
  for (std::size_t j = 0; j < rewards.size(); ++j) EXPECT_EQ(a[j], b[j]);
}

TEST(GroupAdvantagesDecoupled, AllEqualGivesZerosAndDuplicatesThrow) {
  const std::vector<double> rewards = {1.0, 1.0, 1.0};
  const std::vector<int> sub = {1, 2};
  const auto adv = group_advantages_decoupled(rewards, sub, true);
  for (double a : adv) EXPECT_EQ(a, 0.0);
  const std::vector<int> dup = {1, 1};
  EXPECT_THROW(group_advantages_decoupled(rewards, dup, true), ValidationError);
}

TEST(LrForBatch, ThreeRules) {
  EXPECT_EQ(lr_for_batch(LrRule::kSqrt, 1e-6, 1024, 1024), 1e-6);
  EXPECT_NEAR(lr_for_batch(LrRule::kSqrt, 1e-6, 1024, 8192), 2.8284271e-6, 1e-12);
  EXPECT_NEAR(lr_for_batch(LrRule::kSqrt, 1e-6, 1024, 8192) / 2.8284271247461903e-6, 1.0, 1e-12);
  EXPECT_NEAR(lr_for_batch(LrRule::kLinear, 1e-6, 1024, 4096), 4e-6, 1e-18);
  EXPECT_EQ(lr_for_batch(LrRule::kConstant, 1e-6, 1024, 65536), 1e-6);
}

// Hand enumeration for K=2, p=0.5, n=2, mean-centering only: outcomes (C,W)
// and (W,C) each contribute +0.25 in the correct-logit coordinate with
// probability 0.25 each -> expected update 0.125.
TEST(ExpectedUpdateOracle, HandEnumeratedCase) {
  PolicyState st = state_with_logits({0.0, 0.0});
  const Problem pr = make_problem(0, 2, {0}, {1.0});
  const auto upd = expected_update_oracle(st, pr, 2, BaselineMode::kGroupMean, false);
  EXPECT_NEAR(upd[0], 0.125, 1e-12);
  EXPECT_NEAR(upd[1], -0.125, 1e-12);
}

// With advantage = raw reward the expected update is exactly independent of n
// and equals the closed-form policy gradient E[r grad log pi].
TEST(ExpectedUpdateOracle, FixedBaselineIndependentOfN) {
  for (int num_arms : {2, 3}) {
    std::vector<double> logits(num_arms, 0.0);
    logits[0] = calibrate_logit_offset(0.3, num_arms, 1);
    PolicyState st = state_with_logits(logits);
    const Problem pr = make_problem(0, num_arms, {0},
                                    std::vector<double>{1.0});
    const auto probs = st.action_probs(pr);
    const double p = probs[0];
    const auto u1 = expected_update_oracle(st, pr, 1, BaselineMode::kNone, false);
    const auto u2 = expected_update_oracle(st, pr, 2, BaselineMode::kNone, false);
    const auto u3 = expected_update_oracle(st, pr, 3, BaselineMode::kNone, false);
    for (int a = 0; a < num_arms; ++a) {
      EXPECT_NEAR(u1[a], u2[a], 1e-12);
      EXPECT_NEAR(u2[a], u3[a], 1e-12);
      const double closed_form = a == 0 ? p * (1.0 - p) : -p * probs[a];
      EXPECT_NEAR(u1[a], closed_form, 1e-12);
    }
  }
}

// Group mean-centering shrinks the exact advantage policy gradient by
// (n-1)/n. The exact gradient sum_a pi_a (r_a - p)(onehot - pi) is computed
// here independently.
TEST(ExpectedUpdateOracle, MeanCenteredShrinkage) {
  for (int num_arms : {2, 3}) {
    std::vector<double> logits(num_arms, 0.0);
    logits[0] = calibrate_logit_offset(0.4, num_arms, 1);
    PolicyState st = state_with_logits(logits);
    const Problem pr = make_problem(0, num_arms, {0}, std::vector<double>{1.0});
    const auto probs = st.action_probs(pr);
    const double p = probs[0];
    std::vector<double> exact_pg(num_arms, 0.0);
    for (int a = 0; a < num_arms; ++a) {
      const double reward = a == 0 ? 1.0 : 0.0;
      for (int b = 0; b < num_arms; ++b) {
        exact_pg[b] += probs[a] * (reward - p) * ((a == b ? 1.0 : 0.0) - probs[b]);
      }
    }
    for (int n : {2, 3, 4}) {
      const auto upd = expected_update_oracle(st, pr, n, BaselineMode::kGroupMean, false);
      const double shrink = static_cast<double>(n - 1) / n;
      for (int a = 0; a < num_arms; ++a) {
        EXPECT_NEAR(upd[a], shrink * exact_pg[a], 1e-12);
      }
    }
  }
}

TEST(ExpectedUpdateOracle, RefusesHugeEnumerations) {
  PolicyState st = state_with_logits({0.0, 0.0, 0.0, 0.0});
  const Problem pr = make_problem(0, 4, {0}, {1.0});
  EXPECT_THROW(expected_update_oracle(st, pr, 12, BaselineMode::kGroupMean, false),
               ValidationError);
}

// Monte-Carlo mean of train_step updates matches the enumeration oracle
// (single problem, lr pinned to 1 so the tabular delta IS the estimate).
TEST(TrainStep, MonteCarloMatchesOracle) {
  const Population pop = rlscale::testing::make_band_population(1, 1, 0.5, 0.5, 2, 4, 1, 3);
  TrainConfig cfg;
  cfg.problem_batch = 1;
  cfg.group_size = 2;
  cfg.lr_rule = LrRule::kConstant;
  cfg.eta_base = 1.0;
  cfg.std_normalize = false;
  cfg.lambda = 0.0;

  const PolicyState st0 = PolicyState::calibrated(pop, 0.0);
  const auto oracle = expected_update_oracle(st0, pop.train[0], cfg.group_size,
                                             BaselineMode::kGroupMean, cfg.std_normalize);
  Rng rng(31);
  const int samples = 20000;
  double mean = 0.0, mean_sq = 0.0;
  const std::vector<int> batch = {0};
  for (int s = 0; s < samples; ++s) {
    PolicyState st = st0;
    train_step(st, pop, batch, cfg, rng);
    const double delta = st.tabular_bias()[0] - st0.tabular_bias()[0];
    mean += delta;
    mean_sq += delta * delta;
  }
  mean /= samples;
  mean_sq /= samples;
  const double se = std::sqrt(std::max(mean_sq - mean * mean, 0.0) / samples);
  EXPECT_NEAR(mean, oracle[0], 5.0 * se + 1e-12);
}

TEST(TrainStep, ZeroVarianceFilterLeavesStateBitExact) {
  // target_p0 = 1 clamps to a certain-success policy: every group is
  // all-equal. With the filter on, nothing may move, including the entropy
  // and KL terms.
  const Population pop = rlscale::testing::make_band_population(6, 2, 1.0, 1.0, 4, 4, 2, 17);
  PolicyState st = PolicyState::calibrated(pop, 0.5);
  const std::vector<double> tab_before(st.tabular_bias().begin(), st.tabular_bias().end());
  const std::vector<double> shared_before(st.shared_weights().begin(), st.shared_weights().end());
  TrainConfig cfg;
  cfg.problem_batch = 6;
  cfg.group_size = 4;
  cfg.zero_variance_filter = true;
  cfg.entropy_coef = 0.3;
  cfg.kl_coef = 0.7;
  cfg.lambda = 0.5;
  Rng rng(41);
  const std::vector<int> batch = {0, 1, 2, 3, 4, 5};
  train_step(st, pop, batch, cfg, rng);
  EXPECT_TRUE(std::equal(tab_before.begin(), tab_before.end(), st.tabular_bias().begin()));
  EXPECT_TRUE(std::equal(shared_before.begin(), shared_before.end(), st.shared_weights().begin()));
}

TEST(TrainStep, WithoutFilterRegularizersStillApply) {
  const Population pop = rlscale::testing::make_band_population(2, 1, 1.0, 1.0, 4, 4, 2, 17);
  PolicyState st = PolicyState::calibrated(pop, 0.0);
  const std::vector<double> tab_before(st.tabular_bias().begin(), st.tabular_bias().end());
  TrainConfig cfg;
  cfg.problem_batch = 2;
  cfg.group_size = 4;
  cfg.zero_variance_filter = false;
  cfg.entropy_coef = 0.5;
  Rng rng(42);
  const std::vector<int> batch = {0, 1};
  train_step(st, pop, batch, cfg, rng);
  bool changed = false;
  for (std::size_t i = 0; i < tab_before.size(); ++i) {
    changed = changed || tab_before[i] != st.tabular_bias()[i];
  }
  EXPECT_TRUE(changed);
}

TEST(TrainStep, LargeKlCoefficientReducesDrift) {
  const Population pop = rlscale::testing::make_band_population(40, 10, 0.3, 0.6, 4, 8, 4, 23);
  TrainConfig cfg;
  cfg.problem_batch = 8;
  cfg.group_size = 4;
  cfg.total_steps = 60;
  cfg.eta_base = 0.3;
  cfg.seed = 5;
  cfg.lambda = 0.0;

  TrainConfig anchored = cfg;
  anchored.kl_coef = 1000.0;
  const RunLog free_run = run_training(pop, cfg);
  const RunLog anchored_run = run_training(pop, anchored);
  EXPECT_LT(anchored_run.records.back().kl, free_run.records.back().kl);
}

TEST(RunTraining, ZeroStepsGivesOnlyStepZeroRecord) {
  const Population pop = rlscale::testing::make_band_population(10, 5, 0.3, 0.6);
  TrainConfig cfg;
  cfg.total_steps = 0;
  cfg.problem_batch = 4;
  const RunLog log = run_training(pop, cfg);
  ASSERT_EQ(log.records.size(), 1u);
  EXPECT_EQ(log.records[0].step, 0);
  EXPECT_EQ(log.records[0].compute, 0.0);
}

TEST(RunTraining, DeterministicGivenSeed) {
  const Population pop = rlscale::testing::make_band_population(30, 10, 0.3, 0.6, 6, 8, 4, 19);
  TrainConfig cfg;
  cfg.problem_batch = 8;
  cfg.group_size = 4;
  cfg.total_steps = 40;
  cfg.lambda = 0.5;
  cfg.seed = 12345;
  RunLog a = run_training(pop, cfg, "x");
  RunLog b = run_training(pop, cfg, "x");
  EXPECT_EQ(runlog_to_csv(a), runlog_to_csv(b));
  EXPECT_TRUE(std::equal(a.final_state.tabular_bias().begin(), a.final_state.tabular_bias().end(),
                         b.final_state.tabular_bias().begin()));
}

TEST(RunTraining, LearnsOnEasyBandAcrossSeeds) {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const Population pop = rlscale::testing::make_band_population(100, 50, 0.3, 0.6, 8, 16, 8, seed);
    TrainConfig cfg;
    cfg.problem_batch = 16;
    cfg.group_size = 8;
    cfg.total_steps = 300;
    cfg.eval_every = 300;
    cfg.lambda = 0.5;
    cfg.eta_base = 0.5;
    cfg.seed = seed;
    const RunLog log = run_training(pop, cfg);
    EXPECT_GT(log.records.back().val_avg, log.records.front().val_avg) << "seed " << seed;
  }
}

TEST(RunTraining, EvalCadenceAndComputeAccounting) {
  const Population pop = rlscale::testing::make_band_population(10, 4, 0.3, 0.6, 4, 4, 2, 29);
  TrainConfig cfg;
  cfg.problem_batch = 3;
  cfg.group_size = 2;
  cfg.estimation_group_size = 6;
  cfg.total_steps = 10;
  cfg.eval_every = 4;
  const RunLog log = run_training(pop, cfg);
  // Records at steps 0, 4, 8 and the final step 10.
  ASSERT_EQ(log.records.size(), 4u);
  EXPECT_EQ(log.records[1].step, 4);
  EXPECT_EQ(log.records[3].step, 10);
  for (const StepRecord& r : log.records) {
    EXPECT_EQ(r.compute, static_cast<double>(r.step) * 3.0 * 6.0);
  }
  // M / eval_every + 1 when eval_every divides M.
  TrainConfig cfg2 = cfg;
  cfg2.eval_every = 5;
  const RunLog log2 = run_training(pop, cfg2);
  EXPECT_EQ(log2.records.size(), 3u);
}

TEST(RunTraining, DecoupledBaselineUsesMatchedStatistics) {
  const Population pop = rlscale::testing::make_band_population(10, 4, 0.4, 0.6, 4, 4, 2, 31);
  TrainConfig cfg;
  cfg.problem_batch = 4;
  cfg.group_size = 4;
  cfg.estimation_group_size = 16;
  cfg.total_steps = 5;
  const RunLog log = run_training(pop, cfg);
  EXPECT_EQ(log.records.back().compute, 5.0 * 4.0 * 16.0);
}

// Raw-advantage estimator: the variance of the per-problem averaged update
// scales as 1/n (log-log slope -1 +- 0.2 over n in {1,2,4,8,16}).
TEST(Estimator, VarianceScalesInverselyWithGroupSize) {
  std::vector<double> logits = {calibrate_logit_offset(0.4, 3, 1), 0.0, 0.0};
  PolicyState st = state_with_logits(logits);
  const Problem pr = make_problem(0, 3, {0}, {1.0});
  const auto probs = st.action_probs(pr);
  Rng rng(37);
  std::vector<double> log_n, log_var;
  for (int n : {1, 2, 4, 8, 16}) {
    const int samples = 20000;
    std::vector<double> mean(3, 0.0), mean_sq(3, 0.0);
    std::vector<double> u(3);
    for (int s = 0; s < samples; ++s) {
      std::fill(u.begin(), u.end(), 0.0);
      for (int j = 0; j < n; ++j) {
        const int a = sample_categorical(probs, rng);
        const double r = pr.is_correct(a) ? 1.0 : 0.0;
        if (r != 0.0) {
          for (int b = 0; b < 3; ++b) u[b] += r * ((a == b ? 1.0 : 0.0) - probs[b]);
        }
      }
      for (int b = 0; b < 3; ++b) {
        u[b] /= n;
        mean[b] += u[b];
        mean_sq[b] += u[b] * u[b];
      }
    }
    double total_var = 0.0;
    for (int b = 0; b < 3; ++b) {
      mean[b] /= samples;
      total_var += mean_sq[b] / samples - mean[b] * mean[b];
    }
    log_n.push_back(std::log(static_cast<double>(n)));
    log_var.push_back(std::log(total_var));
  }
  const double slope = rlscale::testing::least_squares_slope(log_n, log_var);
  EXPECT_NEAR(slope, -1.0, 0.2);
}

}  // namespace
}  // namespace rlscale
