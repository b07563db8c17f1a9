#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rlscale/error.hpp"
#include "rlscale/metrics.hpp"
#include "rlscale/policy.hpp"
#include "rlscale/population.hpp"
#include "rlscale/rng.hpp"

namespace rlscale {

enum class LrRule { kConstant, kLinear, kSqrt };

// Advantage baseline: kGroupMean is the usual group-normalized estimator;
// kNone uses the raw 0/1 rewards (plain averaged policy gradient, the
// single-problem tabular base case where the expected update is independent
// of the group size).
enum class BaselineMode { kGroupMean, kNone };

inline std::string to_string(LrRule rule) {
  switch (rule) {
    case LrRule::kConstant: return "constant";
    case LrRule::kLinear: return "linear";
    case LrRule::kSqrt: return "sqrt";
  }
  return "constant";
}

inline LrRule lr_rule_from_string(const std::string& s) {
  if (s == "constant") return LrRule::kConstant;
  if (s == "linear") return LrRule::kLinear;
  if (s == "sqrt") return LrRule::kSqrt;
  throw ValidationError("trainer: unknown lr_rule '" + s + "'");
}

inline std::string to_string(BaselineMode mode) {
  return mode == BaselineMode::kGroupMean ? "group" : "none";
}

inline BaselineMode baseline_from_string(const std::string& s) {
  if (s == "group") return BaselineMode::kGroupMean;
  if (s == "none") return BaselineMode::kNone;
  throw ValidationError("trainer: unknown baseline '" + s + "'");
}

struct TrainConfig {
  int problem_batch = 32;        // B_p: unique problems per step
  int group_size = 8;            // n: parallel rollouts per problem
  int total_steps = 100;         // M: sequential updates
  LrRule lr_rule = LrRule::kSqrt;
  double eta_base = 0.05;        // learning rate at batch_ref
  double batch_ref = 1024.0;     // B_ref
  double entropy_coef = 0.0;     // beta
  double kl_coef = 0.0;          // gamma
  bool zero_variance_filter = false;
  bool std_normalize = true;
  int estimation_group_size = 0;  // n_est; 0 = same as group_size
  int eval_every = 1;             // 0 = resolved by the sweep runner
  std::uint64_t seed = 0;
  double lambda = 0.0;            // policy interference coefficient
  BaselineMode baseline = BaselineMode::kGroupMean;

  int rollouts_per_problem() const { return std::max(group_size, estimation_group_size); }

  void validate() const {
    require(problem_batch >= 1, "trainer: B_p must be >= 1");
    require(group_size >= 1, "trainer: n must be >= 1");
    require(total_steps >= 0, "trainer: M must be >= 0");
    require(eta_base > 0.0, "trainer: eta_base must be > 0");
    require(batch_ref > 0.0, "trainer: B_ref must be > 0");
    require(entropy_coef >= 0.0, "trainer: entropy_coef must be >= 0");
    require(kl_coef >= 0.0, "trainer: kl_coef must be >= 0");
    require(estimation_group_size == 0 || estimation_group_size >= group_size,
            "trainer: n_est must be >= n");
    require(eval_every >= 0, "trainer: eval_every must be >= 0");
    require(lambda >= 0.0 && lambda <= 1.0, "trainer: lambda must lie in [0,1]");
  }
};

struct StepRecord {
  long long step = 0;
  double compute = 0.0;  // cumulative rollouts = step * B_p * max(n, n_est)
  double train_reward = 0.0;
  double val_avg = 0.0;
  double val_best4 = 0.0;
  double val_worst4 = 0.0;
  double zero_pass_frac = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  double lr = 0.0;
};

struct RunLog {
  std::string run_id;
  TrainConfig config;
  std::vector<StepRecord> records;
  PolicyState final_state;
  std::string checkpoint;  // path of the final policy snapshot, if saved
};

// Group-normalized advantages: center by the group mean and, optionally,
// divide by the population (1/n) standard deviation floored at 1e-6.
// All-equal groups give all-zero advantages regardless of flags.
inline std::vector<double> group_advantages(std::span<const double> rewards, bool std_normalize) {
  require(!rewards.empty(), "advantages: group must be non-empty");
  const double n = static_cast<double>(rewards.size());
  const bool all_equal =
      std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; });
  if (all_equal) return std::vector<double>(rewards.size(), 0.0);
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  std::vector<double> adv(rewards.size());
  double var = 0.0;
  for (std::size_t j = 0; j < rewards.size(); ++j) {
    adv[j] = rewards[j] - mean;
    var += adv[j] * adv[j];
  }
  if (std_normalize) {
    const double scale = std::max(std::sqrt(var / n), 1e-6);
    for (double& a : adv) a /= scale;
  }
  return adv;
}

// Decoupled baseline: statistics over all n_est rewards, advantages returned
// only for the distinct subsample used in the update.
inline std::vector<double> group_advantages_decoupled(std::span<const double> rewards_est,
                                                      std::span<const int> subsample_indices,
                                                      bool std_normalize) {
  require(!rewards_est.empty(), "advantages: estimation group must be non-empty");
  require(subsample_indices.size() <= rewards_est.size(),
          "advantages: subsample larger than estimation group");
  std::vector<bool> seen(rewards_est.size(), false);
  for (int idx : subsample_indices) {
    require(idx >= 0 && idx < static_cast<int>(rewards_est.size()),
            "advantages: subsample index out of range");
    require(!seen[idx], "advantages: duplicate subsample index");
    seen[idx] = true;
  }
  const std::vector<double> full = group_advantages(rewards_est, std_normalize);
  std::vector<double> out;
  out.reserve(subsample_indices.size());
  for (int idx : subsample_indices) out.push_back(full[idx]);
  return out;
}

inline double lr_for_batch(LrRule rule, double eta_base, double batch_ref, double batch) {
  require(batch >= 1.0, "lr: batch must be >= 1");
  switch (rule) {
    case LrRule::kConstant: return eta_base;
    case LrRule::kLinear: return eta_base * (batch / batch_ref);
    case LrRule::kSqrt: return eta_base * std::sqrt(batch / batch_ref);
  }
  return eta_base;
}

struct StepStats {
  double mean_reward = 0.0;  // over all sampled rollouts of the step
};

// One GRPO-style update over a batch of problems. All groups are sampled from
// the pre-update policy, per-problem gradients accumulated, then a single
// ascent step applied with lr_for_batch(B = B_p * n).
//
// Zero-variance filtering drops a problem's contribution to the policy,
// entropy and KL terms alike and does not renormalize the 1/B_p weighting.
inline StepStats train_step(PolicyState& state, const Population& pop,
                            std::span<const int> batch_train_indices, const TrainConfig& cfg,
                            Rng& rng) {
  const int n = cfg.group_size;
  const int n_tot = cfg.rollouts_per_problem();
  const bool decoupled = n_tot > n;
  const int num_arms = state.num_arms();
  const double batch_weight = static_cast<double>(batch_train_indices.size());

  struct PendingUpdate {
    const Problem* problem;
    std::vector<double> logit_grad;
  };
  std::vector<PendingUpdate> updates;
  updates.reserve(batch_train_indices.size());

  std::vector<double> probs(num_arms);
  std::vector<double> base_probs(num_arms);
  std::vector<double> scratch(num_arms);
  std::vector<int> actions(n_tot);
  std::vector<double> rewards(n_tot);
  std::vector<int> subsample;

  double reward_total = 0.0;
  for (int idx : batch_train_indices) {
    const Problem& pr = pop.train[static_cast<std::size_t>(idx)];
    state.action_probs_into(pr, probs);
    for (int j = 0; j < n_tot; ++j) {
      const int a = sample_categorical(probs, rng);
      actions[j] = a;
      rewards[j] = pr.is_correct(a) ? 1.0 : 0.0;
      reward_total += rewards[j];
    }
    if (decoupled) {
      // Partial Fisher-Yates: n distinct positions out of n_tot.
      subsample.resize(n_tot);
      std::iota(subsample.begin(), subsample.end(), 0);
      for (int j = 0; j < n; ++j) {
        const int swap = j + rng.uniform_int(n_tot - j);
        std::swap(subsample[j], subsample[swap]);
      }
      subsample.resize(n);
    }

    const bool zero_variance =
        std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; });
    if (zero_variance && cfg.zero_variance_filter) continue;

    std::vector<double> adv;
    std::span<const int> update_actions;
    std::vector<int> picked_actions;
    if (decoupled) {
      if (cfg.baseline == BaselineMode::kNone) {
        adv.reserve(n);
        for (int j : subsample) adv.push_back(rewards[j]);
      } else {
        adv = group_advantages_decoupled(rewards, subsample, cfg.std_normalize);
      }
      picked_actions.reserve(n);
      for (int j : subsample) picked_actions.push_back(actions[j]);
      update_actions = picked_actions;
    } else {
      if (cfg.baseline == BaselineMode::kNone) {
        adv.assign(rewards.begin(), rewards.end());
      } else {
        adv = group_advantages(rewards, cfg.std_normalize);
      }
      update_actions = actions;
    }

    // (1/(B_p*n)) sum_j A_j grad log pi(a_j), folded into logit coordinates:
    // g[a] = (sum_{j: a_j=a} A_j - (sum_j A_j) * pi_a) / (B_p*n).
    std::vector<double> g(num_arms, 0.0);
    double adv_sum = 0.0;
    for (std::size_t j = 0; j < adv.size(); ++j) {
      g[update_actions[j]] += adv[j];
      adv_sum += adv[j];
    }
    const double inv = 1.0 / (batch_weight * static_cast<double>(n));
    for (int a = 0; a < num_arms; ++a) g[a] = (g[a] - adv_sum * probs[a]) * inv;

    if (cfg.entropy_coef > 0.0) {
      const double h = entropy_of(probs);
      entropy_logit_grad(probs, h, scratch);
      for (int a = 0; a < num_arms; ++a) g[a] += cfg.entropy_coef / batch_weight * scratch[a];
    }
    if (cfg.kl_coef > 0.0) {
      state.base_action_probs_into(pr, base_probs);
      const double kl = kl_between(probs, base_probs);
      kl_logit_grad(probs, base_probs, kl, scratch);
      for (int a = 0; a < num_arms; ++a) g[a] -= cfg.kl_coef / batch_weight * scratch[a];
    }
    updates.push_back({&pr, std::move(g)});
  }

  const double lr = lr_for_batch(cfg.lr_rule, cfg.eta_base, cfg.batch_ref,
                                 static_cast<double>(cfg.problem_batch) * n);
  for (const PendingUpdate& u : updates) state.apply_logit_step(*u.problem, u.logit_grad, lr);
  if (!updates.empty() && state.lambda() != 0.0) state.clamp_shared();

  StepStats stats;
  stats.mean_reward = reward_total / (batch_weight * static_cast<double>(n_tot));
  return stats;
}

namespace detail {

struct EvalSnapshot {
  double train_avg = 0.0;
  double val_avg = 0.0;
  double val_best4 = 0.0;
  double val_worst4 = 0.0;
  double zero_pass_frac = 0.0;
  double mean_entropy = 0.0;
  double mean_kl = 0.0;
};

// Exact evaluation pass: validation avg/best@4/worst@4/zero-pass plus mean
// entropy and KL over the train split (the optimization-health diagnostics).
inline EvalSnapshot evaluate(const PolicyState& state, const Population& pop) {
  EvalSnapshot snap;
  const int num_arms = state.num_arms();
  std::vector<double> probs(num_arms);
  std::vector<double> base(num_arms);
  for (const Problem& pr : pop.train) {
    state.action_probs_into(pr, probs);
    double mass = 0.0;
    for (int a : pr.correct_arms) mass += probs[a];
    snap.train_avg += mass;
    snap.mean_entropy += entropy_of(probs);
    state.base_action_probs_into(pr, base);
    snap.mean_kl += kl_between(probs, base);
  }
  const double train_n = static_cast<double>(pop.train.size());
  snap.train_avg /= train_n;
  snap.mean_entropy /= train_n;
  snap.mean_kl /= train_n;

  const MetricReport rep = exact_metrics(state, pop.val, 4);
  snap.val_avg = rep.avg;
  snap.val_best4 = rep.best_at_k;
  snap.val_worst4 = rep.worst_at_k;
  snap.zero_pass_frac = rep.zero_pass_frac;
  return snap;
}

}  // namespace detail

// Runs M update steps over the population. Batches are sampled uniformly
// without replacement within an epoch and reshuffled per epoch (a batch may
// straddle an epoch boundary when B_p does not divide the train size).
// A StepRecord is appended at step 0, every eval_every steps, and at the
// final step. Fully deterministic given (config, seed).
inline RunLog run_training(const Population& pop, const TrainConfig& cfg,
                           const std::string& run_id = "run") {
  cfg.validate();
  require(cfg.eval_every >= 1, "trainer: eval_every must be >= 1 for run_training");
  RunLog log;
  log.run_id = run_id;
  log.config = cfg;

  PolicyState state = PolicyState::calibrated(pop, cfg.lambda);
  Rng rng(derive_seed(cfg.seed, std::uint64_t{0x747261696e}));

  const double lr = lr_for_batch(cfg.lr_rule, cfg.eta_base, cfg.batch_ref,
                                 static_cast<double>(cfg.problem_batch) * cfg.group_size);
  const double rollouts_per_step =
      static_cast<double>(cfg.problem_batch) * cfg.rollouts_per_problem();

  const auto record = [&](long long step, double train_reward) {
    const detail::EvalSnapshot snap = detail::evaluate(state, pop);
    StepRecord rec;
    rec.step = step;
    rec.compute = static_cast<double>(step) * rollouts_per_step;
    rec.train_reward = train_reward < 0.0 ? snap.train_avg : train_reward;
    rec.val_avg = snap.val_avg;
    rec.val_best4 = snap.val_best4;
    rec.val_worst4 = snap.val_worst4;
    rec.zero_pass_frac = snap.zero_pass_frac;
    rec.entropy = snap.mean_entropy;
    rec.kl = snap.mean_kl;
    rec.lr = lr;
    log.records.push_back(rec);
  };

  record(0, -1.0);  // step-0 train reward is the exact train average

  std::vector<int> order(pop.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();  // forces a shuffle before the first batch
  const auto next_batch = [&](std::vector<int>& batch) {
    batch.clear();
    while (batch.size() < static_cast<std::size_t>(cfg.problem_batch)) {
      if (cursor >= order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) {
          const std::size_t j = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)));
          std::swap(order[i - 1], order[j]);
        }
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
  };

  std::vector<int> batch;
  for (long long step = 1; step <= cfg.total_steps; ++step) {
    next_batch(batch);
    const StepStats stats = train_step(state, pop, batch, cfg, rng);
    if (step % cfg.eval_every == 0 || step == cfg.total_steps) {
      record(step, stats.mean_reward);
    }
  }
  log.final_state = std::move(state);
  return log;
}

// Exact expected single-problem update (tabular row coordinates) by full
// enumeration of all K^n action tuples. Oracle for the trainer's estimator;
// refuses enumerations beyond 10^6 tuples.
inline std::vector<double> expected_update_oracle(const PolicyState& state, const Problem& pr,
                                                  int n, BaselineMode baseline,
                                                  bool std_normalize) {
  const int num_arms = state.num_arms();
  double tuples = 1.0;
  for (int j = 0; j < n; ++j) tuples *= num_arms;
  if (tuples > 1e6) throw ValidationError("oracle: enumeration too large (K^n > 1e6)");

  const std::vector<double> probs = state.action_probs(pr);
  std::vector<double> expected(num_arms, 0.0);
  std::vector<int> tuple(n, 0);
  std::vector<double> rewards(n);
  std::vector<double> g(num_arms);
  for (;;) {
    double prob = 1.0;
    for (int j = 0; j < n; ++j) prob *= probs[tuple[j]];
    for (int j = 0; j < n; ++j) rewards[j] = pr.is_correct(tuple[j]) ? 1.0 : 0.0;
    std::vector<double> adv;
    if (baseline == BaselineMode::kNone) {
      adv = rewards;
    } else {
      adv = group_advantages(rewards, std_normalize);
    }
    std::fill(g.begin(), g.end(), 0.0);
    double adv_sum = 0.0;
    for (int j = 0; j < n; ++j) {
      g[tuple[j]] += adv[j];
      adv_sum += adv[j];
    }
    for (int a = 0; a < num_arms; ++a) {
      expected[a] += prob * (g[a] - adv_sum * probs[a]) / n;
    }
    int pos = n - 1;
    while (pos >= 0 && tuple[pos] == num_arms - 1) tuple[pos--] = 0;
    if (pos < 0) break;
    ++tuple[pos];
  }
  return expected;
}

}  // namespace rlscale
