#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "rlscale/error.hpp"
#include "rlscale/population.hpp"
#include "rlscale/rng.hpp"

namespace rlscale {

// Logit magnitudes are clamped after updates; entropy collapse happens well
// before this bound, it only guards against runaway drift in long runs.
inline constexpr double kLogitClamp = 50.0;

// Gradient of a per-problem scalar with respect to the policy parameters:
// the problem's tabular logit row (K) and the shared weight matrix (K x d).
struct PolicyGrad {
  std::vector<double> tabular;
  std::vector<double> shared;  // row-major K x d
};

struct RolloutGroup {
  std::uint64_t problem_id = 0;
  std::vector<int> actions;
  std::vector<double> rewards;  // 1 iff the action hit a correct arm
};

// --- softmax / divergence helpers (shared by policy and trainer) ---

inline void softmax_into(std::span<const double> logits, std::span<double> probs) {
  double max_logit = logits[0];
  for (double z : logits) max_logit = std::max(max_logit, z);
  double total = 0.0;
  for (std::size_t a = 0; a < logits.size(); ++a) {
    probs[a] = std::exp(logits[a] - max_logit);
    total += probs[a];
  }
  for (std::size_t a = 0; a < logits.size(); ++a) probs[a] /= total;
}

inline double entropy_of(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

inline double kl_between(std::span<const double> p, std::span<const double> q) {
  double kl = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a] > 0.0) kl += p[a] * std::log(p[a] / q[a]);
  }
  return kl;
}

// d entropy / d logits[a] = -p_a (log p_a + H)
inline void entropy_logit_grad(std::span<const double> probs, double entropy, std::span<double> out) {
  for (std::size_t a = 0; a < probs.size(); ++a) {
    out[a] = probs[a] > 0.0 ? -probs[a] * (std::log(probs[a]) + entropy) : 0.0;
  }
}

// d KL(p || q) / d logits[a] = p_a (log(p_a / q_a) - KL), with q fixed.
inline void kl_logit_grad(std::span<const double> probs, std::span<const double> base_probs,
                          double kl, std::span<double> out) {
  for (std::size_t a = 0; a < probs.size(); ++a) {
    out[a] = probs[a] > 0.0 ? probs[a] * (std::log(probs[a] / base_probs[a]) - kl) : 0.0;
  }
}

inline int sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t a = 0; a + 1 < probs.size(); ++a) {
    acc += probs[a];
    if (u < acc) return static_cast<int>(a);
  }
  return static_cast<int>(probs.size()) - 1;
}

// Softmax policy over arms: logits[a] = tabular_bias[id][a] + lambda * (W_a . feature).
// lambda = 0 decouples problems completely (pure tabular bandit); lambda > 0
// routes every update through the shared weights, creating interference and
// train-to-validation transfer. A frozen snapshot of the initial parameters
// anchors the KL term.
class PolicyState {
 public:
  PolicyState() = default;

  // Tabular rows calibrated so that each problem's initial correct-set mass
  // equals target_p0 (clamped to the +-kLogitClamp offset for p at 0 or 1);
  // shared weights start at zero so calibration is exact.
  static PolicyState calibrated(const Population& pop, double lambda) {
    require(lambda >= 0.0 && lambda <= 1.0, "policy: lambda must lie in [0,1]");
    PolicyState st;
    st.num_problems_ = pop.total_problems();
    st.num_arms_ = pop.config.num_arms;
    st.feature_dim_ = pop.config.feature_dim;
    st.lambda_ = lambda;
    st.tabular_.assign(static_cast<std::size_t>(st.num_problems_) * st.num_arms_, 0.0);
    st.shared_.assign(static_cast<std::size_t>(st.num_arms_) * st.feature_dim_, 0.0);
    for (int i = 0; i < st.num_problems_; ++i) {
      const Problem& pr = pop.problem_by_id(static_cast<std::uint64_t>(i));
      require(static_cast<int>(pr.id) == i, "policy: population ids must be consecutive");
      double offset = 0.0;
      if (pr.target_p0 <= 0.0) {
        offset = -kLogitClamp;
      } else if (pr.target_p0 >= 1.0) {
        offset = kLogitClamp;
      } else {
        offset = std::clamp(
            calibrate_logit_offset(pr.target_p0, pr.num_arms, static_cast<int>(pr.correct_arms.size())),
            -kLogitClamp, kLogitClamp);
      }
      double* row = st.tabular_.data() + static_cast<std::size_t>(i) * st.num_arms_;
      for (int a : pr.correct_arms) row[a] = offset;
    }
    st.base_tabular_ = st.tabular_;
    st.base_shared_ = st.shared_;
    st.rebuild_base_probs(pop);
    return st;
  }

  // Assemble from explicit matrices; the snapshot is taken at construction.
  static PolicyState from_raw(int num_problems, int num_arms, int feature_dim, double lambda,
                              std::vector<double> tabular, std::vector<double> shared) {
    require(lambda >= 0.0 && lambda <= 1.0, "policy: lambda must lie in [0,1]");
    PolicyState st;
    st.num_problems_ = num_problems;
    st.num_arms_ = num_arms;
    st.feature_dim_ = feature_dim;
    st.lambda_ = lambda;
    require(tabular.size() == static_cast<std::size_t>(num_problems) * num_arms,
            "policy: tabular size mismatch");
    require(shared.size() == static_cast<std::size_t>(num_arms) * feature_dim,
            "policy: shared size mismatch");
    st.tabular_ = std::move(tabular);
    st.shared_ = std::move(shared);
    st.base_tabular_ = st.tabular_;
    st.base_shared_ = st.shared_;
    return st;
  }

  // Full reconstruction (deserialization): current and base parts separately.
  static PolicyState from_parts(int num_problems, int num_arms, int feature_dim, double lambda,
                                std::vector<double> tabular, std::vector<double> shared,
                                std::vector<double> base_tabular, std::vector<double> base_shared) {
    PolicyState st = from_raw(num_problems, num_arms, feature_dim, lambda, std::move(tabular),
                              std::move(shared));
    require(base_tabular.size() == st.tabular_.size(), "policy: base tabular size mismatch");
    require(base_shared.size() == st.shared_.size(), "policy: base shared size mismatch");
    st.base_tabular_ = std::move(base_tabular);
    st.base_shared_ = std::move(base_shared);
    return st;
  }

  int num_problems() const { return num_problems_; }
  int num_arms() const { return num_arms_; }
  int feature_dim() const { return feature_dim_; }
  double lambda() const { return lambda_; }

  std::span<const double> tabular_bias() const { return tabular_; }
  std::span<const double> shared_weights() const { return shared_; }
  std::span<const double> base_tabular_bias() const { return base_tabular_; }
  std::span<const double> base_shared_weights() const { return base_shared_; }
  std::span<const double> tabular_row(std::uint64_t id) const {
    return std::span<const double>(tabular_).subspan(static_cast<std::size_t>(id) * num_arms_,
                                                     num_arms_);
  }

  void set_tabular(std::uint64_t id, int arm, double v) {
    tabular_[static_cast<std::size_t>(id) * num_arms_ + arm] = v;
  }
  void set_shared(int arm, int j, double v) {
    shared_[static_cast<std::size_t>(arm) * feature_dim_ + j] = v;
  }

  void logits_into(const Problem& pr, std::span<double> out) const {
    check_problem(pr);
    const double* row = tabular_.data() + static_cast<std::size_t>(pr.id) * num_arms_;
    if (lambda_ == 0.0) {
      std::copy(row, row + num_arms_, out.begin());
      return;
    }
    for (int a = 0; a < num_arms_; ++a) {
      const double* w = shared_.data() + static_cast<std::size_t>(a) * feature_dim_;
      double dot = 0.0;
      for (int j = 0; j < feature_dim_; ++j) dot += w[j] * pr.feature[j];
      out[a] = row[a] + lambda_ * dot;
    }
  }

  std::vector<double> logits(const Problem& pr) const {
    std::vector<double> out(num_arms_);
    logits_into(pr, out);
    return out;
  }

  void action_probs_into(const Problem& pr, std::span<double> out) const {
    logits_into(pr, out);
    softmax_into(out, out);
  }

  std::vector<double> action_probs(const Problem& pr) const {
    std::vector<double> out(num_arms_);
    action_probs_into(pr, out);
    return out;
  }

  // Logits of the frozen snapshot (same lambda, base parameters).
  void base_logits_into(const Problem& pr, std::span<double> out) const {
    const double* row = base_tabular_.data() + static_cast<std::size_t>(pr.id) * num_arms_;
    if (lambda_ == 0.0) {
      std::copy(row, row + num_arms_, out.begin());
      return;
    }
    for (int a = 0; a < num_arms_; ++a) {
      const double* w = base_shared_.data() + static_cast<std::size_t>(a) * feature_dim_;
      double dot = 0.0;
      for (int j = 0; j < feature_dim_; ++j) dot += w[j] * pr.feature[j];
      out[a] = row[a] + lambda_ * dot;
    }
  }

  void base_action_probs_into(const Problem& pr, std::span<double> out) const {
    if (!base_probs_.empty()) {
      const double* cache = base_probs_.data() + static_cast<std::size_t>(pr.id) * num_arms_;
      std::copy(cache, cache + num_arms_, out.begin());
      return;
    }
    base_logits_into(pr, out);
    softmax_into(out, out);
  }

  // Exact pass@1: total probability on the correct-arm set.
  double correct_mass(const Problem& pr) const {
    std::vector<double> probs(num_arms_);
    action_probs_into(pr, probs);
    double mass = 0.0;
    for (int a : pr.correct_arms) mass += probs[a];
    return mass;
  }

  RolloutGroup sample_rollout_group(const Problem& pr, int n, Rng& rng) const {
    require(n >= 1, "rollout group size must be >= 1");
    std::vector<double> probs(num_arms_);
    action_probs_into(pr, probs);
    RolloutGroup group;
    group.problem_id = pr.id;
    group.actions.resize(n);
    group.rewards.resize(n);
    for (int j = 0; j < n; ++j) {
      const int a = sample_categorical(probs, rng);
      group.actions[j] = a;
      group.rewards[j] = pr.is_correct(a) ? 1.0 : 0.0;
    }
    return group;
  }

  // grad log pi(action): tabular part onehot - pi, shared part scaled by
  // lambda * feature (chain rule through the logits).
  PolicyGrad logprob_grad(const Problem& pr, int action) const {
    require(action >= 0 && action < num_arms_, "logprob_grad: action out of range");
    std::vector<double> g(num_arms_);
    action_probs_into(pr, g);
    for (int a = 0; a < num_arms_; ++a) g[a] = -g[a];
    g[action] += 1.0;
    return make_grad(pr, g);
  }

  std::pair<double, PolicyGrad> entropy_and_grad(const Problem& pr) const {
    std::vector<double> probs(num_arms_);
    action_probs_into(pr, probs);
    const double h = entropy_of(probs);
    std::vector<double> g(num_arms_);
    entropy_logit_grad(probs, h, g);
    return {h, make_grad(pr, g)};
  }

  // KL(pi_current || pi_base) against the frozen snapshot.
  std::pair<double, PolicyGrad> kl_to_base_and_grad(const Problem& pr) const {
    std::vector<double> probs(num_arms_);
    std::vector<double> base(num_arms_);
    action_probs_into(pr, probs);
    base_action_probs_into(pr, base);
    const double kl = kl_between(probs, base);
    std::vector<double> g(num_arms_);
    kl_logit_grad(probs, base, kl, g);
    return {kl, make_grad(pr, g)};
  }

  // Ascent step from an aggregated per-problem logit gradient. The tabular
  // row is the problem's own; the shared matrix takes the rank-one update
  // lambda * g outer feature. Rows of other problems are never touched.
  void apply_logit_step(const Problem& pr, std::span<const double> logit_grad, double lr) {
    double* row = tabular_.data() + static_cast<std::size_t>(pr.id) * num_arms_;
    for (int a = 0; a < num_arms_; ++a) {
      row[a] = std::clamp(row[a] + lr * logit_grad[a], -kLogitClamp, kLogitClamp);
    }
    if (lambda_ == 0.0) return;
    for (int a = 0; a < num_arms_; ++a) {
      const double scale = lr * lambda_ * logit_grad[a];
      if (scale == 0.0) continue;
      double* w = shared_.data() + static_cast<std::size_t>(a) * feature_dim_;
      for (int j = 0; j < feature_dim_; ++j) w[j] += scale * pr.feature[j];
    }
  }

  void clamp_shared() {
    for (double& w : shared_) w = std::clamp(w, -kLogitClamp, kLogitClamp);
  }

  // Precomputes the snapshot's action probabilities (used heavily by KL
  // evaluation); call after construction when the population is at hand.
  void rebuild_base_probs(const Population& pop) {
    base_probs_.assign(static_cast<std::size_t>(num_problems_) * num_arms_, 0.0);
    std::vector<double> buf(num_arms_);
    for (int i = 0; i < num_problems_; ++i) {
      const Problem& pr = pop.problem_by_id(static_cast<std::uint64_t>(i));
      base_logits_into(pr, buf);
      softmax_into(buf, buf);
      std::copy(buf.begin(), buf.end(),
                base_probs_.begin() + static_cast<std::size_t>(i) * num_arms_);
    }
  }

 private:
  void check_problem(const Problem& pr) const {
    require(pr.id < static_cast<std::uint64_t>(num_problems_), "policy: problem id out of range");
  }

  PolicyGrad make_grad(const Problem& pr, std::span<const double> logit_grad) const {
    PolicyGrad grad;
    grad.tabular.assign(logit_grad.begin(), logit_grad.end());
    grad.shared.assign(static_cast<std::size_t>(num_arms_) * feature_dim_, 0.0);
    if (lambda_ != 0.0) {
      for (int a = 0; a < num_arms_; ++a) {
        for (int j = 0; j < feature_dim_; ++j) {
          grad.shared[static_cast<std::size_t>(a) * feature_dim_ + j] =
              lambda_ * logit_grad[a] * pr.feature[j];
        }
      }
    }
    return grad;
  }

  int num_problems_ = 0;
  int num_arms_ = 0;
  int feature_dim_ = 0;
  double lambda_ = 0.0;
  std::vector<double> tabular_;
  std::vector<double> shared_;
  std::vector<double> base_tabular_;
  std::vector<double> base_shared_;
  std::vector<double> base_probs_;  // optional cache, problem-id indexed
};

// Keeps the problems whose Monte-Carlo mean reward over `samples` rollouts
// under `policy` lies in [lo, hi]; order is preserved. Each problem gets an
// independent stream derived from (seed, id), so the result does not depend
// on list order.
inline std::vector<Problem> curate_by_difficulty(const std::vector<Problem>& problems,
                                                 const PolicyState& policy, double lo, double hi,
                                                 int samples, std::uint64_t seed) {
  require(samples >= 1, "curate: samples must be >= 1");
  std::vector<Problem> kept;
  for (const Problem& pr : problems) {
    Rng rng(derive_seed(seed, pr.id, std::uint64_t{0x637572}));
    const RolloutGroup group = policy.sample_rollout_group(pr, samples, rng);
    double mean = 0.0;
    for (double r : group.rewards) mean += r;
    mean /= samples;
    if (mean >= lo && mean <= hi) kept.push_back(pr);
  }
  return kept;
}

}  // namespace rlscale
