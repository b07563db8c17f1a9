#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "rlscale/error.hpp"
#include "rlscale/policy.hpp"

namespace rlscale {

// Problems with exact pass@1 at or below this threshold count as "zero-pass"
// in diagnostics (the histogram analog of reading "pass@1 close to zero").
inline constexpr double kZeroPassThreshold = 1e-3;

struct MetricReport {
  double avg = 0.0;
  double best_at_k = 0.0;
  double worst_at_k = 0.0;
  int k = 1;
  std::vector<double> per_problem_p;
  double zero_pass_frac = 0.0;
};

// Exact metrics from per-problem correct mass p_i:
//   avg       = mean p_i
//   best@k    = mean 1 - (1 - p_i)^k   (at least one of k correct)
//   worst@k   = mean p_i^k             (all k correct)
inline MetricReport exact_metrics(const PolicyState& state, std::span<const Problem> problems,
                                  int k) {
  require(k >= 1, "metrics: k must be >= 1");
  require(!problems.empty(), "metrics: problem list must be non-empty");
  MetricReport rep;
  rep.k = k;
  rep.per_problem_p.reserve(problems.size());
  double avg = 0.0, best = 0.0, worst = 0.0, zero = 0.0;
  for (const Problem& pr : problems) {
    const double p = state.correct_mass(pr);
    rep.per_problem_p.push_back(p);
    avg += p;
    best += 1.0 - std::pow(1.0 - p, k);
    worst += std::pow(p, k);
    if (p <= kZeroPassThreshold) zero += 1.0;
  }
  const double n = static_cast<double>(problems.size());
  rep.avg = avg / n;
  rep.best_at_k = best / n;
  rep.worst_at_k = worst / n;
  rep.zero_pass_frac = zero / n;
  return rep;
}

// Monte-Carlo counterpart: k * trials rollouts per problem, metrics estimated
// per trial of k responses.
inline MetricReport mc_metrics(const PolicyState& state, std::span<const Problem> problems, int k,
                               int trials, Rng& rng) {
  require(k >= 1, "metrics: k must be >= 1");
  require(trials >= 1, "metrics: trials must be >= 1");
  require(!problems.empty(), "metrics: problem list must be non-empty");
  MetricReport rep;
  rep.k = k;
  rep.per_problem_p.reserve(problems.size());
  double avg = 0.0, best = 0.0, worst = 0.0, zero = 0.0;
  for (const Problem& pr : problems) {
    const RolloutGroup group = state.sample_rollout_group(pr, k * trials, rng);
    double mean = 0.0;
    double any = 0.0, all = 0.0;
    for (int t = 0; t < trials; ++t) {
      int successes = 0;
      for (int j = 0; j < k; ++j) successes += group.rewards[t * k + j] > 0.5 ? 1 : 0;
      mean += successes;
      if (successes > 0) any += 1.0;
      if (successes == k) all += 1.0;
    }
    const double p_hat = mean / (static_cast<double>(k) * trials);
    rep.per_problem_p.push_back(p_hat);
    avg += p_hat;
    best += any / trials;
    worst += all / trials;
    if (p_hat <= kZeroPassThreshold) zero += 1.0;
  }
  const double n = static_cast<double>(problems.size());
  rep.avg = avg / n;
  rep.best_at_k = best / n;
  rep.worst_at_k = worst / n;
  rep.zero_pass_frac = zero / n;
  return rep;
}

// Histogram of exact pass@1 over [0,1]; bin b covers [b/num_bins, (b+1)/num_bins),
// last bin closed.
inline std::vector<std::int64_t> pass1_histogram(const PolicyState& state,
                                                 std::span<const Problem> problems, int num_bins) {
  require(num_bins >= 1, "metrics: num_bins must be >= 1");
  std::vector<std::int64_t> counts(num_bins, 0);
  for (const Problem& pr : problems) {
    const double p = state.correct_mass(pr);
    int bin = static_cast<int>(p * num_bins);
    bin = std::min(bin, num_bins - 1);
    counts[bin] += 1;
  }
  return counts;
}

}  // namespace rlscale
