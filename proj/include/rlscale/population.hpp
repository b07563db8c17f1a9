#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rlscale/error.hpp"
#include "rlscale/rng.hpp"

namespace rlscale {

// One synthetic task: a K-armed bandit with a designated correct-arm set, a
// unit feature vector (shared-parameter coupling), and the pass rate the
// policy is calibrated to at initialization.
struct Problem {
  std::uint64_t id = 0;
  int num_arms = 2;
  std::vector<int> correct_arms;
  std::vector<double> feature;
  double target_p0 = 0.5;

  bool is_correct(int action) const {
    return std::find(correct_arms.begin(), correct_arms.end(), action) != correct_arms.end();
  }

  void validate() const {
    require(num_arms >= 2, "problem: num_arms must be >= 2");
    require(!correct_arms.empty(), "problem: correct_arms must be non-empty");
    for (int a : correct_arms) {
      require(a >= 0 && a < num_arms, "problem: correct arm index out of range");
    }
    require(target_p0 >= 0.0 && target_p0 <= 1.0, "problem: target_p0 must lie in [0,1]");
    double norm2 = 0.0;
    for (double x : feature) norm2 += x * x;
    require(std::abs(std::sqrt(norm2) - 1.0) <= 1e-9, "problem: feature must have unit norm");
  }
};

// A difficulty band: initial pass rates are drawn uniformly from [p0_lo, p0_hi].
struct DifficultySpec {
  std::string name;
  double p0_lo = 0.0;
  double p0_hi = 1.0;
  double weight = 1.0;

  void validate() const {
    require(!name.empty(), "difficulty spec: name must be non-empty");
    require(p0_lo <= p0_hi, "difficulty spec '" + name + "': p0_lo must be <= p0_hi");
    require(p0_lo >= 0.0 && p0_hi <= 1.0, "difficulty spec '" + name + "': range must lie in [0,1]");
    require(weight >= 0.0 && weight <= 1.0, "difficulty spec '" + name + "': weight must lie in [0,1]");
  }
};

struct PopulationConfig {
  int train_size = 1000;
  int val_size = 300;
  int num_arms = 8;
  int feature_dim = 16;
  int cluster_count = 32;
  std::vector<DifficultySpec> specs;
  std::uint64_t seed = 0;

  void validate() const {
    require(train_size >= 1, "population: train_size must be >= 1");
    require(val_size >= 1, "population: val_size must be >= 1");
    require(num_arms >= 2, "population: num_arms must be >= 2");
    require(feature_dim >= 1, "population: feature_dim must be >= 1");
    require(cluster_count >= 1, "population: cluster_count must be >= 1");
    require(!specs.empty(), "population: specs must be non-empty");
    double total = 0.0;
    for (const auto& s : specs) {
      s.validate();
      total += s.weight;
    }
    require(std::abs(total - 1.0) <= 1e-9, "population: spec weights must sum to 1");
  }
};

struct Population {
  PopulationConfig config;
  std::vector<Problem> train;
  std::vector<Problem> val;

  int total_problems() const { return static_cast<int>(train.size() + val.size()); }

  // Problems are id-indexed: train occupies [0, train_size), validation follows.
  const Problem& problem_by_id(std::uint64_t id) const {
    if (id < train.size()) return train[static_cast<std::size_t>(id)];
    const std::size_t v = static_cast<std::size_t>(id) - train.size();
    require(v < val.size(), "population: problem id out of range");
    return val[v];
  }
};

// Logit offset c such that a softmax with logit c on each of the m correct
// arms and 0 on the K-m incorrect ones puts total mass p on the correct set:
// c = ln(p*(K-m) / ((1-p)*m)).
inline double calibrate_logit_offset(double p, int num_arms, int num_correct) {
  require(num_correct >= 1 && num_correct < num_arms, "calibrate: need 1 <= num_correct < num_arms");
  if (p <= 0.0 || p >= 1.0) {
    throw ValidationError("calibrate: degenerate difficulty p=" + std::to_string(p) +
                          " (use a near-zero band instead)");
  }
  const double k = static_cast<double>(num_arms);
  const double m = static_cast<double>(num_correct);
  return std::log(p * (k - m) / ((1.0 - p) * m));
}

namespace detail {

inline void normalize_in_place(std::vector<double>& v) {
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  const double norm = std::sqrt(norm2);
  for (double& x : v) x /= norm;
}

inline std::vector<double> random_unit_vector(int dim, Rng& rng) {
  std::vector<double> v(dim);
  for (;;) {
    for (double& x : v) x = rng.normal();
    double norm2 = 0.0;
    for (double x : v) norm2 += x * x;
    if (norm2 > 1e-12) break;
  }
  normalize_in_place(v);
  return v;
}

// Problems in a cluster share a feature direction (plus sigma-0.1 Gaussian
// perturbation) and a correct arm; this is what creates correlated gradients
// across problems once the shared policy component is active.
struct ClusterSet {
  std::vector<std::vector<double>> directions;
  std::vector<int> correct_arm;
};

inline ClusterSet make_clusters(const PopulationConfig& cfg, Rng& rng) {
  ClusterSet cs;
  cs.directions.reserve(cfg.cluster_count);
  cs.correct_arm.reserve(cfg.cluster_count);
  for (int c = 0; c < cfg.cluster_count; ++c) {
    cs.directions.push_back(random_unit_vector(cfg.feature_dim, rng));
    cs.correct_arm.push_back(rng.uniform_int(cfg.num_arms));
  }
  return cs;
}

inline Problem draw_problem(const PopulationConfig& cfg, const ClusterSet& clusters,
                            std::uint64_t id, Rng& rng) {
  // Spec membership by mixture weight, then p0 uniform within the band.
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t pick = cfg.specs.size() - 1;
  for (std::size_t s = 0; s < cfg.specs.size(); ++s) {
    acc += cfg.specs[s].weight;
    if (u < acc) {
      pick = s;
      break;
    }
  }
  const DifficultySpec& spec = cfg.specs[pick];

  Problem p;
  p.id = id;
  p.num_arms = cfg.num_arms;
  p.target_p0 = rng.uniform(spec.p0_lo, spec.p0_hi);
  const int cluster = rng.uniform_int(cfg.cluster_count);
  p.correct_arms = {clusters.correct_arm[cluster]};
  p.feature = clusters.directions[cluster];
  for (double& x : p.feature) x += 0.1 * rng.normal();
  normalize_in_place(p.feature);
  return p;
}

}  // namespace detail

// Draws train and validation sets i.i.d. from the same difficulty mixture.
// Fully deterministic given config.seed.
inline Population generate_population(const PopulationConfig& config) {
  config.validate();
  Population pop;
  pop.config = config;
  Rng rng(derive_seed(config.seed, std::uint64_t{0x706f70}));
  const detail::ClusterSet clusters = detail::make_clusters(config, rng);
  pop.train.reserve(config.train_size);
  for (int i = 0; i < config.train_size; ++i) {
    pop.train.push_back(detail::draw_problem(config, clusters, static_cast<std::uint64_t>(i), rng));
  }
  pop.val.reserve(config.val_size);
  for (int i = 0; i < config.val_size; ++i) {
    pop.val.push_back(detail::draw_problem(
        config, clusters, static_cast<std::uint64_t>(config.train_size + i), rng));
  }
  return pop;
}

}  // namespace rlscale
