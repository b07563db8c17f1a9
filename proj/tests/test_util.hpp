#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "rlscale/policy.hpp"
#include "rlscale/population.hpp"

namespace rlscale::testing {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;

  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("rlscale_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

inline Population make_band_population(int train, int val, double lo, double hi, int num_arms = 8,
                                        int feature_dim = 16, int clusters = 16,
                                        std::uint64_t seed = 1) {
  PopulationConfig cfg;
  cfg.train_size = train;
  cfg.val_size = val;
  cfg.num_arms = num_arms;
  cfg.feature_dim = feature_dim;
  cfg.cluster_count = clusters;
  cfg.specs = {{"band", lo, hi, 1.0}};
  cfg.seed = seed;
  return generate_population(cfg);
}

inline Problem make_problem(std::uint64_t id, int num_arms, std::vector<int> correct,
                            std::vector<double> feature, double p0 = 0.5) {
  Problem p;
  p.id = id;
  p.num_arms = num_arms;
  p.correct_arms = std::move(correct);
  p.feature = std::move(feature);
  p.target_p0 = p0;
  return p;
}

// Single-problem state with explicit logits; correct arm 0 by default.
inline PolicyState state_with_logits(std::vector<double> logits, double lambda = 0.0,
                                     std::vector<double> shared = {}, int feature_dim = 1) {
  const int num_arms = static_cast<int>(logits.size());
  if (shared.empty()) shared.assign(static_cast<std::size_t>(num_arms) * feature_dim, 0.0);
  return PolicyState::from_raw(1, num_arms, feature_dim, lambda, std::move(logits), std::move(shared));
}

inline double binomial_pmf(int n, int k, double p) {
  double log_pmf = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
  if (k > 0) log_pmf += k * std::log(p);
  if (n - k > 0) log_pmf += (n - k) * std::log(1.0 - p);
  return std::exp(log_pmf);
}

inline double binomial_range_prob(int n, int k_lo, int k_hi, double p) {
  double total = 0.0;
  for (int k = std::max(0, k_lo); k <= std::min(n, k_hi); ++k) total += binomial_pmf(n, k, p);
  return total;
}

// Two-sample Kolmogorov-Smirnov distance.
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) {
      ++i;
    } else {
      ++j;
    }
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

inline double least_squares_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace rlscale::testing
