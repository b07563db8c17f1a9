#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "rlscale/error.hpp"

namespace rlscale {

struct RewardPoint {
  double compute = 0.0;  // rollouts, > 0
  double reward = 0.0;
};

struct RecordBreakingPoint {
  double compute = 0.0;
  double reward = 0.0;
  long long bin_index = 0;
};

inline constexpr double kDefaultBinWidth = 0.005;
inline constexpr int kDefaultGridSize = 64;
inline constexpr int kDefaultSmoothWindow = 5;
inline constexpr double kMaxSigmoidSlope = 20.0;

// Subsamples a training curve to its record-breaking points: a point is kept
// iff its discretized reward bin strictly exceeds every earlier bin. The
// first point is always kept. Input must be sorted by compute ascending.
inline std::vector<RecordBreakingPoint> extract_record_breaking(std::span<const RewardPoint> points,
                                                                double bin_width) {
  require(bin_width > 0.0, "extract: bin width must be > 0");
  std::vector<RecordBreakingPoint> out;
  if (points.empty()) return out;
  // The +1e-9 nudge keeps exact multiples (0.5/0.005) from landing one bin low.
  const auto bin_of = [&](double reward) {
    return static_cast<long long>(std::floor(reward / bin_width + 1e-9));
  };
  long long best_bin = bin_of(points[0].reward);
  out.push_back({points[0].compute, points[0].reward, best_bin});
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].compute < points[i - 1].compute) {
      throw ValidationError("extract: points must be sorted by compute ascending");
    }
    const long long b = bin_of(points[i].reward);
    if (b > best_bin && points[i].compute > out.back().compute) {
      best_bin = b;
      out.push_back({points[i].compute, points[i].reward, b});
    }
  }
  return out;
}

// Bounded monotone sigmoid in log2-compute:
//   y(C) = lo + (hi - lo) * sigmoid(k * (log2 C - midpoint)),
// with lo <= hi and k >= 0, evaluated with no extrapolation past the largest
// observed compute.
struct SigmoidFit {
  double lo = 0.0;
  double hi = 0.0;
  double k = 0.0;
  double midpoint = 0.0;  // log2-compute units
  double rmse = 0.0;
  double compute_min = 1.0;
  double compute_max = 1.0;
  bool low_confidence = false;
  int num_points = 0;

  double eval_log2(double x) const {
    if (hi == lo) return lo;
    return lo + (hi - lo) / (1.0 + std::exp(-k * (x - midpoint)));
  }

  double predict(double compute) const {
    const double c = std::min(compute, compute_max);
    return eval_log2(std::log2(c));
  }
};

namespace detail {

struct SigmoidData {
  std::span<const double> xs;  // log2 compute
  std::span<const double> ys;
  double y_min = 0.0;
  double y_max = 1.0;
  double x_min = 0.0;
  double x_max = 0.0;
};

inline double sigmoid_sse(const SigmoidData& d, double lo, double hi, double k, double midpoint) {
  double sse = 0.0;
  for (std::size_t i = 0; i < d.xs.size(); ++i) {
    const double y = lo + (hi - lo) / (1.0 + std::exp(-k * (d.xs[i] - midpoint)));
    const double r = y - d.ys[i];
    sse += r * r;
  }
  return sse;
}

// Deterministic bounded compass search from one start; converges to a local
// least-squares optimum of the four-parameter sigmoid.
inline void compass_search(const SigmoidData& d, double params[4], double* best_sse) {
  const double y_range = std::max(d.y_max - d.y_min, 1e-3);
  const double x_range = std::max(d.x_max - d.x_min, 1e-3);
  double steps[4] = {0.25 * y_range, 0.25 * y_range, 1.0, 0.25 * x_range};
  const double lo_bound[4] = {d.y_min, d.y_min, 0.0, d.x_min - 5.0};
  const double hi_bound[4] = {d.y_max, d.y_max, kMaxSigmoidSlope, d.x_max + 5.0};
  *best_sse = sigmoid_sse(d, params[0], params[1], params[2], params[3]);
  for (int sweep = 0; sweep < 400; ++sweep) {
    bool improved = false;
    for (int i = 0; i < 4; ++i) {
      for (double dir : {1.0, -1.0}) {
        double cand[4] = {params[0], params[1], params[2], params[3]};
        cand[i] = std::clamp(cand[i] + dir * steps[i], lo_bound[i], hi_bound[i]);
        if (cand[0] > cand[1]) continue;  // keep lo <= hi
        const double sse = sigmoid_sse(d, cand[0], cand[1], cand[2], cand[3]);
        if (sse + 1e-15 < *best_sse) {
          std::copy(cand, cand + 4, params);
          *best_sse = sse;
          improved = true;
        }
      }
    }
    if (!improved) {
      for (double& s : steps) s *= 0.5;
      if (steps[0] < 1e-8 * y_range && steps[2] < 1e-7 && steps[3] < 1e-8 * x_range) break;
    }
  }
}

// Shared fitter for reward-vs-compute and log2(n*)-vs-compute curves.
// Derivative-free bounded local search from a fixed 16-start schedule; fully
// deterministic for identical inputs.
inline SigmoidFit fit_bounded_sigmoid(std::span<const double> xs, std::span<const double> ys,
                                      double y_min, double y_max) {
  require(xs.size() == ys.size(), "fit: xs/ys size mismatch");
  if (xs.size() < 2) throw ValidationError("fit: need at least 2 points");

  SigmoidFit fit;
  fit.num_points = static_cast<int>(xs.size());
  const auto [x_min_it, x_max_it] = std::minmax_element(xs.begin(), xs.end());
  const auto [y_min_it, y_max_it] = std::minmax_element(ys.begin(), ys.end());
  const double x_lo = *x_min_it, x_hi = *x_max_it;
  const double y_lo = *y_min_it, y_hi = *y_max_it;
  fit.compute_min = std::exp2(x_lo);
  fit.compute_max = std::exp2(x_hi);

  if (y_hi - y_lo < 1e-12) {  // constant series
    fit.lo = fit.hi = ys[0];
    fit.k = 0.0;
    fit.midpoint = 0.5 * (x_lo + x_hi);
    fit.rmse = 0.0;
    fit.low_confidence = xs.size() < 4;
    return fit;
  }

  if (xs.size() < 4) {  // degrade to a steep monotone step, flagged
    fit.lo = std::clamp(y_lo, y_min, y_max);
    fit.hi = std::clamp(y_hi, y_min, y_max);
    fit.k = kMaxSigmoidSlope;
    fit.midpoint = 0.5 * (x_lo + x_hi);
    fit.low_confidence = true;
    double sse = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double r = fit.eval_log2(xs[i]) - ys[i];
      sse += r * r;
    }
    fit.rmse = std::sqrt(sse / static_cast<double>(xs.size()));
    return fit;
  }

  SigmoidData data{xs, ys, y_min, y_max, x_lo, x_hi};
  const double k_starts[4] = {0.3, 1.0, 3.0, 10.0};
  const double q_starts[4] = {0.2, 0.4, 0.6, 0.8};
  double best_params[4] = {0, 0, 0, 0};
  double best_sse = std::numeric_limits<double>::infinity();
  for (double k0 : k_starts) {
    for (double q : q_starts) {
      double params[4] = {std::clamp(y_lo, y_min, y_max), std::clamp(y_hi, y_min, y_max), k0,
                          x_lo + q * (x_hi - x_lo)};
      double sse = 0.0;
      compass_search(data, params, &sse);
      if (sse < best_sse) {
        best_sse = sse;
        std::copy(params, params + 4, best_params);
      }
    }
  }
  fit.lo = best_params[0];
  fit.hi = best_params[1];
  fit.k = best_params[2];
  fit.midpoint = best_params[3];
  fit.rmse = std::sqrt(best_sse / static_cast<double>(xs.size()));
  return fit;
}

}  // namespace detail

/// Fits the bounded monotone sigmoid to record-breaking points (reward in [0,1]).
inline SigmoidFit fit_monotone_sigmoid(std::span<const RecordBreakingPoint> points) {
  std::vector<double> xs, ys;
  xs.reserve(points.size());
  ys.reserve(points.size());
  for (const auto& p : points) {
    require(p.compute > 0.0, "fit: compute must be positive");
    xs.push_back(std::log2(p.compute));
    ys.push_back(p.reward);
  }
  return detail::fit_bounded_sigmoid(xs, ys, 0.0, 1.0);
}

struct FrontierCurve {
  std::vector<double> grid;             // log-spaced compute budgets
  std::vector<double> envelope_reward;  // non-decreasing, dominates every fit
  std::vector<int> frontier_n;          // n attaining the envelope up to C
  std::vector<double> smoothed_log2_nstar;
};

inline std::vector<double> log_spaced_grid(double c_min, double c_max, int count) {
  require(c_min > 0.0 && c_max >= c_min, "grid: need 0 < c_min <= c_max");
  require(count >= 2, "grid: need at least 2 budgets");
  std::vector<double> grid(count);
  const double l0 = std::log2(c_min), l1 = std::log2(c_max);
  for (int i = 0; i < count; ++i) {
    grid[i] = std::exp2(l0 + (l1 - l0) * i / (count - 1));
  }
  return grid;
}

// Upper envelope of the per-n fitted curves over a log-spaced budget grid.
// Each fit is evaluated at min(C, its compute_max); the envelope is the
// running maximum, and frontier_n(C) is the n attaining it, ties broken
// toward smaller n.
inline FrontierCurve frontier_envelope(const std::map<int, SigmoidFit>& fits,
                                       std::span<const double> grid) {
  require(!fits.empty(), "envelope: need at least one fit");
  FrontierCurve curve;
  curve.grid.assign(grid.begin(), grid.end());
  curve.envelope_reward.reserve(grid.size());
  curve.frontier_n.reserve(grid.size());
  double best_value = -std::numeric_limits<double>::infinity();
  int best_n = fits.begin()->first;
  for (double budget : grid) {
    double step_value = -std::numeric_limits<double>::infinity();
    int step_n = fits.begin()->first;
    for (const auto& [n, fit] : fits) {
      const double v = fit.predict(budget);
      if (v > step_value) {
        step_value = v;
        step_n = n;
      }
    }
    if (step_value > best_value) {
      best_value = step_value;
      best_n = step_n;
    } else if (step_value == best_value && step_n < best_n) {
      best_n = step_n;
    }
    curve.envelope_reward.push_back(best_value);
    curve.frontier_n.push_back(best_n);
  }
  return curve;
}

// Centered moving average of log2(frontier_n); windows truncate at the edges.
inline std::vector<double> smooth_nstar(const FrontierCurve& curve, int window) {
  require(window >= 1 && window % 2 == 1, "smooth: window must be odd and >= 1");
  const int n = static_cast<int>(curve.frontier_n.size());
  std::vector<double> log2n(n);
  for (int i = 0; i < n; ++i) log2n[i] = std::log2(static_cast<double>(curve.frontier_n[i]));
  std::vector<double> out(n);
  const int half = window / 2;
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double sum = 0.0;
    for (int j = lo; j <= hi; ++j) sum += log2n[j];
    out[i] = sum / (hi - lo + 1);
  }
  return out;
}

// Sigmoid fit of the smoothed log2 n* series against log2 compute; output
// bounded by [0, log2 n_max]. The hi parameter is the saturation level.
inline SigmoidFit fit_nstar_sigmoid(std::span<const double> grid,
                                    std::span<const double> smoothed_log2_nstar,
                                    double log2_n_max) {
  std::vector<double> xs;
  xs.reserve(grid.size());
  for (double c : grid) xs.push_back(std::log2(c));
  return detail::fit_bounded_sigmoid(xs, smoothed_log2_nstar, 0.0, log2_n_max);
}

// Prescription readout: 2^(fit at C) rounded to the nearest swept n (in log2),
// ties toward the smaller value.
inline int recommend_n(const SigmoidFit& nstar_fit, double compute, std::span<const int> swept_n) {
  require(!swept_n.empty(), "recommend: swept n list must be non-empty");
  const double target = nstar_fit.predict(compute);
  int best = swept_n[0];
  double best_dist = std::numeric_limits<double>::infinity();
  for (int n : swept_n) {
    const double dist = std::abs(std::log2(static_cast<double>(n)) - target);
    if (dist < best_dist || (dist == best_dist && n < best)) {
      best_dist = dist;
      best = n;
    }
  }
  return best;
}

}  // namespace rlscale
