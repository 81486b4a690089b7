#pragma once
// Allocation rules: the oracle split of a sample budget, the index rule that
// picks the next arm, and the batch allocator that trades per-arm accuracy
// targets against the accuracy of a population-weighted overall estimate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "aps/error.hpp"

namespace aps {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// phi(c, T) = c / T, with phi(c, 0) = +inf for every c >= 0 so that each arm
/// is sampled once before ratios are compared.
inline double tracking(double c, double T) {
  if (T <= 0.0) return kInfinity;
  return c / T;
}

/// Integer allocation summing exactly to `total`: floors first, then one extra
/// unit to the largest fractional parts (ties to the lowest index).
inline std::vector<std::int64_t> round_largest_remainder(std::span<const double> real, std::int64_t total) {
  const std::size_t K = real.size();
  std::vector<std::int64_t> out(K, 0);
  if (K == 0) return out;
  double sum = 0.0;
  for (double v : real) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInput("allocations must be finite and nonnegative", "allocation");
    sum += v;
  }
  std::vector<double> scaled(real.begin(), real.end());
  if (sum > 0.0) {
    for (double& v : scaled) v *= static_cast<double>(total) / sum;
  } else {
    std::fill(scaled.begin(), scaled.end(), static_cast<double>(total) / static_cast<double>(K));
  }
  std::int64_t assigned = 0;
  std::vector<double> frac(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double f = std::floor(scaled[k]);
    out[k] = static_cast<std::int64_t>(f);
    frac[k] = scaled[k] - f;
    assigned += out[k];
  }
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return frac[i] > frac[j]; });
  std::int64_t left = total - assigned;
  for (std::size_t i = 0; left > 0; i = (i + 1) % K, --left) out[order[i]] += 1;
  // Scaling round-off can overshoot by a unit; take it back from the smallest fractions.
  for (auto it = order.rbegin(); left < 0 && it != order.rend(); ++it) {
    if (out[*it] > 0) {
      out[*it] -= 1;
      ++left;
    }
  }
  return out;
}

struct OracleAllocation {
  std::vector<double> real;
  double optimum = 0.0;
  std::vector<std::int64_t> rounded;
  /// Set when every tracking parameter is zero and the split fell back to uniform.
  bool uniform_fallback = false;
};

/// Closed-form minimizer of max_k c_k / T_k subject to sum_k T_k = N:
/// T_k = c_k N / sum c, optimum sum c / N.
inline OracleAllocation oracle_allocate(std::span<const double> c, std::int64_t N) {
  if (c.empty()) throw InvalidInput("need at least one arm", "c");
  if (N < 1) throw InvalidInput("budget must be positive", "N");
  double sum = 0.0;
  for (double v : c) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInput("tracking parameters must be finite and nonnegative", "c");
    sum += v;
  }
  OracleAllocation out;
  const double Nd = static_cast<double>(N);
  out.real.resize(c.size());
  if (sum == 0.0) {
    out.uniform_fallback = true;
    std::fill(out.real.begin(), out.real.end(), Nd / static_cast<double>(c.size()));
  } else {
    for (std::size_t k = 0; k < c.size(); ++k) out.real[k] = c[k] * Nd / sum;
  }
  out.optimum = sum / Nd;
  out.rounded = round_largest_remainder(out.real, N);
  return out;
}

/// Per-arm weights applied to the tracking parameters (weighted losses).
inline std::vector<double> weighted_parameters(std::span<const double> c, std::span<const double> weights) {
  if (c.size() != weights.size()) throw InvalidInput("weights and parameters differ in length", "weights");
  std::vector<double> out(c.size());
  for (std::size_t k = 0; k < c.size(); ++k) out[k] = weights[k] * c[k];
  return out;
}

/// argmax_k phi(u_k, T_k), lowest index on ties.
inline std::size_t select_arm(std::span<const double> bounds, std::span<const std::int64_t> counts) {
  if (bounds.empty()) throw InvalidInput("need at least one arm", "bounds");
  if (bounds.size() != counts.size()) throw InvalidInput("bounds and counts differ in length", "counts");
  std::size_t best = 0;
  double best_value = -kInfinity;
  for (std::size_t k = 0; k < bounds.size(); ++k) {
    const double v = tracking(bounds[k], static_cast<double>(counts[k]));
    if (v > best_value) {
      best_value = v;
      best = k;
    }
  }
  return best;
}

/// Accuracy targets for the batch allocator. Infinite thetas disable the
/// corresponding constraint.
struct BatchConstraintSpec {
  std::vector<double> theta;
  double theta_overall = kInfinity;
  std::vector<double> weights;
  std::int64_t batch = 1;

  void validate(std::size_t arms) const {
    if (theta.size() != arms) throw InvalidInput("need one theta per arm", "theta");
    if (weights.size() != arms) throw InvalidInput("need one weight per arm", "weights");
    bool any_finite = std::isfinite(theta_overall);
    for (double t : theta) {
      if (!(t > 0.0)) throw InvalidInput("theta values must be positive", "theta");
      any_finite = any_finite || std::isfinite(t);
    }
    if (!(theta_overall > 0.0)) throw InvalidInput("overall theta must be positive", "theta_overall");
    if (!any_finite) throw InvalidInput("at least one theta must be finite", "theta");
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("weights must be nonnegative", "weights");
      sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw InvalidInput("weights must sum to 1", "weights");
    if (batch < 1) throw InvalidInput("batch size must be positive", "batch");
  }
};

struct BatchAllocation {
  std::vector<double> real;
  std::vector<std::int64_t> rounded;
  /// Achieved lambda at the real solution.
  double lambda = 0.0;
  /// lambda evaluated at the rounded integer allocation.
  double rounded_lambda = 0.0;
  std::vector<bool> arm_binding;
  bool overall_binding = false;
};

namespace detail {

inline double arm_ratio(double u, double theta, double n) {
  if (u == 0.0 || !std::isfinite(theta)) return 0.0;
  if (n <= 0.0) return kInfinity;
  return u / (theta * n);
}

inline double overall_sum(std::span<const double> u, std::span<const double> base, std::span<const double> tau,
                          std::span<const double> weights) {
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double g = weights[k] * weights[k] * u[k];
    if (g == 0.0) continue;
    const double n = base[k] + tau[k];
    if (n <= 0.0) return kInfinity;
    s += g / n;
  }
  return s;
}

// Minimizes sum_k g_k / (T_k + tau_k) over tau >= floors, sum tau = budget.
// With s = nu^(-1/2) the stationary point is tau_k = max(f_k, s sqrt(g_k) - T_k),
// piecewise linear and nondecreasing in s, so s is found exactly.
inline std::vector<double> water_fill(std::span<const double> g, std::span<const double> base,
                                      std::span<const double> floors, double budget) {
  const std::size_t K = g.size();
  std::vector<double> tau(floors.begin(), floors.end());
  double left = budget - std::accumulate(floors.begin(), floors.end(), 0.0);
  if (left <= 0.0) return tau;
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < K; ++k) {
    if (g[k] > 0.0) active.push_back(k);
  }
  if (active.empty()) {
    for (double& t : tau) t += left / static_cast<double>(K);
    return tau;
  }
  auto filled = [&](double s) {
    double total = 0.0;
    for (std::size_t k : active) total += std::max(floors[k], s * std::sqrt(g[k]) - base[k]);
    return total;
  };
  const double target = std::accumulate(active.begin(), active.end(), 0.0,
                                        [&](double acc, std::size_t k) { return acc + floors[k]; }) +
                        left;
  std::vector<double> breaks;
  for (std::size_t k : active) breaks.push_back((floors[k] + base[k]) / std::sqrt(g[k]));
  std::sort(breaks.begin(), breaks.end());
  double s = breaks.back();
  double slope_all = 0.0;
  for (std::size_t k : active) slope_all += std::sqrt(g[k]);
  const double at_last = filled(breaks.back());
  if (at_last >= target) {
    double prev_s = breaks.front();
    double prev_f = filled(prev_s);
    for (std::size_t i = 1; i < breaks.size(); ++i) {
      const double f = filled(breaks[i]);
      if (f >= target) {
        s = f > prev_f ? prev_s + (target - prev_f) * (breaks[i] - prev_s) / (f - prev_f) : breaks[i];
        break;
      }
      prev_s = breaks[i];
      prev_f = f;
    }
  } else {
    s = breaks.back() + (target - at_last) / slope_all;
  }
  for (std::size_t k : active) tau[k] = std::max(floors[k], s * std::sqrt(g[k]) - base[k]);
  return tau;
}

}  // namespace detail

/// max{ max_k u_k / (theta_k (T_k + tau_k)), sum_k w_k^2 u_k / (theta_0 (T_k + tau_k)) }.
inline double evaluate_lambda(std::span<const double> u, std::span<const double> base, std::span<const double> tau,
                              const BatchConstraintSpec& spec) {
  double lam = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) lam = std::max(lam, detail::arm_ratio(u[k], spec.theta[k], base[k] + tau[k]));
  if (std::isfinite(spec.theta_overall)) {
    lam = std::max(lam, detail::overall_sum(u, base, tau, spec.weights) / spec.theta_overall);
  }
  return lam;
}

/// Solves
///   min lambda  s.t.  u_k / (T_k + tau_k) <= theta_k lambda,
///                     sum_k w_k^2 u_k / (T_k + tau_k) <= theta_0 lambda,
///                     sum_k tau_k = B, tau >= 0.
/// Feasibility is monotone in lambda, so lambda is bisected. For a fixed
/// lambda the per-arm constraints become floors on tau and the remaining
/// budget is water-filled to minimize the overall term. Both bisections
/// stop at relative tolerance 1e-10.
inline BatchAllocation batch_allocate(std::span<const double> u, std::span<const std::int64_t> counts,
                                      const BatchConstraintSpec& spec) {
  const std::size_t K = u.size();
  if (K == 0) throw InvalidInput("need at least one arm", "bounds");
  if (counts.size() != K) throw InvalidInput("bounds and counts differ in length", "counts");
  spec.validate(K);
  for (double v : u) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInput("bounds must be finite and nonnegative", "bounds");
  }
  std::vector<double> base(K);
  for (std::size_t k = 0; k < K; ++k) {
    if (counts[k] < 0) throw InvalidInput("counts must be nonnegative", "counts");
    base[k] = static_cast<double>(counts[k]);
  }
  const double B = static_cast<double>(spec.batch);
  std::vector<double> g(K);
  for (std::size_t k = 0; k < K; ++k) g[k] = spec.weights[k] * spec.weights[k] * u[k];

  auto floors_at = [&](double lam) {
    std::vector<double> f(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      if (u[k] == 0.0 || !std::isfinite(spec.theta[k])) continue;
      f[k] = std::max(0.0, u[k] / (spec.theta[k] * lam) - base[k]);
    }
    return f;
  };
  // Allocation for a given lambda when it is feasible, empty otherwise.
  auto attempt = [&](double lam) -> std::vector<double> {
    const auto f = floors_at(lam);
    if (std::accumulate(f.begin(), f.end(), 0.0) > B) return {};
    auto tau = detail::water_fill(g, base, f, B);
    if (std::isfinite(spec.theta_overall) && detail::overall_sum(u, base, tau, spec.weights) > spec.theta_overall * lam) {
      return {};
    }
    return tau;
  };

  BatchAllocation out;
  if (K == 1) {
    out.real = {B};
  } else {
    const std::vector<double> uniform(K, B / static_cast<double>(K));
    double hi = evaluate_lambda(u, base, uniform, spec);
    double lo = 0.0;
    {
      const std::vector<double> all(K, B);
      for (std::size_t k = 0; k < K; ++k) lo = std::max(lo, detail::arm_ratio(u[k], spec.theta[k], base[k] + B));
      if (std::isfinite(spec.theta_overall)) {
        lo = std::max(lo, detail::overall_sum(u, base, all, spec.weights) / spec.theta_overall);
      }
    }
    if (hi <= 0.0) {
      out.real = detail::water_fill(g, base, std::vector<double>(K, 0.0), B);
    } else {
      std::vector<double> best = attempt(hi);
      if (best.empty()) best = uniform;
      for (int iter = 0; iter < 200 && hi - lo > 1e-10 * hi; ++iter) {
        const double mid = (lo > 0.0 && hi > 2.0 * lo) ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
        auto tau = attempt(mid);
        if (tau.empty()) {
          lo = mid;
        } else {
          hi = mid;
          best = std::move(tau);
        }
      }
      out.real = std::move(best);
    }
  }
  out.lambda = evaluate_lambda(u, base, out.real, spec);
  out.rounded = round_largest_remainder(out.real, spec.batch);
  std::vector<double> rounded_real(out.rounded.begin(), out.rounded.end());
  out.rounded_lambda = evaluate_lambda(u, base, rounded_real, spec);
  out.arm_binding.assign(K, false);
  const double tol = 1e-6 * out.lambda;
  for (std::size_t k = 0; k < K; ++k) {
    out.arm_binding[k] = out.lambda > 0.0 && detail::arm_ratio(u[k], spec.theta[k], base[k] + out.real[k]) >= out.lambda - tol;
  }
  out.overall_binding = out.lambda > 0.0 && std::isfinite(spec.theta_overall) &&
                        detail::overall_sum(u, base, out.real, spec.weights) / spec.theta_overall >= out.lambda - tol;
  return out;
}

struct FeasibilityVerdict {
  bool feasible = false;
  /// Optimum of the relaxed min-max problem; the targets are attainable iff <= 1.
  double lambda = 0.0;
  BatchAllocation allocation;
};

/// Whether per-arm targets theta_k on c_k / T_k and the overall target on
/// sum w_k^2 c_k / T_k can all be met with N samples.
inline FeasibilityVerdict check_feasibility(BatchConstraintSpec spec, std::span<const double> c, std::int64_t N) {
  if (N < 1) throw InvalidInput("budget must be positive", "N");
  spec.batch = N;
  const std::vector<std::int64_t> zero(c.size(), 0);
  FeasibilityVerdict v;
  v.allocation = batch_allocate(c, zero, spec);
  v.lambda = v.allocation.lambda;
  // Bisection stops 1e-10 above the optimum; a target met with equality counts as met.
  v.feasible = v.lambda <= 1.0 + 1e-9;
  return v;
}

}  // namespace aps
