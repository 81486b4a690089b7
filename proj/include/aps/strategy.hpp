#pragma once
// Sequential sampling loop shared by the Bayesian UCB rule and the
// frequentist baselines: compute a variance bound per arm, sample the arm with
// the largest u / T, update the posterior.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aps/allocation.hpp"
#include "aps/bounds.hpp"
#include "aps/error.hpp"
#include "aps/posterior.hpp"

namespace aps {

enum class BoundKind { BayesUcb, Hoeffding, EmpiricalBernstein };

/// Draws one outcome symbol from the requested arm. May throw to signal an
/// environment failure.
using ArmSampler = std::function<std::size_t(std::size_t arm)>;

/// What the loop exposes after each step n.
struct StepView {
  std::int64_t n = 0;
  double delta_n = 0.0;
  std::size_t arm = 0;
  std::size_t symbol = 0;
  /// u_n^(k) used to pick the arm.
  const std::vector<double>& bounds;
  /// E_n (Bayesian rule only).
  const IntervalSet* intervals = nullptr;
  /// Posterior after incorporating the n-th sample.
  const PosteriorState& state;
};

using StepObserver = std::function<void(const StepView&)>;

struct RunOptions {
  /// Recompute every arm's intervals at every step. Off by default: an arm
  /// that was not sampled keeps its posterior while delta_n shrinks, so its
  /// fresh interval contains the running one and the intersection is unchanged.
  bool full_recompute = false;
  StepObserver observer;
};

struct Trajectory {
  std::vector<SampleRecord> history;
  /// Empirical pmf per arm (uniform for unsampled arms, see `unsampled`).
  std::vector<std::vector<double>> estimates;
  std::vector<bool> unsampled;
  /// bound_trace[k][n - 1] = u_n^(k).
  std::vector<std::vector<double>> bound_trace;
  std::vector<std::int64_t> counts;
  PosteriorState final_state;
  IntervalSet final_intervals;
  bool truncated = false;
  std::string error;
  /// Steps where the simplex-box problem had no feasible point; the vacuous
  /// bound 1 - 1/L was used instead.
  std::int64_t infeasible_boxes = 0;
};

inline Trajectory run_strategy(BoundKind kind, const PriorSpec& prior, const DeltaSchedule& schedule,
                               const ArmSampler& sample, std::int64_t budget, const RunOptions& options = {}) {
  schedule.validate();
  PosteriorState state(prior);
  const std::size_t K = state.arms();
  const std::size_t L = state.symbols();
  if (schedule.arms != K || schedule.symbols != L) throw InvalidInput("schedule dimensions differ from the prior", "schedule");
  if (budget < 0 || budget > schedule.budget) throw InvalidInput("budget must lie in [0, N] of the schedule", "budget");
  if (kind == BoundKind::EmpiricalBernstein && L != 2) {
    throw UnsupportedConfiguration("empirical-Bernstein bound is defined for L = 2 only");
  }

  Trajectory out;
  out.bound_trace.assign(K, {});
  for (auto& tr : out.bound_trace) tr.reserve(static_cast<std::size_t>(budget));
  out.history.reserve(static_cast<std::size_t>(budget));

  IntervalSet intervals(K, L);
  std::vector<double> bounds(K, 1.0 - 1.0 / static_cast<double>(L));
  std::optional<std::size_t> last_arm;
  const double vacuous = 1.0 - 1.0 / static_cast<double>(L);

  for (std::int64_t n = 1; n <= budget; ++n) {
    const double delta_n = schedule.at(n);
    if (kind == BoundKind::BayesUcb) {
      for (std::size_t k = 0; k < K; ++k) {
        if (last_arm && !options.full_recompute && *last_arm != k) continue;
        refresh_arm_intervals(intervals, state, k, delta_n);
        try {
          bounds[k] = variance_ucb(intervals, k).value;
        } catch (const Infeasible&) {
          bounds[k] = vacuous;
          ++out.infeasible_boxes;
        }
      }
    } else {
      const auto b = kind == BoundKind::Hoeffding ? BaselineKind::Hoeffding : BaselineKind::EmpiricalBernstein;
      for (std::size_t k = 0; k < K; ++k) bounds[k] = baseline_ucb(state, delta_n, k, b).value;
    }
    for (std::size_t k = 0; k < K; ++k) out.bound_trace[k].push_back(bounds[k]);

    const std::size_t arm = select_arm(bounds, state.counts());
    std::size_t symbol = 0;
    try {
      symbol = sample(arm);
      if (symbol >= L) throw InvalidInput("environment returned an out-of-range symbol", "symbol");
    } catch (const std::exception& e) {
      out.truncated = true;
      out.error = e.what();
      for (auto& tr : out.bound_trace) tr.pop_back();
      break;
    }
    const SampleRecord rec{arm, symbol, n};
    state.apply(rec);
    out.history.push_back(rec);
    last_arm = arm;
    if (options.observer) {
      options.observer(StepView{n, delta_n, arm, symbol, bounds,
                                kind == BoundKind::BayesUcb ? &intervals : nullptr, state});
    }
  }

  out.counts = state.counts();
  out.unsampled.assign(K, false);
  for (std::size_t k = 0; k < K; ++k) {
    out.estimates.push_back(state.empirical_pmf(k));
    out.unsampled[k] = state.count(k) == 0;
  }
  out.final_state = std::move(state);
  out.final_intervals = std::move(intervals);
  return out;
}

/// Bayesian UCB: intervals from the Beta marginals of the Dirichlet posterior,
/// u_n^(k) from the simplex-box quadratic program.
inline Trajectory run_bayes_ucb(const PriorSpec& prior, const DeltaSchedule& schedule, const ArmSampler& sample,
                                std::int64_t budget, const RunOptions& options = {}) {
  return run_strategy(BoundKind::BayesUcb, prior, schedule, sample, budget, options);
}

}  // namespace aps
