#pragma once
// Confidence intervals on the per-symbol probabilities, the failure-probability
// schedule that drives them, and upper confidence bounds on the per-arm
// variance sum c^(k) = sum_l p^(k,l) (1 - p^(k,l)).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "aps/beta.hpp"
#include "aps/error.hpp"
#include "aps/posterior.hpp"

namespace aps {

/// delta_n = delta / (K L n (1 + ln N)) with delta = eta N^(-5/2).
struct DeltaSchedule {
  std::size_t arms = 1;
  std::size_t symbols = 2;
  std::int64_t budget = 1;
  double eta = 1.0;

  static DeltaSchedule with_default_eta(std::size_t arms, std::size_t symbols, std::int64_t budget) {
    return DeltaSchedule{arms, symbols, budget, 1.0 / static_cast<double>(budget)};
  }

  void validate() const {
    if (arms < 1) throw InvalidInput("schedule needs at least one arm", "arms");
    if (symbols < 2) throw InvalidInput("schedule needs at least two symbols", "symbols");
    if (budget < 1) throw InvalidInput("budget must be positive", "budget");
    if (!(eta > 0.0 && eta <= 1.0)) throw InvalidInput("eta must lie in (0, 1]", "eta");
  }

  double delta() const { return eta * std::pow(static_cast<double>(budget), -2.5); }

  double at(std::int64_t n) const {
    if (n < 1 || n > budget) throw InvalidInput("step index out of range [1, N]", "n");
    const double denom = static_cast<double>(arms) * static_cast<double>(symbols) * static_cast<double>(n) *
                         (1.0 + std::log(static_cast<double>(budget)));
    return delta() / denom;
  }
};

inline double delta_at(const DeltaSchedule& schedule, std::int64_t n) { return schedule.at(n); }

struct Interval {
  double lower = 0.0;
  double upper = 1.0;

  double width() const { return upper - lower; }
  bool contains(double v) const { return v >= lower && v <= upper; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Running intervals E_n^(k,l), shrinking by intersection.
class IntervalSet {
 public:
  IntervalSet() = default;
  IntervalSet(std::size_t arms, std::size_t symbols)
      : arms_(arms), symbols_(symbols), boxes_(arms * symbols, Interval{}) {}

  std::size_t arms() const { return arms_; }
  std::size_t symbols() const { return symbols_; }

  const Interval& at(std::size_t k, std::size_t l) const { return boxes_.at(k * symbols_ + l); }
  Interval& at(std::size_t k, std::size_t l) { return boxes_.at(k * symbols_ + l); }
  std::span<const Interval> arm(std::size_t k) const {
    return std::span<const Interval>(boxes_).subspan(k * symbols_, symbols_);
  }

  /// Number of updates where the fresh interval missed the running one.
  std::int64_t empty_intersections() const { return empty_intersections_; }
  void note_empty_intersection() { ++empty_intersections_; }

  friend bool operator==(const IntervalSet& x, const IntervalSet& y) {
    return x.arms_ == y.arms_ && x.symbols_ == y.symbols_ && x.boxes_ == y.boxes_;
  }

 private:
  std::size_t arms_ = 0;
  std::size_t symbols_ = 0;
  std::vector<Interval> boxes_;
  std::int64_t empty_intersections_ = 0;
};

namespace detail {

inline double clamp_tail(double t) { return std::clamp(t, 1e-300, 1.0 - 1e-16); }

}  // namespace detail

/// Posterior interval for p^(k,l) with delta/2 mass in each tail, before
/// intersection with the running interval.
inline Interval posterior_interval(const PosteriorState& state, std::size_t k, std::size_t l, double delta_n) {
  const double tail = detail::clamp_tail(0.5 * delta_n);
  if (const auto& t = state.truncation(k)) {
    // Bernoulli arm with interval prior: solve for symbol 1 and reflect.
    const double a = state.alpha(k, 1);
    const double b = state.alpha(k, 0);
    const Interval pos{truncated_quantile(tail, a, b, t->lower, t->upper),
                       truncated_upper_quantile(tail, a, b, t->lower, t->upper)};
    if (l == 1) return pos;
    return {1.0 - pos.upper, 1.0 - pos.lower};
  }
  const BetaMarginal m = marginal(state, k, l);
  return {beta_quantile(tail, m.a, m.b), beta_upper_quantile(tail, m.a, m.b)};
}

/// Recomputes the intervals of one arm in place and intersects them with the
/// running ones. Returns the number of empty intersections encountered.
inline int refresh_arm_intervals(IntervalSet& set, const PosteriorState& state, std::size_t k, double delta_n) {
  const std::size_t L = set.symbols();
  std::vector<Interval> fresh(L);
  if (L == 2 && !state.truncation(k)) {
    fresh[1] = posterior_interval(state, k, 1, delta_n);
    fresh[0] = {1.0 - fresh[1].upper, 1.0 - fresh[1].lower};
  } else {
    for (std::size_t l = 0; l < L; ++l) fresh[l] = posterior_interval(state, k, l, delta_n);
  }
  int empties = 0;
  for (std::size_t l = 0; l < L; ++l) {
    Interval& cur = set.at(k, l);
    const Interval next{std::max(cur.lower, fresh[l].lower), std::min(cur.upper, fresh[l].upper)};
    if (next.lower > next.upper) {
      // Disjoint: keep the previous interval.
      set.note_empty_intersection();
      ++empties;
      continue;
    }
    cur = {std::clamp(next.lower, 0.0, 1.0), std::clamp(next.upper, 0.0, 1.0)};
  }
  return empties;
}

/// E_n = [a_n, b_n] cap E_{n-1} for every (k, l), at step n = state.step().
inline IntervalSet update_intervals(IntervalSet prev, const PosteriorState& state, const DeltaSchedule& schedule) {
  if (prev.arms() != state.arms() || prev.symbols() != state.symbols()) {
    throw InvalidInput("interval set and posterior dimensions differ", "intervals");
  }
  const double delta_n = schedule.at(state.step());
  for (std::size_t k = 0; k < state.arms(); ++k) refresh_arm_intervals(prev, state, k, delta_n);
  return prev;
}

/// u^(k) and its maximizer q^(k).
struct VarianceBound {
  double value = 0.0;
  std::vector<double> maximizer;
};

/// max sum_l q_l (1 - q_l) over the simplex intersected with the boxes.
///
/// On the simplex the objective is 1 - sum q_l^2, so the maximizer is the
/// Euclidean projection of the uniform point: q_l = clamp(level, a_l, b_l)
/// where the level makes the coordinates sum to one. The sum is piecewise
/// linear in the level, so the level is found exactly between breakpoints.
inline VarianceBound variance_ucb(std::span<const Interval> boxes) {
  const std::size_t L = boxes.size();
  if (L == 0) throw InvalidInput("no boxes supplied", "intervals");
  double sum_lo = 0.0;
  double sum_hi = 0.0;
  for (const auto& b : boxes) {
    if (!(b.lower <= b.upper)) throw InvalidInput("box with lower > upper", "intervals");
    sum_lo += b.lower;
    sum_hi += b.upper;
  }
  constexpr double slack = 1e-12;
  if (sum_lo > 1.0 + slack || sum_hi < 1.0 - slack) {
    throw Infeasible("boxes do not intersect the probability simplex");
  }

  auto filled = [&](double level) {
    double s = 0.0;
    for (const auto& b : boxes) s += std::clamp(level, b.lower, b.upper);
    return s;
  };

  VarianceBound out;
  out.maximizer.resize(L);
  if (sum_lo >= 1.0) {
    for (std::size_t l = 0; l < L; ++l) out.maximizer[l] = boxes[l].lower;
  } else if (sum_hi <= 1.0) {
    for (std::size_t l = 0; l < L; ++l) out.maximizer[l] = boxes[l].upper;
  } else {
    std::vector<double> breaks;
    breaks.reserve(2 * L);
    for (const auto& b : boxes) {
      breaks.push_back(b.lower);
      breaks.push_back(b.upper);
    }
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    double level = breaks.back();
    double prev_x = breaks.front();
    double prev_s = filled(prev_x);
    for (std::size_t i = 1; i < breaks.size(); ++i) {
      const double s = filled(breaks[i]);
      if (s >= 1.0) {
        level = s > prev_s ? prev_x + (1.0 - prev_s) * (breaks[i] - prev_x) / (s - prev_s) : breaks[i];
        break;
      }
      prev_x = breaks[i];
      prev_s = s;
    }
    for (std::size_t l = 0; l < L; ++l) out.maximizer[l] = std::clamp(level, boxes[l].lower, boxes[l].upper);
  }
  for (double q : out.maximizer) out.value += q * (1.0 - q);
  return out;
}

inline VarianceBound variance_ucb(const IntervalSet& intervals, std::size_t arm) {
  if (arm >= intervals.arms()) throw InvalidInput("arm index out of range", "arm");
  return variance_ucb(intervals.arm(arm));
}

/// Plug-in variance sum of a pmf.
inline double tracking_parameter(std::span<const double> pmf) {
  double c = 0.0;
  for (double p : pmf) c += p * (1.0 - p);
  return c;
}

enum class BaselineKind { Hoeffding, EmpiricalBernstein };

/// Non-Bayesian variance bounds used as comparison strategies.
///
/// Hoeffding: plug-in variance plus sqrt(8 ln(2/delta_n) / (T + 1)), capped at
/// 1 - 1/L. Empirical Bernstein (L = 2): the Audibert-Munos-Szepesvari
/// interval p_hat +- (sqrt(2 v ln(3/delta_n) / T) + 3 ln(3/delta_n) / T) on the
/// Bernoulli parameter, then the largest 2 p (1 - p) inside it.
inline VarianceBound baseline_ucb(const PosteriorState& state, double delta_n, std::size_t arm, BaselineKind kind) {
  if (arm >= state.arms()) throw InvalidInput("arm index out of range", "arm");
  const std::size_t L = state.symbols();
  if (kind == BaselineKind::EmpiricalBernstein && L != 2) {
    throw UnsupportedConfiguration("empirical-Bernstein bound is defined for L = 2 only");
  }
  if (!(delta_n > 0.0)) throw InvalidInput("delta_n must be positive", "delta_n");
  const double vacuous = 1.0 - 1.0 / static_cast<double>(L);
  const std::int64_t T = state.count(arm);
  if (T == 0) return {vacuous, {}};
  const auto pmf = state.empirical_pmf(arm);
  const double Td = static_cast<double>(T);

  if (kind == BaselineKind::Hoeffding) {
    const double dev = std::sqrt(8.0 * std::log(2.0 / delta_n) / (Td + 1.0));
    return {std::min(vacuous, tracking_parameter(pmf) + dev), pmf};
  }
  const double p = pmf[1];
  const double lg = std::log(3.0 / delta_n);
  const double w = std::sqrt(2.0 * p * (1.0 - p) * lg / Td) + 3.0 * lg / Td;
  const double m = std::clamp(0.5, std::max(0.0, p - w), std::min(1.0, p + w));
  return {2.0 * m * (1.0 - m), {1.0 - m, m}};
}

inline VarianceBound baseline_ucb(const PosteriorState& state, const DeltaSchedule& schedule, std::size_t arm,
                                  BaselineKind kind) {
  return baseline_ucb(state, schedule.at(std::min(state.step(), schedule.budget)), arm, kind);
}

/// Width bound on E_n^(k,l) from sub-Gaussianity of the Beta marginals.
inline double interval_width_bound(double delta_n, double alpha_total) {
  return std::sqrt(2.0 * std::log(2.0 / delta_n) / (alpha_total + 1.0));
}

/// Bound on u_n^(k) - c^(k) when every true probability is inside its interval.
inline double variance_gap_bound(double delta_n, std::int64_t samples) {
  return std::sqrt(8.0 * std::log(2.0 / delta_n) / (static_cast<double>(samples) + 1.0));
}

}  // namespace aps
