#pragma once
// Factored Dirichlet belief over K pmfs on the alphabet {0, ..., L-1}.
//
// Indices are zero-based throughout the library: arm k in [0, K), symbol l in
// [0, L). Step indices are one-based: a fresh state is at step 1 and has seen
// no samples, so after n - 1 observations the state is at step n.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aps/beta.hpp"
#include "aps/error.hpp"

namespace aps {

/// Interval restriction of a Bernoulli parameter. It applies to symbol 1
/// (the "positive" outcome); symbol 0 carries the reflected interval.
struct Truncation {
  double lower = 0.0;
  double upper = 1.0;

  friend bool operator==(const Truncation&, const Truncation&) = default;
};

struct PriorSpec {
  /// alpha[k][l] > 0.
  std::vector<std::vector<double>> alpha;
  /// Optional per-arm truncation; only meaningful when L = 2.
  std::vector<std::optional<Truncation>> truncation;

  static PriorSpec uniform(std::size_t arms, std::size_t symbols) {
    PriorSpec p;
    p.alpha.assign(arms, std::vector<double>(symbols, 1.0));
    p.truncation.assign(arms, std::nullopt);
    return p;
  }

  std::size_t arms() const { return alpha.size(); }
  std::size_t symbols() const { return alpha.empty() ? 0 : alpha.front().size(); }

  void validate() const {
    if (alpha.empty()) throw InvalidInput("prior needs at least one arm", "alpha");
    const std::size_t L = alpha.front().size();
    if (L < 2) throw InvalidInput("alphabet size must be at least 2", "alpha");
    for (const auto& row : alpha) {
      if (row.size() != L) throw InvalidInput("all arms must share the alphabet size", "alpha");
      for (double v : row) {
        if (!(v > 0.0) || !std::isfinite(v)) throw InvalidInput("Dirichlet parameters must be positive", "alpha");
      }
    }
    if (!truncation.empty() && truncation.size() != alpha.size()) {
      throw InvalidInput("truncation list must have one entry per arm", "truncation");
    }
    for (const auto& t : truncation) {
      if (!t) continue;
      if (L != 2) throw InvalidInput("truncated priors require a binary alphabet (L = 2)", "truncation");
      if (!(t->lower >= 0.0 && t->lower < t->upper && t->upper <= 1.0)) {
        throw InvalidInput("truncation interval must satisfy 0 <= lower < upper <= 1", "truncation");
      }
    }
  }
};

struct SampleRecord {
  std::size_t arm = 0;
  std::size_t symbol = 0;
  std::int64_t step = 1;
};

class PosteriorState {
 public:
  PosteriorState() = default;

  explicit PosteriorState(PriorSpec prior) : prior_(std::move(prior)) {
    prior_.validate();
    if (prior_.truncation.empty()) prior_.truncation.assign(prior_.arms(), std::nullopt);
    alpha_ = prior_.alpha;
    counts_.assign(prior_.arms(), 0);
  }

  std::size_t arms() const { return alpha_.size(); }
  std::size_t symbols() const { return alpha_.empty() ? 0 : alpha_.front().size(); }
  std::int64_t step() const { return step_; }
  std::int64_t total_samples() const { return step_ - 1; }

  double alpha(std::size_t k, std::size_t l) const { return alpha_.at(k).at(l); }
  std::span<const double> alpha(std::size_t k) const { return alpha_.at(k); }
  double alpha_total(std::size_t k) const {
    double s = 0.0;
    for (double v : alpha_.at(k)) s += v;
    return s;
  }
  std::int64_t count(std::size_t k) const { return counts_.at(k); }
  const std::vector<std::int64_t>& counts() const { return counts_; }

  /// Number of times symbol l was observed on arm k.
  std::int64_t observed(std::size_t k, std::size_t l) const {
    return static_cast<std::int64_t>(std::llround(alpha_.at(k).at(l) - prior_.alpha.at(k).at(l)));
  }

  const PriorSpec& prior() const { return prior_; }
  const std::optional<Truncation>& truncation(std::size_t k) const { return prior_.truncation.at(k); }

  /// Posterior mean of p^(k,l); honours truncation for binary arms.
  double posterior_mean(std::size_t k, std::size_t l) const {
    if (const auto& t = truncation(k)) {
      const double m1 = truncated_mean(alpha_[k][1], alpha_[k][0], t->lower, t->upper);
      return l == 1 ? m1 : 1.0 - m1;
    }
    return alpha_.at(k).at(l) / alpha_total(k);
  }

  /// Empirical pmf of arm k; the uniform pmf when the arm is unsampled.
  std::vector<double> empirical_pmf(std::size_t k) const {
    const std::size_t L = symbols();
    std::vector<double> p(L, 1.0 / static_cast<double>(L));
    const std::int64_t T = count(k);
    if (T == 0) return p;
    for (std::size_t l = 0; l < L; ++l) p[l] = static_cast<double>(observed(k, l)) / static_cast<double>(T);
    return p;
  }

  /// In-place form of update_posterior.
  void apply(const SampleRecord& rec) {
    check_indices(rec.arm, rec.symbol);
    if (rec.step != step_) throw InvalidInput("sample record step does not match posterior step", "step");
    alpha_[rec.arm][rec.symbol] += 1.0;
    counts_[rec.arm] += 1;
    step_ += 1;
  }

  /// Adds a block of per-symbol counts for one arm; conjugacy makes the order
  /// of the underlying samples irrelevant.
  void apply_counts(std::size_t arm, std::span<const std::int64_t> symbol_counts) {
    if (arm >= arms()) throw InvalidInput("arm index out of range", "arm");
    if (symbol_counts.size() != symbols()) throw InvalidInput("count vector has wrong length", "counts");
    for (auto c : symbol_counts) {
      if (c < 0) throw InvalidInput("counts must be nonnegative", "counts");
    }
    for (std::size_t l = 0; l < symbols(); ++l) {
      alpha_[arm][l] += static_cast<double>(symbol_counts[l]);
      counts_[arm] += symbol_counts[l];
      step_ += symbol_counts[l];
    }
  }

  friend bool operator==(const PosteriorState& x, const PosteriorState& y) {
    return x.alpha_ == y.alpha_ && x.counts_ == y.counts_ && x.step_ == y.step_;
  }

 private:
  void check_indices(std::size_t k, std::size_t l) const {
    if (k >= arms()) throw InvalidInput("arm index out of range", "arm");
    if (l >= symbols()) throw InvalidInput("symbol index out of range", "symbol");
  }

  PriorSpec prior_;
  std::vector<std::vector<double>> alpha_;
  std::vector<std::int64_t> counts_;
  std::int64_t step_ = 1;
};

/// Conjugate update: alpha^(U_n, Y_n) += 1.
inline PosteriorState update_posterior(PosteriorState state, const SampleRecord& rec) {
  state.apply(rec);
  return state;
}

/// Beta marginal parameters (alpha^(k,l), alpha^(k,0) - alpha^(k,l)) of p^(k,l).
struct BetaMarginal {
  double a;
  double b;
};

inline BetaMarginal marginal(const PosteriorState& s, std::size_t k, std::size_t l) {
  const double a = s.alpha(k, l);
  return {a, s.alpha_total(k) - a};
}

}  // namespace aps
