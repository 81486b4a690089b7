#pragma once
// Monte Carlo harness: runs sampling strategies against known pmfs, records
// per-arm squared error, allocations and variance bounds at checkpoints, and
// aggregates them into regret curves.
//
// Randomness: every (replication, arm) pair owns an outcome stream, and a
// strategy's j-th sample of arm k is the j-th element of that stream. All
// strategies in a replication therefore see the same outcomes for the same
// arm (common random numbers), which keeps paired comparisons tight.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "aps/allocation.hpp"
#include "aps/bounds.hpp"
#include "aps/error.hpp"
#include "aps/posterior.hpp"
#include "aps/strategy.hpp"

namespace aps {

enum class Strategy { BayesUcb, HoeffdingUcb, EmpiricalBernstein, Oracle, Uniform };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::BayesUcb: return "bayes-ucb";
    case Strategy::HoeffdingUcb: return "hoeffding-ucb";
    case Strategy::EmpiricalBernstein: return "empirical-bernstein";
    case Strategy::Oracle: return "oracle";
    case Strategy::Uniform: return "uniform";
  }
  return "unknown";
}

inline Strategy parse_strategy(const std::string& name) {
  for (Strategy s : {Strategy::BayesUcb, Strategy::HoeffdingUcb, Strategy::EmpiricalBernstein, Strategy::Oracle,
                     Strategy::Uniform}) {
    if (to_string(s) == name) return s;
  }
  throw InvalidInput("unknown strategy '" + name + "'", "strategies");
}

/// Squared l2 distance sum_l (p_l - q_l)^2.
inline double mse(std::span<const double> p, std::span<const double> estimate) {
  if (p.size() != estimate.size()) throw InvalidInput("pmfs differ in length", "pmf");
  double s = 0.0;
  for (std::size_t l = 0; l < p.size(); ++l) {
    const double d = p[l] - estimate[l];
    s += d * d;
  }
  return s;
}

/// Sticky record of whether every true probability has stayed inside its interval.
struct EventTracker {
  bool holds = true;
};

inline EventTracker track_event(EventTracker tracker, const IntervalSet& intervals,
                                const std::vector<std::vector<double>>& p) {
  if (p.size() != intervals.arms()) throw InvalidInput("pmf count differs from interval arms", "pmfs");
  if (!tracker.holds) return tracker;
  for (std::size_t k = 0; k < intervals.arms(); ++k) {
    if (p[k].size() != intervals.symbols()) throw InvalidInput("pmf length differs from interval symbols", "pmfs");
    for (std::size_t l = 0; l < intervals.symbols(); ++l) {
      if (!intervals.at(k, l).contains(p[k][l])) {
        tracker.holds = false;
        return tracker;
      }
    }
  }
  return tracker;
}

// ---------------------------------------------------------------------------
// Local averaging

struct LocalAveragingSpec {
  /// Per-arm l2 radius. Ignored when `measure` is set.
  std::vector<double> radius;
  /// Target simplex measure of the ball; the radius is calibrated per arm.
  std::optional<double> measure;
  std::uint64_t seed = 0;
};

struct LocalDraw {
  std::vector<std::vector<double>> pmfs;
  double acceptance_rate = 1.0;
};

namespace detail {

inline std::vector<double> uniform_simplex(std::size_t L, std::mt19937_64& rng) {
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> v(L);
  double s = 0.0;
  for (double& x : v) {
    x = expo(rng);
    s += x;
  }
  for (double& x : v) x /= s;
  return v;
}

inline double l2_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace detail

/// Radius whose l2-ball around `center` has simplex measure `measure`,
/// estimated as the empirical quantile of distances of uniform simplex draws.
inline double calibrate_radius(double measure, std::span<const double> center, std::mt19937_64& rng) {
  if (!(measure > 0.0 && measure <= 1.0)) throw InvalidInput("measure must lie in (0, 1]", "measure");
  const std::size_t draws = static_cast<std::size_t>(std::clamp(100.0 / measure, 2e5, 5e6));
  std::vector<double> dist(draws);
  for (auto& d : dist) {
    const auto x = detail::uniform_simplex(center.size(), rng);
    d = detail::l2_distance(x, center);
  }
  const std::size_t idx = std::min(draws - 1, static_cast<std::size_t>(std::ceil(measure * static_cast<double>(draws))));
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(idx), dist.end());
  return dist[idx];
}

/// Draws pi^(k) uniformly from (simplex cap l2-ball(p^(k), r^(k))) by rejection
/// from the flat Dirichlet.
inline LocalDraw sample_local(const LocalAveragingSpec& spec, const std::vector<std::vector<double>>& p,
                              std::mt19937_64& rng) {
  std::vector<double> radius = spec.radius;
  if (spec.measure) {
    radius.clear();
    for (const auto& row : p) radius.push_back(calibrate_radius(*spec.measure, row, rng));
  }
  if (radius.size() != p.size()) throw InvalidInput("need one radius per arm", "radius");
  constexpr std::int64_t max_attempts = 5'000'000;
  LocalDraw out;
  std::int64_t attempts = 0;
  std::int64_t accepted = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!(radius[k] >= 0.0)) throw InvalidInput("radius must be nonnegative", "radius");
    if (radius[k] == 0.0) {
      out.pmfs.push_back(p[k]);
      continue;
    }
    std::int64_t tries = 0;
    while (true) {
      if (tries == max_attempts) {
        throw NumericalDegeneracy(
            "radius too small: acceptance rate below 1e-6; perturb the pmfs directly instead of rejection sampling");
      }
      ++tries;
      auto x = detail::uniform_simplex(p[k].size(), rng);
      if (detail::l2_distance(x, p[k]) <= radius[k]) {
        out.pmfs.push_back(std::move(x));
        break;
      }
    }
    attempts += tries;
    ++accepted;
  }
  out.acceptance_rate = attempts > 0 ? static_cast<double>(accepted) / static_cast<double>(attempts) : 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Outcome streams

/// Lazily generated per-arm outcome sequences for one replication.
class OutcomeStreams {
 public:
  OutcomeStreams(std::uint64_t seed, std::uint64_t replication, std::vector<std::vector<double>> pmfs)
      : pmfs_(std::move(pmfs)) {
    for (std::size_t k = 0; k < pmfs_.size(); ++k) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(replication), static_cast<std::uint32_t>(replication >> 32),
                        static_cast<std::uint32_t>(k), 0x5eedu};
      gens_.emplace_back(seq);
      cdf_.emplace_back();
      double acc = 0.0;
      for (double v : pmfs_[k]) cdf_.back().push_back(acc += v);
      outcomes_.emplace_back();
      prefix_.emplace_back(pmfs_[k].size(), 0);
    }
  }

  std::size_t symbols() const { return pmfs_.front().size(); }

  std::size_t outcome(std::size_t arm, std::size_t j) {
    extend(arm, j + 1);
    return outcomes_[arm][j];
  }

  /// Symbol counts among the first `n` outcomes of `arm`.
  std::vector<std::int64_t> counts(std::size_t arm, std::size_t n) {
    extend(arm, n);
    const std::size_t L = symbols();
    return std::vector<std::int64_t>(prefix_[arm].begin() + static_cast<std::ptrdiff_t>(n * L),
                                     prefix_[arm].begin() + static_cast<std::ptrdiff_t>((n + 1) * L));
  }

 private:
  void extend(std::size_t arm, std::size_t n) {
    auto& out = outcomes_[arm];
    const std::size_t L = symbols();
    while (out.size() < n) {
      const double u = std::generate_canonical<double, 53>(gens_[arm]);
      const auto& c = cdf_[arm];
      std::size_t l = 0;
      while (l + 1 < L && u >= c[l]) ++l;
      out.push_back(static_cast<std::uint16_t>(l));
      auto& pre = prefix_[arm];
      const std::size_t base = pre.size() - L;
      pre.resize(pre.size() + L);
      std::copy_n(pre.begin() + static_cast<std::ptrdiff_t>(base), L, pre.begin() + static_cast<std::ptrdiff_t>(base + L));
      pre[base + L + l] += 1;
    }
  }

  std::vector<std::vector<double>> pmfs_;
  std::vector<std::mt19937_64> gens_;
  std::vector<std::vector<double>> cdf_;
  std::vector<std::vector<std::uint16_t>> outcomes_;
  std::vector<std::vector<std::int64_t>> prefix_;
};

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentConfig {
  std::vector<std::vector<double>> pmfs;
  std::int64_t budget = 1;
  /// Defaults to 1 / budget.
  std::optional<double> eta;
  std::vector<Strategy> strategies{Strategy::BayesUcb, Strategy::HoeffdingUcb, Strategy::Oracle};
  std::int64_t replications = 2000;
  std::uint64_t seed = 1;
  /// Defaults to 50 log-spaced values in [K, N].
  std::vector<std::int64_t> checkpoints;
  std::optional<LocalAveragingSpec> local_averaging;
  unsigned workers = 1;

  double effective_eta() const { return eta.value_or(1.0 / static_cast<double>(budget)); }

  void validate() const {
    if (pmfs.empty()) throw InvalidInput("need at least one pmf", "pmfs");
    const std::size_t L = pmfs.front().size();
    if (L < 2) throw InvalidInput("pmfs need at least two symbols", "pmfs");
    for (const auto& row : pmfs) {
      if (row.size() != L) throw InvalidInput("pmfs must share the alphabet size", "pmfs");
      double s = 0.0;
      for (double v : row) {
        if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("pmf entries must lie in [0, 1]", "pmfs");
        s += v;
      }
      if (std::fabs(s - 1.0) > 1e-12) throw InvalidInput("pmf rows must sum to 1", "pmfs");
    }
    if (budget < 1) throw InvalidInput("budget must be positive", "budget");
    const double e = effective_eta();
    if (!(e > 0.0 && e <= 1.0)) throw InvalidInput("eta must lie in (0, 1]", "eta");
    if (strategies.empty()) throw InvalidInput("need at least one strategy", "strategies");
    if (replications < 1) throw InvalidInput("replications must be at least 1", "replications");
    for (auto n : checkpoints) {
      if (n < 1 || n > budget) throw InvalidInput("checkpoints must lie in [1, N]", "checkpoints");
    }
    if (!std::is_sorted(checkpoints.begin(), checkpoints.end())) throw InvalidInput("checkpoints must be sorted", "checkpoints");
    for (auto s : strategies) {
      if (s == Strategy::EmpiricalBernstein && L != 2) {
        throw UnsupportedConfiguration("empirical-Bernstein strategy requires L = 2");
      }
    }
  }
};

/// `count` log-spaced integers in [lo, hi], deduplicated, always including hi.
inline std::vector<std::int64_t> log_spaced_checkpoints(std::int64_t lo, std::int64_t hi, int count = 50) {
  lo = std::max<std::int64_t>(1, std::min(lo, hi));
  std::vector<std::int64_t> out;
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 1.0 : static_cast<double>(i) / (count - 1);
    const double v = std::exp(std::log(static_cast<double>(lo)) * (1.0 - t) + std::log(static_cast<double>(hi)) * t);
    out.push_back(std::clamp<std::int64_t>(std::llround(v), lo, hi));
  }
  out.push_back(hi);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct ArmStats {
  double mse_mean = 0.0;
  double mse_se = 0.0;
  double samples_mean = 0.0;
  /// NaN for strategies without a variance bound.
  double bound_mean = std::numeric_limits<double>::quiet_NaN();
  double bound_se = std::numeric_limits<double>::quiet_NaN();
};

struct CheckpointStats {
  std::int64_t n = 0;
  /// Mean over replications of phi*(pi, n) = sum_k c^(k) / n.
  double oracle_value = 0.0;
  /// max_k mean MSE_k minus oracle_value.
  double regret = 0.0;
  double regret_se = 0.0;
  std::size_t worst_arm = 0;
  std::vector<ArmStats> arms;
};

struct StrategyReport {
  Strategy strategy = Strategy::BayesUcb;
  std::vector<CheckpointStats> checkpoints;
  /// Fraction of replications whose intervals ever excluded a true
  /// probability; only defined for bayes-ucb.
  std::optional<double> event_failure_rate;
  /// Per-replication MSE: mse[r][checkpoint][arm].
  std::vector<std::vector<std::vector<double>>> mse;
};

struct RegretReport {
  std::vector<std::int64_t> checkpoints;
  std::vector<StrategyReport> strategies;
  std::int64_t replications = 0;
  /// Per-replication oracle value phi*(pi_r, n): [r][checkpoint].
  std::vector<std::vector<double>> oracle_values;
  double local_acceptance_rate = 1.0;

  const StrategyReport& at(Strategy s) const {
    for (const auto& r : strategies) {
      if (r.strategy == s) return r;
    }
    throw InvalidInput("strategy not present in report: " + to_string(s), "strategy");
  }
};

namespace detail {

struct ReplicationResult {
  std::vector<std::vector<double>> pmfs;
  double acceptance = 1.0;
  std::vector<double> oracle_values;
  // [strategy][checkpoint][arm]
  std::vector<std::vector<std::vector<double>>> mse;
  std::vector<std::vector<std::vector<double>>> samples;
  std::vector<std::vector<std::vector<double>>> bounds;
  std::vector<std::optional<bool>> event_holds;
};

inline ReplicationResult run_replication(const ExperimentConfig& cfg, const std::vector<std::int64_t>& checkpoints,
                                         std::uint64_t rep) {
  const std::size_t K = cfg.pmfs.size();
  const std::size_t L = cfg.pmfs.front().size();
  const std::size_t C = checkpoints.size();
  ReplicationResult res;
  res.pmfs = cfg.pmfs;
  if (cfg.local_averaging) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(cfg.local_averaging->seed),
                      0x10ca1u};
    std::mt19937_64 rng(seq);
    LocalDraw draw = sample_local(*cfg.local_averaging, cfg.pmfs, rng);
    res.pmfs = std::move(draw.pmfs);
    res.acceptance = draw.acceptance_rate;
  }
  std::vector<double> c(K);
  for (std::size_t k = 0; k < K; ++k) c[k] = tracking_parameter(res.pmfs[k]);
  double csum = 0.0;
  for (double v : c) csum += v;
  for (auto n : checkpoints) res.oracle_values.push_back(csum / static_cast<double>(n));

  OutcomeStreams streams(cfg.seed, rep, res.pmfs);
  const DeltaSchedule schedule{K, L, cfg.budget, cfg.effective_eta()};
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (Strategy s : cfg.strategies) {
    std::vector<std::vector<double>> mse_c(C, std::vector<double>(K, 0.0));
    std::vector<std::vector<double>> samples_c(C, std::vector<double>(K, 0.0));
    std::vector<std::vector<double>> bounds_c(C, std::vector<double>(K, nan));
    std::optional<bool> holds;

    if (s == Strategy::Oracle || s == Strategy::Uniform) {
      const std::vector<double> equal(K, 1.0);
      for (std::size_t i = 0; i < C; ++i) {
        const auto alloc = oracle_allocate(s == Strategy::Oracle ? std::span<const double>(c) : equal, checkpoints[i]);
        for (std::size_t k = 0; k < K; ++k) {
          const auto T = alloc.rounded[k];
          const auto counts = streams.counts(k, static_cast<std::size_t>(T));
          std::vector<double> est(L, 1.0 / static_cast<double>(L));
          if (T > 0) {
            for (std::size_t l = 0; l < L; ++l) est[l] = static_cast<double>(counts[l]) / static_cast<double>(T);
          }
          mse_c[i][k] = mse(res.pmfs[k], est);
          samples_c[i][k] = static_cast<double>(T);
        }
      }
    } else {
      const BoundKind kind = s == Strategy::BayesUcb ? BoundKind::BayesUcb
                             : s == Strategy::HoeffdingUcb ? BoundKind::Hoeffding
                                                           : BoundKind::EmpiricalBernstein;
      std::vector<std::size_t> cursor(K, 0);
      ArmSampler sampler = [&](std::size_t arm) { return streams.outcome(arm, cursor[arm]++); };
      EventTracker tracker;
      std::size_t next = 0;
      RunOptions opts;
      opts.observer = [&](const StepView& v) {
        if (v.intervals) tracker = track_event(tracker, *v.intervals, res.pmfs);
        while (next < C && checkpoints[next] == v.n) {
          for (std::size_t k = 0; k < K; ++k) {
            mse_c[next][k] = mse(res.pmfs[k], v.state.empirical_pmf(k));
            samples_c[next][k] = static_cast<double>(v.state.count(k));
            bounds_c[next][k] = v.bounds[k];
          }
          ++next;
        }
      };
      run_strategy(kind, PriorSpec::uniform(K, L), schedule, sampler, cfg.budget, opts);
      if (kind == BoundKind::BayesUcb) holds = tracker.holds;
    }
    res.mse.push_back(std::move(mse_c));
    res.samples.push_back(std::move(samples_c));
    res.bounds.push_back(std::move(bounds_c));
    res.event_holds.push_back(holds);
  }
  return res;
}

inline void mean_se(const std::vector<double>& v, double& mean, double& se) {
  const double n = static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += x;
  mean = s / n;
  if (v.size() < 2) {
    se = 0.0;
    return;
  }
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  se = std::sqrt(ss / (n - 1.0) / n);
}

}  // namespace detail

/// Runs every strategy for cfg.replications replications. Deterministic in
/// cfg.seed and independent of cfg.workers: replication r always uses the
/// same streams and results are merged in replication order.
inline RegretReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::size_t K = cfg.pmfs.size();
  auto checkpoints = cfg.checkpoints.empty() ? log_spaced_checkpoints(static_cast<std::int64_t>(K), cfg.budget)
                                             : cfg.checkpoints;
  const std::size_t R = static_cast<std::size_t>(cfg.replications);
  std::vector<detail::ReplicationResult> results(R);

  const unsigned workers = std::max(1u, std::min<unsigned>(cfg.workers, static_cast<unsigned>(R)));
  if (workers == 1) {
    for (std::size_t r = 0; r < R; ++r) results[r] = detail::run_replication(cfg, checkpoints, r);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t r = w; r < R; r += workers) results[r] = detail::run_replication(cfg, checkpoints, r);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  RegretReport report;
  report.checkpoints = checkpoints;
  report.replications = cfg.replications;
  double acc = 0.0;
  for (const auto& r : results) {
    report.oracle_values.push_back(r.oracle_values);
    acc += r.acceptance;
  }
  report.local_acceptance_rate = acc / static_cast<double>(R);

  const std::size_t C = checkpoints.size();
  for (std::size_t si = 0; si < cfg.strategies.size(); ++si) {
    StrategyReport sr;
    sr.strategy = cfg.strategies[si];
    sr.mse.resize(R);
    for (std::size_t r = 0; r < R; ++r) sr.mse[r] = results[r].mse[si];
    if (results.front().event_holds[si]) {
      std::int64_t failures = 0;
      for (const auto& r : results) failures += *r.event_holds[si] ? 0 : 1;
      sr.event_failure_rate = static_cast<double>(failures) / static_cast<double>(R);
    }
    for (std::size_t i = 0; i < C; ++i) {
      CheckpointStats cs;
      cs.n = checkpoints[i];
      std::vector<double> col(R);
      for (std::size_t k = 0; k < K; ++k) {
        ArmStats as;
        for (std::size_t r = 0; r < R; ++r) col[r] = results[r].mse[si][i][k];
        detail::mean_se(col, as.mse_mean, as.mse_se);
        double dummy = 0.0;
        for (std::size_t r = 0; r < R; ++r) col[r] = results[r].samples[si][i][k];
        detail::mean_se(col, as.samples_mean, dummy);
        if (!std::isnan(results.front().bounds[si][i][k])) {
          for (std::size_t r = 0; r < R; ++r) col[r] = results[r].bounds[si][i][k];
          detail::mean_se(col, as.bound_mean, as.bound_se);
        }
        cs.arms.push_back(as);
      }
      for (std::size_t k = 1; k < K; ++k) {
        if (cs.arms[k].mse_mean > cs.arms[cs.worst_arm].mse_mean) cs.worst_arm = k;
      }
      for (std::size_t r = 0; r < R; ++r) col[r] = results[r].mse[si][i][cs.worst_arm] - results[r].oracle_values[i];
      detail::mean_se(col, cs.regret, cs.regret_se);
      for (std::size_t r = 0; r < R; ++r) col[r] = results[r].oracle_values[i];
      double dummy = 0.0;
      detail::mean_se(col, cs.oracle_value, dummy);
      sr.checkpoints.push_back(std::move(cs));
    }
    report.strategies.push_back(std::move(sr));
  }
  return report;
}

/// Paired regret difference regret(a) - regret(b) at a checkpoint, with the
/// standard error of the per-replication differences of the worst-arm MSEs.
struct PairedDifference {
  double difference = 0.0;
  double se = 0.0;
};

inline PairedDifference paired_regret_difference(const RegretReport& report, Strategy a, Strategy b,
                                                 std::size_t checkpoint) {
  const auto& ra = report.at(a);
  const auto& rb = report.at(b);
  const std::size_t ka = ra.checkpoints.at(checkpoint).worst_arm;
  const std::size_t kb = rb.checkpoints.at(checkpoint).worst_arm;
  std::vector<double> d(ra.mse.size());
  for (std::size_t r = 0; r < d.size(); ++r) d[r] = ra.mse[r][checkpoint][ka] - rb.mse[r][checkpoint][kb];
  PairedDifference out;
  detail::mean_se(d, out.difference, out.se);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline nlohmann::json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

inline nlohmann::json to_json(const RegretReport& report) {
  nlohmann::json j;
  j["replications"] = report.replications;
  j["checkpoints"] = report.checkpoints;
  j["local_acceptance_rate"] = report.local_acceptance_rate;
  j["strategies"] = nlohmann::json::array();
  for (const auto& sr : report.strategies) {
    nlohmann::json s;
    s["strategy"] = to_string(sr.strategy);
    s["event_failure_rate"] = sr.event_failure_rate ? nlohmann::json(*sr.event_failure_rate) : nlohmann::json(nullptr);
    s["checkpoints"] = nlohmann::json::array();
    for (const auto& cs : sr.checkpoints) {
      nlohmann::json c;
      c["n"] = cs.n;
      c["oracle_value"] = cs.oracle_value;
      c["regret"] = cs.regret;
      c["regret_se"] = cs.regret_se;
      c["worst_arm"] = cs.worst_arm;
      c["arms"] = nlohmann::json::array();
      for (const auto& a : cs.arms) {
        c["arms"].push_back({{"mse", a.mse_mean},
                             {"mse_se", a.mse_se},
                             {"samples", a.samples_mean},
                             {"bound", detail::number_or_null(a.bound_mean)},
                             {"bound_se", detail::number_or_null(a.bound_se)}});
      }
      s["checkpoints"].push_back(std::move(c));
    }
    j["strategies"].push_back(std::move(s));
  }
  return j;
}

/// Long-format CSV: strategy,n,metric,arm,value,se. Per-arm metrics are mse,
/// samples and bound; regret and oracle_value rows use arm "all".
inline void write_csv(std::ostream& os, const RegretReport& report) {
  using detail::format_double;
  os << "strategy,n,metric,arm,value,se\n";
  for (const auto& sr : report.strategies) {
    const std::string name = to_string(sr.strategy);
    for (const auto& cs : sr.checkpoints) {
      os << name << ',' << cs.n << ",regret,all," << format_double(cs.regret) << ',' << format_double(cs.regret_se) << '\n';
      os << name << ',' << cs.n << ",oracle_value,all," << format_double(cs.oracle_value) << ",\n";
      for (std::size_t k = 0; k < cs.arms.size(); ++k) {
        const auto& a = cs.arms[k];
        os << name << ',' << cs.n << ",mse," << k << ',' << format_double(a.mse_mean) << ',' << format_double(a.mse_se) << '\n';
        os << name << ',' << cs.n << ",samples," << k << ',' << format_double(a.samples_mean) << ",\n";
        if (!std::isnan(a.bound_mean)) {
          os << name << ',' << cs.n << ",bound," << k << ',' << format_double(a.bound_mean) << ','
             << format_double(a.bound_se) << '\n';
        }
      }
    }
  }
}

/// Parses an experiment config from its JSON form (see docs/formats.md).
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!j.contains(name)) throw InvalidInput(std::string("missing required field '") + name + "'", name);
    return j.at(name);
  };
  try {
    cfg.pmfs = field("pmfs").get<std::vector<std::vector<double>>>();
    cfg.budget = field("budget").get<std::int64_t>();
    if (j.contains("eta") && !j.at("eta").is_null()) cfg.eta = j.at("eta").get<double>();
    if (j.contains("strategies")) {
      cfg.strategies.clear();
      for (const auto& s : j.at("strategies")) cfg.strategies.push_back(parse_strategy(s.get<std::string>()));
    }
    if (j.contains("replications")) cfg.replications = j.at("replications").get<std::int64_t>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("checkpoints")) {
      const auto& c = j.at("checkpoints");
      if (c.is_number_integer()) {
        cfg.checkpoints = log_spaced_checkpoints(static_cast<std::int64_t>(cfg.pmfs.size()), cfg.budget, c.get<int>());
      } else {
        cfg.checkpoints = c.get<std::vector<std::int64_t>>();
      }
    }
    if (j.contains("local_averaging") && !j.at("local_averaging").is_null()) {
      const auto& la = j.at("local_averaging");
      LocalAveragingSpec spec;
      if (la.contains("radius")) spec.radius = la.at("radius").get<std::vector<double>>();
      if (la.contains("measure")) spec.measure = la.at("measure").get<double>();
      if (la.contains("seed")) spec.seed = la.at("seed").get<std::uint64_t>();
      if (spec.radius.empty() && !spec.measure) {
        throw InvalidInput("local_averaging needs 'radius' or 'measure'", "local_averaging");
      }
      cfg.local_averaging = spec;
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed experiment config: ") + e.what(), "config");
  }
  return cfg;
}

}  // namespace aps
