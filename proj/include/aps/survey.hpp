#pragma once
// Survey analytics for binary (positive / negative) outcomes across
// population categories: CSV ingest, the weighted overall positivity, and a
// comparison of the collected allocation against oracle, constrained-oracle
// and batch-adaptive allocations.
//
// Symbol 1 is "positive" and symbol 0 is "negative" wherever a posterior is
// involved.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
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

namespace aps {

struct SurveyCategory {
  std::string name;
  double weight = 0.0;
  std::int64_t samples = 0;
  std::int64_t positives = 0;
  std::optional<double> theta;

  double positivity() const { return samples > 0 ? static_cast<double>(positives) / static_cast<double>(samples) : 0.0; }
  /// Plug-in variance sum 2 p (1 - p) of the Bernoulli pmf (p, 1 - p).
  double tracking() const {
    const double p = positivity();
    return 2.0 * p * (1.0 - p);
  }

  friend bool operator==(const SurveyCategory&, const SurveyCategory&) = default;
};

struct SurveyDataset {
  std::vector<SurveyCategory> categories;
  std::optional<double> theta_overall;

  std::int64_t total_samples() const {
    std::int64_t n = 0;
    for (const auto& c : categories) n += c.samples;
    return n;
  }
  std::vector<double> weights() const {
    std::vector<double> w;
    for (const auto& c : categories) w.push_back(c.weight);
    return w;
  }
  std::vector<double> tracking() const {
    std::vector<double> t;
    for (const auto& c : categories) t.push_back(c.tracking());
    return t;
  }

  void validate() const {
    if (categories.empty()) throw InvalidInput("survey needs at least one category", "categories");
    double s = 0.0;
    for (const auto& c : categories) {
      if (!(c.weight >= 0.0)) throw InvalidInput("weights must be nonnegative", "weight");
      if (c.samples < 0 || c.positives < 0) throw InvalidInput("counts must be nonnegative", "samples");
      if (c.positives > c.samples) throw InvalidInput("positives exceed samples in '" + c.name + "'", "positives");
      if (c.theta && !(*c.theta > 0.0)) throw InvalidInput("theta must be positive", "theta");
      s += c.weight;
    }
    if (std::fabs(s - 1.0) > 1e-9) throw InvalidInput("weights must sum to 1", "weight");
  }

  friend bool operator==(const SurveyDataset&, const SurveyDataset&) = default;
};

struct RowDiagnostic {
  /// 1-based line number in the file; the header is line 1.
  std::size_t row = 0;
  std::string field;
  std::string message;
};

class SurveyFormatError : public InvalidInput {
 public:
  explicit SurveyFormatError(std::vector<RowDiagnostic> diags)
      : InvalidInput(summarize(diags), diags.empty() ? "" : diags.front().field), diagnostics_(std::move(diags)) {}

  const std::vector<RowDiagnostic>& diagnostics() const { return diagnostics_; }

 private:
  static std::string summarize(const std::vector<RowDiagnostic>& diags) {
    std::ostringstream os;
    os << "survey CSV rejected";
    for (const auto& d : diags) {
      os << "\n  row " << d.row;
      if (!d.field.empty()) os << " [" << d.field << "]";
      os << ": " << d.message;
    }
    return os.str();
  }

  std::vector<RowDiagnostic> diagnostics_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_real(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::optional<std::int64_t> parse_count(const std::string& s) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) return std::nullopt;
    return static_cast<std::int64_t>(v);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  return out + "\"";
}

inline std::string exact(double v) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  return os.str();
}

}  // namespace detail

/// Parses `category,weight,samples,positives[,theta]`. Weights summing to
/// within [0.999, 1.001] are renormalized; anything else is rejected.
inline SurveyDataset parse_survey_csv(std::istream& in) {
  std::vector<RowDiagnostic> diags;
  std::string line;
  if (!std::getline(in, line)) throw SurveyFormatError({{1, "", "empty file; expected a header row"}});
  auto header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0] = header[0].substr(3);
  const std::vector<std::string> required{"category", "weight", "samples", "positives"};
  const bool has_theta = header.size() == 5 && header[4] == "theta";
  if (header.size() < 4 || !std::equal(required.begin(), required.end(), header.begin()) ||
      (header.size() == 5 && !has_theta) || header.size() > 5) {
    throw SurveyFormatError({{1, "", "header must be 'category,weight,samples,positives[,theta]'"}});
  }

  SurveyDataset ds;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty() || detail::trim(line) == "\r") continue;
    auto cells = detail::split_csv_line(line);
    for (auto& c : cells) c = detail::trim(c);
    if (cells.size() != header.size()) {
      diags.push_back({row, "", "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(cells.size())});
      continue;
    }
    SurveyCategory cat;
    cat.name = cells[0];
    bool ok = true;
    if (cat.name.empty()) {
      diags.push_back({row, "category", "category name is empty"});
      ok = false;
    }
    const auto w = detail::parse_real(cells[1]);
    const auto t = detail::parse_count(cells[2]);
    const auto p = detail::parse_count(cells[3]);
    if (!w || *w < 0.0) {
      diags.push_back({row, "weight", "weight must be a nonnegative number, got '" + cells[1] + "'"});
      ok = false;
    }
    if (!t || *t < 0) {
      diags.push_back({row, "samples", "samples must be a nonnegative integer, got '" + cells[2] + "'"});
      ok = false;
    }
    if (!p || *p < 0) {
      diags.push_back({row, "positives", "positives must be a nonnegative integer, got '" + cells[3] + "'"});
      ok = false;
    }
    if (t && p && *t >= 0 && *p > *t) {
      diags.push_back({row, "positives", "positives (" + cells[3] + ") exceed samples (" + cells[2] + ")"});
      ok = false;
    }
    if (has_theta && !cells[4].empty()) {
      const auto th = detail::parse_real(cells[4]);
      if (!th || *th <= 0.0) {
        diags.push_back({row, "theta", "theta must be a positive number, got '" + cells[4] + "'"});
        ok = false;
      } else {
        cat.theta = *th;
      }
    }
    if (!ok) continue;
    cat.weight = *w;
    cat.samples = *t;
    cat.positives = *p;
    ds.categories.push_back(std::move(cat));
  }
  if (!diags.empty()) throw SurveyFormatError(std::move(diags));
  if (ds.categories.empty()) throw SurveyFormatError({{row, "", "no category rows"}});

  double s = 0.0;
  for (const auto& c : ds.categories) s += c.weight;
  if (s < 0.999 || s > 1.001) {
    throw SurveyFormatError({{0, "weight",
                              "weights sum to " + detail::exact(s) +
                                  "; they must sum to 1 (sums within [0.999, 1.001] are renormalized automatically)"}});
  }
  for (auto& c : ds.categories) c.weight /= s;
  return ds;
}

inline SurveyDataset ingest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open survey file '" + path + "'", "path");
  return parse_survey_csv(in);
}

inline void export_survey_csv(std::ostream& os, const SurveyDataset& ds) {
  bool any_theta = false;
  for (const auto& c : ds.categories) any_theta = any_theta || c.theta.has_value();
  os << "category,weight,samples,positives" << (any_theta ? ",theta" : "") << '\n';
  for (const auto& c : ds.categories) {
    os << detail::quote_csv(c.name) << ',' << detail::exact(c.weight) << ',' << c.samples << ',' << c.positives;
    if (any_theta) {
      os << ',';
      if (c.theta) os << detail::exact(*c.theta);
    }
    os << '\n';
  }
}

struct OverallEstimate {
  double positivity = 0.0;
  /// sum_k w_k^2 c_k / T_k at plug-in c.
  double mse = 0.0;
};

inline double overall_mse(std::span<const double> weights, std::span<const double> c,
                          std::span<const std::int64_t> samples) {
  if (weights.size() != c.size() || c.size() != samples.size()) throw InvalidInput("length mismatch", "categories");
  std::string starved;
  double s = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    if (samples[k] <= 0) {
      starved += (starved.empty() ? "" : ", ") + std::to_string(k);
      continue;
    }
    if (c[k] == 0.0) continue;
    s += weights[k] * weights[k] * c[k] / static_cast<double>(samples[k]);
  }
  if (!starved.empty()) throw InvalidInput("categories without samples: " + starved, "samples");
  return s;
}

inline OverallEstimate overall_estimate(const SurveyDataset& ds) {
  ds.validate();
  std::string starved;
  for (const auto& c : ds.categories) {
    if (c.samples == 0) starved += (starved.empty() ? "" : ", ") + c.name;
  }
  if (!starved.empty()) throw InvalidInput("categories without samples: " + starved, "samples");
  OverallEstimate out;
  std::vector<std::int64_t> T;
  for (const auto& c : ds.categories) {
    out.positivity += c.weight * c.positivity();
    T.push_back(c.samples);
  }
  out.positivity = std::clamp(out.positivity, 0.0, 1.0);
  out.mse = overall_mse(ds.weights(), ds.tracking(), T);
  return out;
}

// ---------------------------------------------------------------------------
// Allocation comparison

struct CompareOptions {
  std::int64_t batch = 100;
  std::int64_t replications = 200;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  /// Overrides the dataset's targets; defaults are derived when both are absent.
  std::optional<std::vector<double>> theta;
  std::optional<double> theta_overall;
  /// Budget N; defaults to the collected total.
  std::optional<std::int64_t> budget;
};

struct AllocationRow {
  std::string name;
  double weight = 0.0;
  double positivity = 0.0;
  double tracking = 0.0;
  double theta = 0.0;
  std::int64_t actual = 0;
  std::int64_t oracle = 0;
  std::int64_t constrained = 0;
  double constrained_real = 0.0;
  double adaptive = 0.0;
  double adaptive_se = 0.0;
  /// |adaptive - constrained_real| / constrained_real.
  double relative_gap = 0.0;
};

struct AllocationComparison {
  std::vector<AllocationRow> rows;
  std::int64_t budget = 0;
  std::int64_t batch = 0;
  std::int64_t replications = 0;
  double theta_overall = kInfinity;
  bool feasible = false;
  double lambda = 0.0;
};

/// theta_k = 2 sum_i c_i / N: twice the per-category MSE of the unconstrained oracle.
inline std::vector<double> default_category_targets(std::span<const double> c, std::int64_t N) {
  double s = 0.0;
  for (double v : c) s += v;
  return std::vector<double>(c.size(), 2.0 * s / static_cast<double>(N));
}

/// theta_0 = 2 (sum_k w_k sqrt(c_k))^2 / N: twice the smallest attainable overall MSE.
inline double default_overall_target(std::span<const double> w, std::span<const double> c, std::int64_t N) {
  double s = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) s += w[k] * std::sqrt(c[k]);
  return 2.0 * s * s / static_cast<double>(N);
}

/// Replays batched collection against Bernoulli(p_k) environments, allocating
/// each batch with batch_allocate on the current Bayesian variance bounds.
/// Returns the final per-category counts.
inline std::vector<std::int64_t> replay_adaptive(std::span<const double> positivity, BatchConstraintSpec spec,
                                                 std::int64_t budget, std::mt19937_64& rng) {
  const std::size_t K = positivity.size();
  PosteriorState state(PriorSpec::uniform(K, 2));
  IntervalSet intervals(K, 2);
  const DeltaSchedule schedule = DeltaSchedule::with_default_eta(K, 2, budget);
  const std::int64_t B = spec.batch;
  std::int64_t total = 0;
  std::vector<double> u(K, 0.5);
  while (total < budget) {
    const double delta_n = schedule.at(std::min(total + 1, budget));
    for (std::size_t k = 0; k < K; ++k) {
      refresh_arm_intervals(intervals, state, k, delta_n);
      try {
        u[k] = variance_ucb(intervals, k).value;
      } catch (const Infeasible&) {
        u[k] = 0.5;
      }
    }
    spec.batch = std::min(B, budget - total);
    const auto alloc = batch_allocate(u, state.counts(), spec);
    for (std::size_t k = 0; k < K; ++k) {
      if (alloc.rounded[k] == 0) continue;
      std::binomial_distribution<std::int64_t> draw(alloc.rounded[k], positivity[k]);
      const std::int64_t pos = draw(rng);
      const std::int64_t counts[2] = {alloc.rounded[k] - pos, pos};
      state.apply_counts(k, counts);
    }
    total += spec.batch;
  }
  return state.counts();
}

inline AllocationComparison compare_allocations(const SurveyDataset& ds, const CompareOptions& opts = {}) {
  ds.validate();
  const std::size_t K = ds.categories.size();
  const std::int64_t N = opts.budget.value_or(ds.total_samples());
  if (N < 1) throw InvalidInput("budget must be positive", "budget");
  if (opts.batch < 1) throw InvalidInput("batch size must be at least 1", "batch");
  if (opts.replications < 1) throw InvalidInput("replications must be at least 1", "replications");
  for (const auto& c : ds.categories) {
    if (c.samples == 0) throw InvalidInput("category '" + c.name + "' has no samples; positivity is unknown", "samples");
  }

  const auto c = ds.tracking();
  const auto w = ds.weights();
  std::vector<double> p;
  for (const auto& cat : ds.categories) p.push_back(cat.positivity());

  BatchConstraintSpec spec;
  spec.weights = w;
  if (opts.theta) {
    if (opts.theta->size() != K) throw InvalidInput("need one theta per category", "theta");
    spec.theta = *opts.theta;
  } else {
    const auto defaults = default_category_targets(c, N);
    for (std::size_t k = 0; k < K; ++k) spec.theta.push_back(ds.categories[k].theta.value_or(defaults[k]));
  }
  spec.theta_overall = opts.theta_overall.value_or(ds.theta_overall.value_or(default_overall_target(w, c, N)));
  spec.batch = opts.batch;
  spec.validate(K);

  AllocationComparison out;
  out.budget = N;
  out.batch = opts.batch;
  out.replications = opts.replications;
  out.theta_overall = spec.theta_overall;

  const auto oracle = oracle_allocate(c, N);
  const auto verdict = check_feasibility(spec, c, N);
  out.feasible = verdict.feasible;
  out.lambda = verdict.lambda;

  const std::size_t R = static_cast<std::size_t>(opts.replications);
  std::vector<std::vector<std::int64_t>> finals(R);
  auto run = [&](std::size_t r) {
    std::seed_seq seq{static_cast<std::uint32_t>(opts.seed), static_cast<std::uint32_t>(opts.seed >> 32),
                      static_cast<std::uint32_t>(r), 0x5a7e7u};
    std::mt19937_64 rng(seq);
    finals[r] = replay_adaptive(p, spec, N, rng);
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(opts.workers, static_cast<unsigned>(R)));
  if (workers == 1) {
    for (std::size_t r = 0; r < R; ++r) run(r);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned i = 0; i < workers; ++i) {
      pool.emplace_back([&, i] {
        try {
          for (std::size_t r = i; r < R; r += workers) run(r);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (std::size_t k = 0; k < K; ++k) {
    AllocationRow row;
    const auto& cat = ds.categories[k];
    row.name = cat.name;
    row.weight = cat.weight;
    row.positivity = p[k];
    row.tracking = c[k];
    row.theta = spec.theta[k];
    row.actual = cat.samples;
    row.oracle = oracle.rounded[k];
    row.constrained = verdict.allocation.rounded[k];
    row.constrained_real = verdict.allocation.real[k];
    double mean = 0.0;
    for (const auto& f : finals) mean += static_cast<double>(f[k]);
    mean /= static_cast<double>(R);
    double ss = 0.0;
    for (const auto& f : finals) ss += (static_cast<double>(f[k]) - mean) * (static_cast<double>(f[k]) - mean);
    row.adaptive = mean;
    row.adaptive_se = R > 1 ? std::sqrt(ss / static_cast<double>(R - 1) / static_cast<double>(R)) : 0.0;
    row.relative_gap = row.constrained_real > 0.0 ? std::fabs(mean - row.constrained_real) / row.constrained_real
                                                  : (mean > 0.0 ? kInfinity : 0.0);
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline nlohmann::json to_json(const AllocationComparison& cmp) {
  nlohmann::json j;
  j["budget"] = cmp.budget;
  j["batch"] = cmp.batch;
  j["replications"] = cmp.replications;
  j["theta_overall"] = std::isfinite(cmp.theta_overall) ? nlohmann::json(cmp.theta_overall) : nlohmann::json(nullptr);
  j["feasible"] = cmp.feasible;
  j["lambda"] = cmp.lambda;
  j["categories"] = nlohmann::json::array();
  for (const auto& r : cmp.rows) {
    j["categories"].push_back({{"category", r.name},
                               {"weight", r.weight},
                               {"positivity", r.positivity},
                               {"tracking", r.tracking},
                               {"theta", r.theta},
                               {"actual", r.actual},
                               {"oracle", r.oracle},
                               {"constrained", r.constrained},
                               {"constrained_real", r.constrained_real},
                               {"adaptive", r.adaptive},
                               {"adaptive_se", r.adaptive_se},
                               {"relative_gap", r.relative_gap}});
  }
  return j;
}

inline void write_csv(std::ostream& os, const AllocationComparison& cmp) {
  os << "category,weight,positivity,theta,actual,oracle,constrained,adaptive,adaptive_se,relative_gap,feasible,lambda\n";
  for (const auto& r : cmp.rows) {
    os << detail::quote_csv(r.name) << ',' << detail::exact(r.weight) << ',' << detail::exact(r.positivity) << ','
       << detail::exact(r.theta) << ',' << r.actual << ',' << r.oracle << ',' << r.constrained << ','
       << detail::exact(r.adaptive) << ',' << detail::exact(r.adaptive_se) << ',' << detail::exact(r.relative_gap) << ','
       << (cmp.feasible ? "true" : "false") << ',' << detail::exact(cmp.lambda) << '\n';
  }
}

}  // namespace aps
