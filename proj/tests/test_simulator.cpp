#include <algorithm>
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "aps/simulator.hpp"

using namespace aps;

namespace {

const std::vector<std::vector<double>> kPaperPmfs{{0.99, 0.01}, {0.7, 0.3}};

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.pmfs = kPaperPmfs;
  cfg.budget = 400;
  cfg.eta = 1.0 / 400;
  cfg.strategies = {Strategy::BayesUcb, Strategy::HoeffdingUcb, Strategy::EmpiricalBernstein, Strategy::Oracle,
                    Strategy::Uniform};
  cfg.replications = 24;
  cfg.seed = 9;
  cfg.checkpoints = {10, 100, 400};
  return cfg;
}

}  // namespace

TEST(Mse, Examples) {
  const std::vector<double> p{0.7, 0.3}, e{0.75, 0.25};
  EXPECT_NEAR(mse(p, e), 0.005, 1e-15);
  EXPECT_EQ(mse(p, p), 0.0);
  EXPECT_THROW(mse(p, std::vector<double>{1.0}), InvalidInput);
}

TEST(Mse, MonteCarloMatchesMultinomialVariance) {
  // E||p - p_hat||^2 = (1 - sum p^2) / n for the empirical pmf of n draws.
  const std::vector<double> p{0.2, 0.5, 0.3};
  const std::size_t n = 40;
  const int R = 20000;
  double acc = 0.0;
  for (int r = 0; r < R; ++r) {
    OutcomeStreams s(5, static_cast<std::uint64_t>(r), {p});
    const auto c = s.counts(0, n);
    std::vector<double> e(3);
    for (std::size_t l = 0; l < 3; ++l) e[l] = static_cast<double>(c[l]) / n;
    acc += mse(p, e);
  }
  const double expected = (1.0 - (0.04 + 0.25 + 0.09)) / n;
  EXPECT_NEAR(acc / R, expected, 0.03 * expected);
}

TEST(OutcomeStreams, PrefixCountsAreConsistent) {
  OutcomeStreams s(1, 2, kPaperPmfs);
  std::vector<std::int64_t> manual(2, 0);
  for (std::size_t j = 0; j < 300; ++j) {
    manual[s.outcome(1, j)] += 1;
    EXPECT_EQ(s.counts(1, j + 1), manual);
  }
  EXPECT_EQ(s.counts(0, 0), (std::vector<std::int64_t>{0, 0}));
}

TEST(OutcomeStreams, ArmsAreIndependentOfQueryOrder) {
  OutcomeStreams a(4, 7, kPaperPmfs), b(4, 7, kPaperPmfs);
  std::vector<std::size_t> xa, xb;
  for (std::size_t j = 0; j < 50; ++j) xa.push_back(a.outcome(1, j));
  for (std::size_t j = 0; j < 80; ++j) b.outcome(0, j);
  for (std::size_t j = 0; j < 50; ++j) xb.push_back(b.outcome(1, j));
  EXPECT_EQ(xa, xb);
}

TEST(Event, TrackerIsSticky) {
  IntervalSet iv(1, 2);
  iv.at(0, 0) = Interval{0.6, 0.8};
  iv.at(0, 1) = Interval{0.2, 0.4};
  EventTracker t;
  t = track_event(t, iv, {{0.7, 0.3}});
  EXPECT_TRUE(t.holds);
  t = track_event(t, iv, {{0.9, 0.1}});
  EXPECT_FALSE(t.holds);
  t = track_event(t, iv, {{0.7, 0.3}});
  EXPECT_FALSE(t.holds);
}

TEST(LocalAveraging, ZeroRadiusReturnsCenter) {
  std::mt19937_64 rng(1);
  const auto d = sample_local(LocalAveragingSpec{{0.0, 0.0}, std::nullopt, 0}, kPaperPmfs, rng);
  EXPECT_EQ(d.pmfs, kPaperPmfs);
}

TEST(LocalAveraging, DrawsStayInBallAndSimplex) {
  std::mt19937_64 rng(2);
  const std::vector<std::vector<double>> p{{0.2, 0.3, 0.5}};
  for (int i = 0; i < 500; ++i) {
    const auto d = sample_local(LocalAveragingSpec{{0.15}, std::nullopt, 0}, p, rng);
    const auto& x = d.pmfs[0];
    double s = 0.0;
    for (double v : x) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_LE(detail::l2_distance(x, p[0]), 0.15 + 1e-12);
    EXPECT_GT(d.acceptance_rate, 0.0);
    EXPECT_LE(d.acceptance_rate, 1.0);
  }
}

TEST(LocalAveraging, BinaryBallIsUniformSegment) {
  // p = (0.5, 0.5), r = 0.1 sqrt(2): pi_1 must be uniform on [0.4, 0.6].
  std::mt19937_64 rng(3);
  const int n = 100000;
  std::vector<double> xs;
  for (int i = 0; i < n; ++i) {
    xs.push_back(sample_local(LocalAveragingSpec{{0.1 * std::sqrt(2.0)}, std::nullopt, 0}, {{0.5, 0.5}}, rng).pmfs[0][0]);
  }
  std::sort(xs.begin(), xs.end());
  double ks = 0.0;
  for (int i = 0; i < n; ++i) {
    const double f = std::clamp((xs[i] - 0.4) / 0.2, 0.0, 1.0);
    ks = std::max({ks, std::fabs(f - static_cast<double>(i) / n), std::fabs(f - static_cast<double>(i + 1) / n)});
  }
  // 1e-3 critical value of the one-sample Kolmogorov-Smirnov statistic.
  EXPECT_LT(ks, 1.949 / std::sqrt(static_cast<double>(n)));
  EXPECT_GE(xs.front(), 0.4 - 1e-12);
  EXPECT_LE(xs.back(), 0.6 + 1e-12);
}

TEST(LocalAveraging, TinyRadiusIsReported) {
  std::mt19937_64 rng(4);
  const std::vector<std::vector<double>> p{{0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1}};
  EXPECT_THROW(sample_local(LocalAveragingSpec{{1e-4}, std::nullopt, 0}, p, rng), NumericalDegeneracy);
}

TEST(Checkpoints, LogSpacedIncludesEnds) {
  const auto c = log_spaced_checkpoints(2, 2500, 50);
  EXPECT_EQ(c.front(), 2);
  EXPECT_EQ(c.back(), 2500);
  EXPECT_TRUE(std::is_sorted(c.begin(), c.end()));
  EXPECT_EQ(std::adjacent_find(c.begin(), c.end()), c.end());
  EXPECT_LE(c.size(), 51u);
}

TEST(Experiment, ValidatesConfig) {
  auto cfg = small_config();
  cfg.pmfs = {{0.5, 0.6}};
  EXPECT_THROW(cfg.validate(), InvalidInput);
  cfg = small_config();
  cfg.checkpoints = {500};
  EXPECT_THROW(cfg.validate(), InvalidInput);
  cfg = small_config();
  cfg.pmfs = {{0.2, 0.3, 0.5}};
  EXPECT_THROW(cfg.validate(), UnsupportedConfiguration);
  EXPECT_THROW(parse_strategy("greedy"), InvalidInput);
}

TEST(Experiment, ReproducibleAcrossWorkerCounts) {
  auto cfg = small_config();
  const auto a = run_experiment(cfg);
  cfg.workers = 3;
  const auto b = run_experiment(cfg);
  std::ostringstream sa, sb;
  write_csv(sa, a);
  write_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(Experiment, OracleRegretIsNearZero) {
  auto cfg = small_config();
  cfg.replications = 400;
  cfg.strategies = {Strategy::Oracle};
  const auto rep = run_experiment(cfg);
  const auto& last = rep.at(Strategy::Oracle).checkpoints.back();
  EXPECT_LE(std::fabs(last.regret), 3.0 * last.regret_se + 1e-12);
}

TEST(Experiment, UniformMseMatchesClosedForm) {
  ExperimentConfig cfg;
  cfg.pmfs = kPaperPmfs;
  cfg.budget = 2500;
  cfg.strategies = {Strategy::Uniform};
  cfg.replications = 2000;
  cfg.checkpoints = {2500};
  const auto rep = run_experiment(cfg);
  const auto& cs = rep.at(Strategy::Uniform).checkpoints.back();
  EXPECT_DOUBLE_EQ(cs.arms[1].samples_mean, 1250.0);
  const double expected = 2.0 * 0.3 * 0.7 / 1250.0;  // 3.36e-4
  EXPECT_NEAR(cs.arms[1].mse_mean, expected, 3.0 * cs.arms[1].mse_se);
  EXPECT_NEAR(expected, 3.36e-4, 1e-12);
}

TEST(Experiment, EventFailureRateIsSmall) {
  auto cfg = small_config();
  cfg.replications = 200;
  cfg.strategies = {Strategy::BayesUcb};
  const auto rep = run_experiment(cfg);
  const auto& s = rep.at(Strategy::BayesUcb);
  ASSERT_TRUE(s.event_failure_rate.has_value());
  EXPECT_LE(*s.event_failure_rate, 1e-3 + 3.0 * std::sqrt(1e-3 / 200));
}

TEST(Experiment, BoundsDominateTrueVarianceOnAverage) {
  auto cfg = small_config();
  cfg.strategies = {Strategy::BayesUcb, Strategy::HoeffdingUcb};
  const auto rep = run_experiment(cfg);
  for (const auto& sr : rep.strategies) {
    for (const auto& cs : sr.checkpoints) {
      for (std::size_t k = 0; k < 2; ++k) {
        const double c = 1.0 - kPaperPmfs[k][0] * kPaperPmfs[k][0] - kPaperPmfs[k][1] * kPaperPmfs[k][1];
        EXPECT_GE(cs.arms[k].bound_mean, c) << to_string(sr.strategy) << " n=" << cs.n;
      }
    }
  }
}

TEST(Experiment, LocalAveragingReportsAcceptance) {
  auto cfg = small_config();
  cfg.strategies = {Strategy::BayesUcb, Strategy::Oracle};
  cfg.local_averaging = LocalAveragingSpec{{0.005, 0.05}, std::nullopt, 11};
  const auto rep = run_experiment(cfg);
  EXPECT_GT(rep.local_acceptance_rate, 0.0);
  EXPECT_LT(rep.local_acceptance_rate, 1.0);
  // Per-replication oracle values differ once the pmfs are perturbed.
  EXPECT_NE(rep.oracle_values[0].back(), rep.oracle_values[1].back());
}

TEST(Experiment, CsvAndJsonShape) {
  auto cfg = small_config();
  cfg.strategies = {Strategy::BayesUcb, Strategy::Uniform};
  const auto rep = run_experiment(cfg);
  std::ostringstream os;
  write_csv(os, rep);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "strategy,n,metric,arm,value,se");
  int rows = 0;
  while (std::getline(is, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5) << line;
    ++rows;
  }
  // bayes-ucb: 2 + 3 per arm; uniform: 2 + 2 per arm; 3 checkpoints each.
  EXPECT_EQ(rows, 3 * (2 + 6) + 3 * (2 + 4));
  const auto j = to_json(rep);
  EXPECT_EQ(j["strategies"][0]["strategy"], "bayes-ucb");
  EXPECT_TRUE(j["strategies"][1]["event_failure_rate"].is_null());
  EXPECT_EQ(j["checkpoints"].size(), 3u);
}

TEST(Experiment, ConfigFromJson) {
  const auto j = nlohmann::json::parse(R"({"pmfs": [[0.99, 0.01], [0.7, 0.3]], "budget": 2500, "eta": 0.0004,
    "strategies": ["bayes-ucb", "oracle"], "replications": 10, "seed": 3, "checkpoints": 5})");
  const auto cfg = experiment_config_from_json(j);
  EXPECT_EQ(cfg.budget, 2500);
  EXPECT_DOUBLE_EQ(cfg.effective_eta(), 0.0004);
  EXPECT_EQ(cfg.strategies.size(), 2u);
  EXPECT_EQ(cfg.checkpoints.back(), 2500);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(R"({"budget": 3})")), InvalidInput);
}

TEST(Experiment, PairedDifferenceOfIdenticalStrategyIsZero) {
  auto cfg = small_config();
  const auto rep = run_experiment(cfg);
  const auto d = paired_regret_difference(rep, Strategy::BayesUcb, Strategy::BayesUcb, 2);
  EXPECT_EQ(d.difference, 0.0);
  EXPECT_EQ(d.se, 0.0);
}
