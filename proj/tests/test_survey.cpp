#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "aps/survey.hpp"

using namespace aps;

namespace {

SurveyDataset parse(const std::string& text) {
  std::istringstream in(text);
  return parse_survey_csv(in);
}

std::string fixture_path() { return std::string(APS_SOURCE_DIR) + "/data/synthetic_survey.csv"; }

}  // namespace

TEST(Ingest, TwoRowsSumToOne) {
  const auto ds = parse("category,weight,samples,positives\nA,0.6,100,5\nB,0.4,80,8\n");
  ASSERT_EQ(ds.categories.size(), 2u);
  EXPECT_NEAR(ds.categories[0].weight + ds.categories[1].weight, 1.0, 1e-15);
  EXPECT_EQ(ds.categories[1].positives, 8);
  EXPECT_DOUBLE_EQ(ds.categories[1].positivity(), 0.1);
  EXPECT_EQ(ds.total_samples(), 180);
}

TEST(Ingest, WeightsOffByFivePercentAreRejected) {
  try {
    parse("category,weight,samples,positives\nA,0.55,100,5\nB,0.4,80,8\n");
    FAIL() << "expected rejection";
  } catch (const SurveyFormatError& e) {
    EXPECT_NE(std::string(e.what()).find("renormalized"), std::string::npos);
    EXPECT_EQ(e.diagnostics().front().field, "weight");
  }
}

TEST(Ingest, NearlyNormalizedWeightsAreRescaled) {
  const auto ds = parse("category,weight,samples,positives\nA,0.6004,100,5\nB,0.4,80,8\n");
  EXPECT_NEAR(ds.categories[0].weight + ds.categories[1].weight, 1.0, 1e-15);
}

TEST(Ingest, RowDiagnosticsCarryRowNumbers) {
  try {
    parse("category,weight,samples,positives\nA,0.5,10,2\nB,0.3,-4,1\nC,0.2,5,9\nD,x,1\n");
    FAIL() << "expected rejection";
  } catch (const SurveyFormatError& e) {
    const auto& d = e.diagnostics();
    ASSERT_EQ(d.size(), 3u);
    EXPECT_EQ(d[0].row, 3u);
    EXPECT_EQ(d[0].field, "samples");
    EXPECT_EQ(d[1].row, 4u);
    EXPECT_EQ(d[1].field, "positives");
    EXPECT_EQ(d[2].row, 5u);
  }
}

TEST(Ingest, HeaderIsChecked) {
  EXPECT_THROW(parse("name,weight,samples,positives\nA,1,1,0\n"), SurveyFormatError);
  EXPECT_THROW(parse(""), SurveyFormatError);
  EXPECT_THROW(parse("category,weight,samples,positives\n"), SurveyFormatError);
}

TEST(Ingest, QuotedNamesAndThetaColumn) {
  const auto ds = parse("category,weight,samples,positives,theta\n\"Doe, Jane\",0.5,10,1,0.01\nB,0.5,10,2,\n");
  EXPECT_EQ(ds.categories[0].name, "Doe, Jane");
  EXPECT_DOUBLE_EQ(*ds.categories[0].theta, 0.01);
  EXPECT_FALSE(ds.categories[1].theta.has_value());
}

TEST(Ingest, ExportRoundTrips) {
  const auto ds = ingest(fixture_path());
  std::ostringstream os;
  export_survey_csv(os, ds);
  EXPECT_EQ(parse(os.str()), ds);
  EXPECT_THROW(ingest("/nonexistent/survey.csv"), InvalidInput);
}

TEST(OverallEstimate, SingleCategory) {
  const auto ds = parse("category,weight,samples,positives\nA,1,100,5\n");
  EXPECT_NEAR(overall_estimate(ds).positivity, 0.05, 1e-15);
}

TEST(OverallEstimate, WeightedMean) {
  const auto ds = parse("category,weight,samples,positives\nA,0.5,50,0\nB,0.5,50,5\n");
  EXPECT_NEAR(overall_estimate(ds).positivity, 0.05, 1e-15);
}

TEST(OverallEstimate, MseFormula) {
  const std::vector<double> w{0.5, 0.5}, c{0.0198, 0.09};
  const std::vector<std::int64_t> T{100, 100};
  EXPECT_NEAR(overall_mse(w, c, T), 2.745e-4, 1e-15);
}

TEST(OverallEstimate, MseFallsWithMoreSamples) {
  const std::vector<double> w{0.3, 0.7}, c{0.1, 0.4};
  double prev = kInfinity;
  for (std::int64_t t = 1; t < 500; t += 37) {
    const std::vector<std::int64_t> T{t, 2 * t};
    const double m = overall_mse(w, c, T);
    EXPECT_LT(m, prev);
    prev = m;
  }
}

TEST(OverallEstimate, StarvedCategoryIsAnError) {
  const auto ds = parse("category,weight,samples,positives\nA,0.5,0,0\nB,0.5,50,5\n");
  try {
    overall_estimate(ds);
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("A"), std::string::npos);
  }
}

TEST(Compare, IdenticalCategoriesGiveUniformOracle) {
  const auto ds = parse("category,weight,samples,positives\nA,0.25,100,10\nB,0.25,100,10\nC,0.25,100,10\nD,0.25,100,10\n");
  CompareOptions opts;
  opts.replications = 5;
  const auto cmp = compare_allocations(ds, opts);
  for (const auto& r : cmp.rows) {
    EXPECT_EQ(r.oracle, 100);
    EXPECT_NEAR(r.constrained_real, 100.0, 1e-6);
  }
}

TEST(Compare, ColumnsShareTheBudget) {
  const auto ds = ingest(fixture_path());
  CompareOptions opts;
  opts.replications = 20;
  const auto cmp = compare_allocations(ds, opts);
  const auto oracle = oracle_allocate(ds.tracking(), ds.total_samples());
  std::int64_t actual = 0, orc = 0, con = 0;
  double adaptive = 0.0;
  for (std::size_t k = 0; k < cmp.rows.size(); ++k) {
    EXPECT_EQ(cmp.rows[k].oracle, oracle.rounded[k]);
    actual += cmp.rows[k].actual;
    orc += cmp.rows[k].oracle;
    con += cmp.rows[k].constrained;
    adaptive += cmp.rows[k].adaptive;
  }
  EXPECT_EQ(actual, ds.total_samples());
  EXPECT_EQ(orc, ds.total_samples());
  EXPECT_EQ(con, ds.total_samples());
  EXPECT_NEAR(adaptive, static_cast<double>(ds.total_samples()), 1e-9);
}

TEST(Compare, ReplayConservesBudget) {
  std::mt19937_64 rng(3);
  const std::vector<double> p{0.05, 0.3, 0.1};
  BatchConstraintSpec spec{{0.01, 0.01, 0.01}, 0.001, {0.5, 0.3, 0.2}, 64};
  const auto T = replay_adaptive(p, spec, 1000, rng);
  EXPECT_EQ(T[0] + T[1] + T[2], 1000);
}

TEST(Compare, InfeasibleTargetsAreFlagged) {
  const auto ds = ingest(fixture_path());
  CompareOptions opts;
  opts.replications = 4;
  opts.theta = std::vector<double>(ds.categories.size(), 1e-6);
  const auto cmp = compare_allocations(ds, opts);
  EXPECT_FALSE(cmp.feasible);
  EXPECT_GT(cmp.lambda, 1.0);
  opts.theta = std::vector<double>(ds.categories.size(), 1.0);
  opts.theta_overall = 1.0;
  EXPECT_TRUE(compare_allocations(ds, opts).feasible);
}

TEST(Compare, UnderrepresentedGroupBetweenSurveyAndOracle) {
  // The high-variance Pacific Islander row has w = 0.003: the unconstrained
  // oracle gives it far more than w N, the overall-constrained oracle less
  // than that, yet still more than w N.
  const auto ds = ingest(fixture_path());
  CompareOptions opts;
  opts.replications = 4;
  opts.theta = std::vector<double>(ds.categories.size(), 1.0);
  const auto cmp = compare_allocations(ds, opts);
  const auto& pi = cmp.rows.back();
  ASSERT_EQ(pi.name, "Pacific Islander");
  const double wN = pi.weight * static_cast<double>(cmp.budget);
  EXPECT_GT(static_cast<double>(pi.oracle), wN);
  EXPECT_LT(pi.constrained_real, static_cast<double>(pi.oracle));
  EXPECT_GT(pi.constrained_real, wN);
}

TEST(Compare, DefaultTargets) {
  const std::vector<double> c{0.1, 0.3}, w{0.5, 0.5};
  const auto th = default_category_targets(c, 100);
  EXPECT_NEAR(th[0], 0.008, 1e-15);
  const double s = 0.5 * std::sqrt(0.1) + 0.5 * std::sqrt(0.3);
  EXPECT_NEAR(default_overall_target(w, c, 100), 2.0 * s * s / 100.0, 1e-15);
}

TEST(Compare, DeterministicAcrossWorkers) {
  const auto ds = ingest(fixture_path());
  CompareOptions opts;
  opts.replications = 12;
  const auto a = compare_allocations(ds, opts);
  opts.workers = 3;
  const auto b = compare_allocations(ds, opts);
  std::ostringstream sa, sb;
  write_csv(sa, a);
  write_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(Compare, RejectsStarvedCategory) {
  const auto ds = parse("category,weight,samples,positives\nA,0.5,0,0\nB,0.5,50,5\n");
  EXPECT_THROW(compare_allocations(ds), InvalidInput);
}
