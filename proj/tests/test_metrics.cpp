#include <telesys/metrics.hpp>
#include <telesys/synthetic.hpp>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace telesys;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Vector normals(std::uint64_t seed, Eigen::Index n) { return synthetic::white_noise(seed, n, 1).col(0); }

}  // namespace

TEST(Rmse, Examples) {
  const Vector a = vec({1.0, -2.0, 3.5});
  EXPECT_EQ(rmse(a, a), 0.0);
  EXPECT_DOUBLE_EQ(rmse(vec({0, 0}), vec({1, 1})), 1.0);
  EXPECT_THROW(rmse(vec({1}), vec({1, 2})), DataError);
}

TEST(Rmse, AgreesWithReverseSummation) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Vector a = normals(s, 4096);
    const Vector b = 3.0 * normals(s + 100, 4096);
    EXPECT_NEAR(rmse(a, b), oracle::rmse_reverse(a, b), 1e-12);
  }
}

TEST(Rmse, ScaleEquivariant) {
  const Vector a = normals(1, 500);
  const Vector b = normals(2, 500);
  EXPECT_NEAR(rmse(7.5 * a, 7.5 * b), 7.5 * rmse(a, b), 1e-12);
  EXPECT_NEAR(rmse(a + Vector::Constant(500, 4.0), b + Vector::Constant(500, 4.0)), rmse(a, b), 1e-12);
}

TEST(Accuracy, Examples) {
  const Vector t = vec({0.0, 0.25, 0.5, 0.75, 1.0});
  EXPECT_EQ(accuracy_pct(t, t), 100.0);
  const Vector e = t + Vector::Constant(5, 0.05);
  EXPECT_NEAR(accuracy_pct(e, t, AccuracyMetric::kNrmseRange), 95.0, 1e-12);
  EXPECT_NEAR(accuracy_pct(e, t, AccuracyMetric::kOneMinusRmse), 95.0, 1e-12);
  EXPECT_NEAR(accuracy_pct(e, t, AccuracyMetric::kNmae), 95.0, 1e-12);
}

TEST(Accuracy, ClippedToPercentRange) {
  const Vector t = vec({0.0, 1.0});
  EXPECT_EQ(accuracy_pct(vec({50.0, -50.0}), t), 0.0);
}

TEST(Accuracy, RangeMetricInvariantUnderAffineRescaling) {
  const Vector t = normals(5, 300);
  const Vector e = t + 0.1 * normals(6, 300);
  const double base = accuracy_pct(e, t);
  const Vector shift = Vector::Constant(300, -12.0);
  EXPECT_NEAR(accuracy_pct(4.0 * e + shift, 4.0 * t + shift), base, 1e-10);
}

TEST(Accuracy, ZeroRangeTruthIsAnError) {
  EXPECT_THROW(accuracy_pct(vec({1, 2}), vec({3, 3})), NumericalError);
  EXPECT_NO_THROW(accuracy_pct(vec({1, 2}), vec({3, 3}), AccuracyMetric::kOneMinusRmse));
}

TEST(Accuracy, MetricNamesRoundTrip) {
  for (auto m : {AccuracyMetric::kNrmseRange, AccuracyMetric::kOneMinusRmse, AccuracyMetric::kNmae})
    EXPECT_EQ(accuracy_metric_from_string(to_string(m)), m);
  EXPECT_THROW(accuracy_metric_from_string("mape"), ConfigError);
}

TEST(Whiteness, AutocorrelationMatchesOracle) {
  const Vector x = normals(9, 1000) + 0.5 * Vector::LinSpaced(1000, 0.0, 1.0);
  for (Eigen::Index lag : {1, 2, 5, 10}) EXPECT_NEAR(autocorrelation(x, lag), oracle::acf(x, lag), 1e-12);
}

TEST(Whiteness, AlternatingSequence) {
  Vector x(1000);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = i % 2 == 0 ? 1.0 : -1.0;
  EXPECT_NEAR(autocorrelation(x, 1), -1.0, 2e-3);
}

TEST(Whiteness, ConstantSequenceIsAnError) {
  EXPECT_THROW(autocorrelation(Vector::Constant(50, 2.0), 1), NumericalError);
}

TEST(Whiteness, WhiteNoiseUsuallyInsideThreeSigmaBand) {
  const Eigen::Index N = 10000;
  int inside = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto w = innovation_whiteness(synthetic::white_noise(1000 + s, N, 1), 10);
    EXPECT_NEAR(w.band, 1.96 / 100.0, 1e-15);
    inside += w.within(3.0 / std::sqrt(static_cast<double>(N))) ? 1 : 0;
  }
  EXPECT_GE(inside, 95);
}

TEST(Whiteness, NeedsMoreSamplesThanLag) {
  EXPECT_THROW(innovation_whiteness(Matrix::Ones(5, 1), 10), DataError);
}

TEST(Report, BurnInAndScores) {
  Matrix truth(100, 2);
  truth.col(0) = Vector::LinSpaced(100, 0.0, 1.0);
  truth.col(1) = Vector::LinSpaced(100, 1.0, 3.0);
  Matrix est = truth;
  est.topRows(10).array() += 5.0;
  est.col(1).tail(90).array() += 0.02;
  ReportOptions opts;
  opts.burn_in = 10;
  const auto rep = make_report(est, truth, synthetic::white_noise(1, 100, 2), opts, {"x", "y"});
  ASSERT_EQ(rep.scores.size(), 2u);
  EXPECT_NEAR(rep.scores[0].rmse, 0.0, 1e-15);
  EXPECT_NEAR(rep.scores[1].rmse, 0.02, 1e-12);
  EXPECT_GT(rep.scores_full[0].rmse, 1.0);
  EXPECT_EQ(rep.whiteness.size(), 2u);
  EXPECT_EQ(rep.metric_def, "nrmse_range");
  opts.burn_in = 100;
  EXPECT_THROW(make_report(est, truth, Matrix(), opts), ConfigError);
}

TEST(Report, JsonRoundTrip) {
  EstimationReport r;
  r.channels = {"x", "y"};
  r.scores = {{0.01, 99.0}, {0.02, 98.0}};
  r.scores_full = {{0.03, 97.0}, {0.04, 96.0}};
  r.whiteness = {0.01, 0.02};
  r.whiteness_band = 0.0196;
  r.n_samples = 10000;
  r.burn_in = 50;
  r.scenario = scenario_suite()[2];
  const auto back = nlohmann::json::parse(nlohmann::json(r).dump()).get<EstimationReport>();
  EXPECT_EQ(back.channels, r.channels);
  EXPECT_EQ(back.scores[1].accuracy_pct, 98.0);
  EXPECT_EQ(back.burn_in, 50);
  ASSERT_TRUE(back.scenario.has_value());
  EXPECT_EQ(*back.scenario, *r.scenario);
  EXPECT_DOUBLE_EQ(back.mean_accuracy(), 98.5);
}

TEST(FitReport, SelfValidationNoiseFree) {
  const auto sys = synthetic::random_stable_system(14, 3, 2, 2);
  TrajectoryDataset ds;
  ds.inputs = synthetic::white_noise(15, 800, 2);
  ds.outputs = synthetic::simulate_truth(sys, ds.inputs, 0.0, 0.0, 0).outputs;
  ds.input_names = {"a", "b"};
  ds.output_names = {"p", "q"};
  const auto rep = fit_report(sys.as_model(), ds);
  for (const auto& s : rep.scores) EXPECT_GT(s.accuracy_pct, 99.9);
  EXPECT_EQ(rep.predicted.rows(), 800);
}

TEST(FitReport, ZeroedModelEqualsZeroPredictor) {
  auto m = synthetic::random_stable_system(2, 2, 1, 1).as_model();
  m.B.setZero();
  m.C.setZero();
  m.D.setZero();
  TrajectoryDataset ds;
  ds.inputs = synthetic::white_noise(3, 200, 1);
  ds.outputs = synthetic::white_noise(4, 200, 1);
  ds.input_names = {"u"};
  ds.output_names = {"y"};
  const auto rep = fit_report(m, ds);
  EXPECT_DOUBLE_EQ(rep.scores[0].accuracy_pct, accuracy_pct(Vector::Zero(200), ds.outputs.col(0)));
}

TEST(FitReport, ChannelMismatch) {
  const auto m = synthetic::random_stable_system(2, 2, 1, 1).as_model();
  TrajectoryDataset ds;
  ds.inputs = Matrix::Zero(10, 2);
  ds.outputs = Matrix::Zero(10, 1);
  EXPECT_THROW(fit_report(m, ds), DataError);
}

TEST(Calibration, PublishedPairs) {
  EXPECT_EQ(published_table_pairs().size(), 18u);
  const auto summary = published_summary_pairs();
  ASSERT_EQ(summary.size(), 3u);
  EXPECT_DOUBLE_EQ(summary[0].rmse, 0.0331);
  EXPECT_DOUBLE_EQ(summary[2].accuracy_pct, 97.67);
}

TEST(Calibration, RecoversSyntheticRange) {
  std::vector<PublishedPair> pairs;
  for (double r : {0.01, 0.02, 0.05, 0.08}) pairs.push_back({r, 100.0 * (1.0 - r / 0.8), "synthetic"});
  const auto scores = calibrate_accuracy(pairs);
  ASSERT_EQ(scores.size(), 3u);
  const auto it = std::find_if(scores.begin(), scores.end(),
                               [](const auto& s) { return s.metric_def == "nrmse_range"; });
  ASSERT_NE(it, scores.end());
  EXPECT_NEAR(it->fitted_range, 0.8, 1e-9);
  EXPECT_LT(it->rms_error_pct, 1e-9);
  EXPECT_LT(scores.front().rms_error_pct, 1e-9);
  EXPECT_EQ(scores.back().metric_def, "one_minus_rmse");
  for (std::size_t i = 1; i < scores.size(); ++i) EXPECT_LE(scores[i - 1].rms_error_pct, scores[i].rms_error_pct);
}

TEST(Calibration, PublishedPairsAreNotExactlyConsistent) {
  const auto scores = calibrate_accuracy(published_table_pairs());
  EXPECT_GT(scores.front().rms_error_pct, 0.1);
  EXPECT_THROW(calibrate_accuracy({}), DataError);
}
