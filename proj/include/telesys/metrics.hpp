#pragma once

#include <telesys/dataio.hpp>
#include <telesys/netsim.hpp>
#include <telesys/sysid.hpp>
#include <telesys/types.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace telesys {

/// Root mean squared difference of two equal-length series.
inline double rmse(const Eigen::Ref<const Vector>& estimates, const Eigen::Ref<const Vector>& truth) {
  if (estimates.size() != truth.size()) throw DataError("rmse: length mismatch");
  if (estimates.size() == 0) throw DataError("rmse: empty series");
  return std::sqrt((estimates - truth).squaredNorm() / static_cast<double>(truth.size()));
}

enum class AccuracyMetric {
  kNrmseRange,    // 100 (1 - RMSE / (max(truth) - min(truth)))
  kOneMinusRmse,  // 100 (1 - RMSE), meaningful on [0, 1]-normalized data
  kNmae,          // 100 (1 - MAE / (max(truth) - min(truth)))
};

inline std::string to_string(AccuracyMetric m) {
  switch (m) {
    case AccuracyMetric::kNrmseRange: return "nrmse_range";
    case AccuracyMetric::kOneMinusRmse: return "one_minus_rmse";
    case AccuracyMetric::kNmae: return "nmae";
  }
  return "nrmse_range";
}

inline AccuracyMetric accuracy_metric_from_string(std::string_view s) {
  if (s == "nrmse_range") return AccuracyMetric::kNrmseRange;
  if (s == "one_minus_rmse") return AccuracyMetric::kOneMinusRmse;
  if (s == "nmae") return AccuracyMetric::kNmae;
  throw ConfigError("unknown accuracy metric '" + std::string(s) + "'");
}

/// Accuracy percentage clipped to [0, 100].
inline double accuracy_pct(const Eigen::Ref<const Vector>& estimates, const Eigen::Ref<const Vector>& truth,
                           AccuracyMetric metric = AccuracyMetric::kNrmseRange) {
  const double e = rmse(estimates, truth);
  double acc = 0.0;
  switch (metric) {
    case AccuracyMetric::kOneMinusRmse:
      acc = 100.0 * (1.0 - e);
      break;
    case AccuracyMetric::kNrmseRange:
    case AccuracyMetric::kNmae: {
      const double range = truth.maxCoeff() - truth.minCoeff();
      if (!(range > 0.0)) throw NumericalError("accuracy: truth has zero range");
      const double err = metric == AccuracyMetric::kNmae
                             ? (estimates - truth).cwiseAbs().mean()
                             : e;
      acc = 100.0 * (1.0 - err / range);
      break;
    }
  }
  return std::clamp(acc, 0.0, 100.0);
}

struct Whiteness {
  Vector max_abs_autocorr;  // per channel, over lags 1..L
  double band = 0.0;        // 1.96 / sqrt(N)
  int max_lag = 0;
  Eigen::Index samples = 0;

  [[nodiscard]] bool within(double limit) const {
    return (max_abs_autocorr.array() < limit).all();
  }
};

/// Sample autocorrelation at `lag` of a single channel (biased estimator).
inline double autocorrelation(const Eigen::Ref<const Vector>& x, Eigen::Index lag) {
  const auto N = x.size();
  const Vector c = x.array() - x.mean();
  const double c0 = c.squaredNorm();
  if (!(c0 > 0.0)) throw NumericalError("autocorrelation undefined for zero-variance series");
  return c.head(N - lag).dot(c.tail(N - lag)) / c0;
}

inline Whiteness innovation_whiteness(const Matrix& innovations, int max_lag = 10) {
  const auto N = innovations.rows();
  if (max_lag < 1 || N <= max_lag)
    throw DataError("whiteness needs more samples than the maximum lag");
  Whiteness w;
  w.max_lag = max_lag;
  w.samples = N;
  w.band = 1.96 / std::sqrt(static_cast<double>(N));
  w.max_abs_autocorr.resize(innovations.cols());
  for (Eigen::Index c = 0; c < innovations.cols(); ++c) {
    double worst = 0.0;
    for (int lag = 1; lag <= max_lag; ++lag)
      worst = std::max(worst, std::abs(autocorrelation(innovations.col(c), lag)));
    w.max_abs_autocorr(c) = worst;
  }
  return w;
}

struct ChannelScore {
  double rmse = 0.0;
  double accuracy_pct = 0.0;
};

struct EstimationReport {
  std::vector<std::string> channels;
  std::vector<ChannelScore> scores;          // after burn-in
  std::vector<ChannelScore> scores_full;     // whole record
  std::vector<double> whiteness;             // max |acf| over lags 1..L per channel
  double whiteness_band = 0.0;
  int whiteness_lag = 10;
  Eigen::Index n_samples = 0;
  Eigen::Index burn_in = 0;
  std::optional<NetworkScenario> scenario;
  std::string metric_def = "nrmse_range";

  [[nodiscard]] double mean_accuracy() const {
    double s = 0.0;
    for (const auto& c : scores) s += c.accuracy_pct;
    return scores.empty() ? 0.0 : s / static_cast<double>(scores.size());
  }
};

struct ReportOptions {
  AccuracyMetric metric = AccuracyMetric::kNrmseRange;
  Eigen::Index burn_in = 0;
  int whiteness_lag = 10;
};

/// Scores estimates against truth per channel. Innovations may be empty, in
/// which case whiteness is left unset.
inline EstimationReport make_report(const Matrix& estimates, const Matrix& truth, const Matrix& innovations,
                                    const ReportOptions& opts, std::vector<std::string> channels = {}) {
  if (estimates.rows() != truth.rows() || estimates.cols() != truth.cols())
    throw DataError("report: estimates and truth differ in shape");
  if (opts.burn_in < 0 || opts.burn_in >= truth.rows())
    throw ConfigError("burn-in leaves no samples to score");
  EstimationReport rep;
  rep.metric_def = to_string(opts.metric);
  rep.n_samples = truth.rows();
  rep.burn_in = opts.burn_in;
  rep.channels = std::move(channels);
  const auto tail = truth.rows() - opts.burn_in;
  for (Eigen::Index c = 0; c < truth.cols(); ++c) {
    const Vector e = estimates.col(c);
    const Vector t = truth.col(c);
    rep.scores.push_back({rmse(e.tail(tail), t.tail(tail)),
                          accuracy_pct(e.tail(tail), t.tail(tail), opts.metric)});
    rep.scores_full.push_back({rmse(e, t), accuracy_pct(e, t, opts.metric)});
  }
  if (innovations.size() != 0) {
    const auto w = innovation_whiteness(innovations.bottomRows(tail), opts.whiteness_lag);
    rep.whiteness.assign(w.max_abs_autocorr.data(), w.max_abs_autocorr.data() + w.max_abs_autocorr.size());
    rep.whiteness_band = w.band;
    rep.whiteness_lag = opts.whiteness_lag;
  }
  return rep;
}

inline void to_json(nlohmann::json& j, const ChannelScore& s) {
  j = nlohmann::json{{"rmse", s.rmse}, {"accuracy_pct", s.accuracy_pct}};
}
inline void from_json(const nlohmann::json& j, ChannelScore& s) {
  s.rmse = j.at("rmse").get<double>();
  s.accuracy_pct = j.at("accuracy_pct").get<double>();
}

inline void to_json(nlohmann::json& j, const EstimationReport& r) {
  j = nlohmann::json{{"channels", r.channels},
                     {"scores", r.scores},
                     {"scores_full", r.scores_full},
                     {"whiteness", r.whiteness},
                     {"whiteness_band", r.whiteness_band},
                     {"whiteness_lag", r.whiteness_lag},
                     {"n_samples", r.n_samples},
                     {"burn_in", r.burn_in},
                     {"metric_def", r.metric_def}};
  if (r.scenario) j["scenario"] = *r.scenario;
}

inline void from_json(const nlohmann::json& j, EstimationReport& r) {
  r.channels = j.at("channels").get<std::vector<std::string>>();
  r.scores = j.at("scores").get<std::vector<ChannelScore>>();
  r.scores_full = j.at("scores_full").get<std::vector<ChannelScore>>();
  r.whiteness = j.at("whiteness").get<std::vector<double>>();
  r.whiteness_band = j.at("whiteness_band").get<double>();
  r.whiteness_lag = j.at("whiteness_lag").get<int>();
  r.n_samples = j.at("n_samples").get<Eigen::Index>();
  r.burn_in = j.at("burn_in").get<Eigen::Index>();
  r.metric_def = j.at("metric_def").get<std::string>();
  r.scenario.reset();
  if (j.contains("scenario")) r.scenario = j.at("scenario").get<NetworkScenario>();
}

struct FitReport {
  std::vector<std::string> channels;
  std::vector<ChannelScore> scores;
  std::string metric_def;
  Matrix predicted;
  Vector initial_state;
};

enum class InitialState { kZero, kFitted };

/// Open-loop replay of the model on validation inputs (already normalized with
/// the identification split's params), scored against validation outputs.
/// The replay starts from the least-squares initial state by default, which
/// absorbs the constant mode that [0,1] scaling adds to the data.
inline FitReport fit_report(const StateSpaceModel& model, const TrajectoryDataset& validation,
                            AccuracyMetric metric = AccuracyMetric::kNrmseRange,
                            InitialState x0 = InitialState::kFitted) {
  if (validation.input_channels() != model.inputs() || validation.output_channels() != model.outputs())
    throw DataError("validation data has " + std::to_string(validation.input_channels()) + "x" +
                    std::to_string(validation.output_channels()) + " channels, model expects " +
                    std::to_string(model.inputs()) + "x" + std::to_string(model.outputs()));
  FitReport rep;
  rep.metric_def = to_string(metric);
  rep.channels = validation.output_names;
  rep.initial_state = x0 == InitialState::kFitted
                          ? estimate_initial_state(model, validation.inputs, validation.outputs)
                          : Vector::Zero(model.order());
  rep.predicted = simulate(model, validation.inputs, rep.initial_state);
  for (Eigen::Index c = 0; c < model.outputs(); ++c)
    rep.scores.push_back({rmse(rep.predicted.col(c), validation.outputs.col(c)),
                          accuracy_pct(rep.predicted.col(c), validation.outputs.col(c), metric)});
  return rep;
}

// ---------------------------------------------------------------------------
// Accuracy-formula calibration against published (RMSE, accuracy) pairs.

struct PublishedPair {
  double rmse;
  double accuracy_pct;
  std::string source;
};

/// The 18 per-axis pairs of the scenario table.
inline std::vector<PublishedPair> published_table_pairs() {
  std::vector<PublishedPair> out;
  const char* axes = "xyz";
  int row = 1;
  for (const auto& p : published_scenarios()) {
    for (std::size_t a = 0; a < 3; ++a)
      out.push_back({p.rmse[a], p.accuracy_pct[a],
                     "table row " + std::to_string(row) + " " + std::string(1, axes[a])});
    ++row;
  }
  return out;
}

/// The three per-axis pairs quoted alongside the position plots.
inline std::vector<PublishedPair> published_summary_pairs() {
  return {{0.0331, 94.80, "summary x"}, {0.0297, 95.99, "summary y"}, {0.0243, 97.67, "summary z"}};
}

struct CalibrationScore {
  std::string metric_def;
  // Fitted truth range (range-normalized formulas); 1 for one_minus_rmse.
  double fitted_range = 1.0;
  double rms_error_pct = 0.0;
  double max_error_pct = 0.0;
};

/// Scores each formula as a function of RMSE against the pairs. Range-based
/// formulas get a least-squares truth range; nmae additionally assumes
/// Gaussian errors (MAE = sqrt(2/pi) RMSE). Sorted best first.
inline std::vector<CalibrationScore> calibrate_accuracy(const std::vector<PublishedPair>& pairs,
                                                        std::optional<double> known_range = {}) {
  if (pairs.empty()) throw DataError("calibration needs at least one pair");
  auto score = [&](std::string def, double factor, bool fit_range) {
    // acc = 100 (1 - factor * rmse / range); LS on theta = 1 / range.
    double theta = 1.0;
    if (fit_range) {
      if (known_range) {
        theta = 1.0 / *known_range;
      } else {
        double num = 0.0;
        double den = 0.0;
        for (const auto& p : pairs) {
          const double a = 100.0 * factor * p.rmse;
          num += a * (100.0 - p.accuracy_pct);
          den += a * a;
        }
        theta = num / den;
      }
    }
    CalibrationScore s;
    s.metric_def = std::move(def);
    s.fitted_range = fit_range ? 1.0 / theta : 1.0;
    double sq = 0.0;
    for (const auto& p : pairs) {
      const double pred = std::clamp(100.0 * (1.0 - factor * p.rmse * theta), 0.0, 100.0);
      const double err = pred - p.accuracy_pct;
      sq += err * err;
      s.max_error_pct = std::max(s.max_error_pct, std::abs(err));
    }
    s.rms_error_pct = std::sqrt(sq / static_cast<double>(pairs.size()));
    return s;
  };
  std::vector<CalibrationScore> out{
      score("one_minus_rmse", 1.0, false),
      score("nrmse_range", 1.0, true),
      score("nmae", std::sqrt(2.0 / 3.141592653589793), true),
  };
  // Fits that agree to 1e-9 points keep their listed order.
  auto key = [](const CalibrationScore& s) { return std::round(s.rms_error_pct * 1e9); };
  std::stable_sort(out.begin(), out.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
  return out;
}

}  // namespace telesys
