#pragma once

// Measurement-path channel impairment: constant delay, Gaussian jitter and
// Bernoulli packet loss with hold of the last observed sample.
//
// For each sample k >= 2 (1-based) the delivered source index is
//
//   del_k = max(1, k - round(nd/dt + g_k * nj/dt)),   g_k ~ N(0, 1)
//
// with nd, nj converted from milliseconds to seconds. With probability np the
// packet is lost and the previously observed row is repeated.

#include <telesys/dataio.hpp>
#include <telesys/rng.hpp>
#include <telesys/types.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace telesys {

struct DelayRange {
  double lo_ms = 0.0;
  double hi_ms = 0.0;
  bool operator==(const DelayRange&) const = default;
};

struct NetworkScenario {
  double delay_ms = 0.0;    // nd
  double jitter_ms = 0.0;   // nj, standard deviation
  double loss_prob = 0.0;   // np as a fraction in [0, 1]
  std::uint64_t seed = 0;
  // Range the delay was collapsed from, when the source quoted one.
  std::optional<DelayRange> delay_range;
  // Draw the delay uniformly from delay_range per sample instead of using delay_ms.
  bool sample_delay_range = false;
  std::string label;

  void validate() const {
    if (!(delay_ms >= 0.0) || !std::isfinite(delay_ms)) throw ConfigError("delay must be >= 0");
    if (!(jitter_ms >= 0.0) || !std::isfinite(jitter_ms)) throw ConfigError("jitter must be >= 0");
    if (!(loss_prob >= 0.0 && loss_prob <= 1.0))
      throw ConfigError("loss probability must lie in [0, 1]");
    if (delay_range && !(delay_range->lo_ms >= 0.0 && delay_range->hi_ms >= delay_range->lo_ms))
      throw ConfigError("delay range must satisfy 0 <= lo <= hi");
    if (sample_delay_range && !delay_range)
      throw ConfigError("per-sample delay draw requested without a delay range");
  }

  bool operator==(const NetworkScenario&) const = default;
};

/// Scenario document keys: nd_ms, nj_ms, and either np (fraction) or
/// np_percent; optional seed, delay_range_ms [lo, hi], sample_delay_range, label.
inline void from_json(const nlohmann::json& j, NetworkScenario& s) {
  s = {};
  s.delay_ms = j.value("nd_ms", 0.0);
  s.jitter_ms = j.value("nj_ms", 0.0);
  const bool has_fraction = j.contains("np");
  const bool has_percent = j.contains("np_percent");
  if (has_fraction && has_percent) throw ConfigError("give either np or np_percent, not both");
  if (has_fraction) s.loss_prob = j.at("np").get<double>();
  if (has_percent) s.loss_prob = j.at("np_percent").get<double>() / 100.0;
  s.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("delay_range_ms")) {
    const auto& r = j.at("delay_range_ms");
    if (!r.is_array() || r.size() != 2) throw ConfigError("delay_range_ms must be [lo, hi]");
    s.delay_range = DelayRange{r[0].get<double>(), r[1].get<double>()};
    if (!j.contains("nd_ms")) s.delay_ms = 0.5 * (s.delay_range->lo_ms + s.delay_range->hi_ms);
  }
  s.sample_delay_range = j.value("sample_delay_range", false);
  s.label = j.value("label", std::string{});
  s.validate();
}

inline void to_json(nlohmann::json& j, const NetworkScenario& s) {
  j = nlohmann::json{{"nd_ms", s.delay_ms}, {"nj_ms", s.jitter_ms}, {"np", s.loss_prob}, {"seed", s.seed}};
  if (s.delay_range) j["delay_range_ms"] = {s.delay_range->lo_ms, s.delay_range->hi_ms};
  if (s.sample_delay_range) j["sample_delay_range"] = true;
  if (!s.label.empty()) j["label"] = s.label;
}

/// What the estimator sees. Indices are 1-based; source_index is 0 for
/// samples where the packet was lost and the previous observation held.
struct ImpairedStream {
  Matrix observed;
  std::vector<Eigen::Index> source_index;
  std::vector<bool> loss_mask;

  [[nodiscard]] Eigen::Index samples() const { return observed.rows(); }
  [[nodiscard]] double loss_rate() const {
    if (loss_mask.size() < 2) return 0.0;
    std::size_t lost = 0;
    for (std::size_t k = 1; k < loss_mask.size(); ++k) lost += loss_mask[k] ? 1 : 0;
    return static_cast<double>(lost) / static_cast<double>(loss_mask.size() - 1);
  }
};

/// Per-sample jitter normal and loss uniform are drawn for every k >= 2 from
/// separate substreams, whether or not they end up mattering.
inline ImpairedStream impair(const Matrix& clean, const NetworkScenario& scenario, double dt) {
  if (clean.rows() < 2) throw DataError("channel input needs at least 2 samples");
  if (!(dt > 0.0)) throw DataError("sample period must be positive");
  scenario.validate();

  const Eigen::Index n = clean.rows();
  ImpairedStream out;
  out.observed.resize(n, clean.cols());
  out.source_index.assign(static_cast<std::size_t>(n), 0);
  out.loss_mask.assign(static_cast<std::size_t>(n), false);

  out.observed.row(0) = clean.row(0);
  out.source_index[0] = 1;

  rng::Generator jitter(scenario.seed, rng::Stream::kJitter);
  rng::Generator loss(scenario.seed, rng::Stream::kLoss);
  std::optional<rng::Generator> range_draw;
  if (scenario.sample_delay_range) range_draw.emplace(scenario.seed, rng::Stream::kDelayRange);

  const double jitter_samples = scenario.jitter_ms / 1000.0 / dt;
  for (Eigen::Index i = 1; i < n; ++i) {
    const auto k = i + 1;  // 1-based sample number
    double delay_ms = scenario.delay_ms;
    if (range_draw)
      delay_ms = scenario.delay_range->lo_ms +
                 range_draw->uniform() * (scenario.delay_range->hi_ms - scenario.delay_range->lo_ms);
    const double offset = std::round(delay_ms / 1000.0 / dt + jitter.normal() * jitter_samples);
    // Negative jitter may not reach past the current sample.
    const double idx = std::clamp(static_cast<double>(k) - offset, 1.0, static_cast<double>(k));
    const auto del_k = static_cast<Eigen::Index>(idx);
    const bool lost = loss.uniform() < scenario.loss_prob;

    const auto slot = static_cast<std::size_t>(i);
    out.loss_mask[slot] = lost;
    if (lost) {
      out.observed.row(i) = out.observed.row(i - 1);
    } else {
      out.observed.row(i) = clean.row(del_k - 1);
      out.source_index[slot] = del_k;
    }
  }
  return out;
}

/// Row of the scenario table with its published accuracy/RMSE figures.
struct PublishedScenario {
  NetworkScenario scenario;
  std::array<double, 3> accuracy_pct;
  std::array<double, 3> rmse;
};

/// The six canonical tactile-internet scenarios. Loss is given in percent in
/// the source table and converted to a fraction here; ranged delays use their
/// midpoint and keep the range.
inline std::vector<PublishedScenario> published_scenarios() {
  auto make = [](double nj, double nd_lo, double nd_hi, double np_percent, std::string label) {
    NetworkScenario s;
    s.jitter_ms = nj;
    s.delay_ms = 0.5 * (nd_lo + nd_hi);
    if (nd_lo != nd_hi) s.delay_range = DelayRange{nd_lo, nd_hi};
    s.loss_prob = np_percent / 100.0;
    s.label = std::move(label);
    return s;
  };
  return {
      {make(0.5, 0.5, 2.0, 0.01, "mild-a"), {96.67, 95.13, 97.52}, {0.0363, 0.0308, 0.0333}},
      {make(0.5, 0.5, 2.0, 0.001, "mild-b"), {95.58, 95.61, 97.60}, {0.0356, 0.0310, 0.0337}},
      {make(0.1, 1.0, 1.0, 0.01, "best"), {98.68, 98.70, 99.00}, {0.0232, 0.0196, 0.0239}},
      {make(2.0, 5.0, 5.0, 0.001, "jittery"), {88.46, 89.32, 93.65}, {0.0600, 0.0575, 0.0581}},
      {make(1.0, 1.0, 1.0, 0.001, "moderate"), {90.66, 88.67, 93.47}, {0.0644, 0.0600, 0.0523}},
      {make(3.0, 200.0, 5000.0, 1.0, "severe"), {85.95, 87.68, 90.95}, {0.0811, 0.0766, 0.0748}},
  };
}

inline std::vector<NetworkScenario> scenario_suite() {
  std::vector<NetworkScenario> out;
  for (auto& p : published_scenarios()) out.push_back(std::move(p.scenario));
  return out;
}

/// Columns: k, observed..., source_index, lost.
inline void write_impaired_csv(std::ostream& out, const ImpairedStream& s,
                               const std::vector<std::string>& names = {}) {
  out << 'k';
  for (Eigen::Index c = 0; c < s.observed.cols(); ++c)
    out << ",z:" << (c < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(c)]
                                                                 : std::to_string(c));
  out << ",source_index,lost\n";
  for (Eigen::Index k = 0; k < s.samples(); ++k) {
    out << (k + 1);
    for (Eigen::Index c = 0; c < s.observed.cols(); ++c)
      out << ',' << detail::format_double(s.observed(k, c));
    const auto slot = static_cast<std::size_t>(k);
    out << ',' << s.source_index[slot] << ',' << (s.loss_mask[slot] ? 1 : 0) << '\n';
  }
}

}  // namespace telesys
