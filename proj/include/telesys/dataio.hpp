#pragma once

// Trajectory datasets: CSV loading, min-max normalization and block Hankel
// construction.

#include <telesys/types.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace telesys {

/// Time-aligned master (input) and slave (output) channels. Rows are samples.
struct TrajectoryDataset {
  Matrix inputs;
  Matrix outputs;
  double dt = 1.0 / 30.0;
  std::vector<std::string> input_names;
  std::vector<std::string> output_names;

  [[nodiscard]] Eigen::Index samples() const { return inputs.rows(); }
  [[nodiscard]] Eigen::Index input_channels() const { return inputs.cols(); }
  [[nodiscard]] Eigen::Index output_channels() const { return outputs.cols(); }

  /// Throws DataError if any structural invariant is broken.
  void validate() const {
    if (inputs.rows() != outputs.rows())
      throw DataError("inputs and outputs have different row counts");
    if (inputs.rows() < 2) throw DataError("dataset needs at least 2 samples");
    if (inputs.cols() < 1 || outputs.cols() < 1)
      throw DataError("dataset needs at least one input and one output channel");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DataError("sample period must be positive");
    if (static_cast<Eigen::Index>(input_names.size()) != inputs.cols() ||
        static_cast<Eigen::Index>(output_names.size()) != outputs.cols())
      throw DataError("channel name count does not match channel count");
    if (!inputs.allFinite() || !outputs.allFinite())
      throw DataError("dataset contains non-finite values");
  }
};

enum class ChannelRole { kInput, kOutput };

inline std::string to_string(ChannelRole role) {
  return role == ChannelRole::kInput ? "input" : "output";
}

inline ChannelRole role_from_string(std::string_view s) {
  if (s == "input") return ChannelRole::kInput;
  if (s == "output") return ChannelRole::kOutput;
  throw DataError("unknown channel role '" + std::string(s) + "'");
}

struct ChannelScale {
  std::string name;
  ChannelRole role = ChannelRole::kInput;
  double min = 0.0;
  double max = 0.0;
  bool constant = false;

  bool operator==(const ChannelScale&) const = default;
};

/// Per-channel min/max retained so validation data and estimates can be
/// mapped with the identification split's scaling.
struct NormalizationParams {
  std::vector<ChannelScale> inputs;
  std::vector<ChannelScale> outputs;

  [[nodiscard]] bool empty() const { return inputs.empty() && outputs.empty(); }
  [[nodiscard]] bool any_constant() const {
    auto flagged = [](const ChannelScale& c) { return c.constant; };
    return std::any_of(inputs.begin(), inputs.end(), flagged) ||
           std::any_of(outputs.begin(), outputs.end(), flagged);
  }

  bool operator==(const NormalizationParams&) const = default;
};

inline void to_json(nlohmann::json& j, const ChannelScale& c) {
  j = nlohmann::json{{"name", c.name},
                     {"role", to_string(c.role)},
                     {"min", c.min},
                     {"max", c.max},
                     {"constant", c.constant}};
}

inline void from_json(const nlohmann::json& j, ChannelScale& c) {
  c.name = j.at("name").get<std::string>();
  c.role = role_from_string(j.at("role").get<std::string>());
  c.min = j.at("min").get<double>();
  c.max = j.at("max").get<double>();
  c.constant = j.value("constant", c.max == c.min);
  if (c.max < c.min) throw DataError("channel '" + c.name + "' has max < min");
}

inline void to_json(nlohmann::json& j, const NormalizationParams& p) {
  nlohmann::json channels = nlohmann::json::array();
  for (const auto& c : p.inputs) channels.push_back(c);
  for (const auto& c : p.outputs) channels.push_back(c);
  j = nlohmann::json{{"channels", channels}};
}

inline void from_json(const nlohmann::json& j, NormalizationParams& p) {
  p = {};
  for (const auto& cj : j.at("channels")) {
    auto c = cj.get<ChannelScale>();
    (c.role == ChannelRole::kInput ? p.inputs : p.outputs).push_back(std::move(c));
  }
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || s.empty()) return std::nullopt;
  return v;
}

/// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Column selection for load_dataset. Empty name lists select every
/// `u:` / `y:` column in header order.
struct LoadOptions {
  double dt = 1.0 / 30.0;
  std::vector<std::string> input_channels;
  std::vector<std::string> output_channels;
  // Columns without a recognised prefix are an error unless this is set.
  bool ignore_unknown_columns = false;
};

/// Parses CSV text with header `t,u:<name>...,y:<name>...`. The time column is
/// optional; when present, dt is derived from it.
inline TrajectoryDataset parse_dataset(std::istream& in, const LoadOptions& opts = {}) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty dataset file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = detail::split_csv_line(line);
  std::optional<std::size_t> time_col;
  std::vector<std::size_t> in_cols;
  std::vector<std::size_t> out_cols;
  std::vector<std::string> in_names;
  std::vector<std::string> out_names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto h = detail::trim(header[c]);
    if (h == "t" || h == "time") {
      if (time_col) throw DataError("duplicate time column");
      time_col = c;
    } else if (h.starts_with("u:")) {
      in_cols.push_back(c);
      in_names.emplace_back(h.substr(2));
    } else if (h.starts_with("y:")) {
      out_cols.push_back(c);
      out_names.emplace_back(h.substr(2));
    } else if (!opts.ignore_unknown_columns) {
      throw DataError("header column " + std::to_string(c + 1) + " ('" + std::string(h) +
                      "') has no u:/y: role prefix");
    }
  }

  auto select = [](const std::vector<std::string>& wanted, std::vector<std::size_t>& cols,
                   std::vector<std::string>& names, const char* role) {
    if (wanted.empty()) return;
    std::vector<std::size_t> picked;
    for (const auto& w : wanted) {
      const auto it = std::find(names.begin(), names.end(), w);
      if (it == names.end())
        throw DataError(std::string("requested ") + role + " channel '" + w + "' not in header");
      picked.push_back(cols[static_cast<std::size_t>(it - names.begin())]);
    }
    cols = std::move(picked);
    names = wanted;
  };
  select(opts.input_channels, in_cols, in_names, "input");
  select(opts.output_channels, out_cols, out_names, "output");

  if (in_cols.empty()) throw DataError("header declares no input (u:) columns");
  if (out_cols.empty()) throw DataError("header declares no output (y:) columns");

  std::vector<double> times;
  std::vector<double> in_vals;
  std::vector<double> out_vals;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(header.size()));
    auto cell = [&](std::size_t c) {
      const auto v = detail::parse_double(cells[c]);
      if (!v)
        throw DataError("unparseable value at row " + std::to_string(row) + ", column " +
                        std::to_string(c + 1));
      if (!std::isfinite(*v))
        throw DataError("non-finite value at row " + std::to_string(row) + ", column " +
                        std::to_string(c + 1));
      return *v;
    };
    if (time_col) times.push_back(cell(*time_col));
    for (auto c : in_cols) in_vals.push_back(cell(c));
    for (auto c : out_cols) out_vals.push_back(cell(c));
  }
  if (row < 2) throw DataError("dataset needs at least 2 samples, found " + std::to_string(row));

  TrajectoryDataset ds;
  const auto n = static_cast<Eigen::Index>(row);
  ds.inputs = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      in_vals.data(), n, static_cast<Eigen::Index>(in_cols.size()));
  ds.outputs = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      out_vals.data(), n, static_cast<Eigen::Index>(out_cols.size()));
  ds.input_names = std::move(in_names);
  ds.output_names = std::move(out_names);
  ds.dt = opts.dt;
  if (time_col) {
    ds.dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    if (!(ds.dt > 0.0)) throw DataError("time column is not increasing");
  }
  ds.validate();
  return ds;
}

inline TrajectoryDataset load_dataset(const std::string& path, const LoadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file '" + path + "'");
  try {
    return parse_dataset(in, opts);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

// JIGSAWS kinematics: 76 whitespace-separated columns per line, no header,
// sampled at 30 Hz. Four 19-column manipulator blocks in the order left MTM,
// right MTM, PSM1, PSM2; each block starts with the tool-tip x, y, z.
enum class JigsawsArm { kRight, kLeft };

struct JigsawsOptions {
  // kRight pairs the right MTM with PSM1, kLeft the left MTM with PSM2.
  JigsawsArm arm = JigsawsArm::kRight;
  // All 38 master columns as inputs and all 38 slave columns as outputs.
  bool full_features = false;
  double dt = 1.0 / 30.0;
};

inline constexpr int kJigsawsColumns = 76;

inline TrajectoryDataset parse_jigsaws_kinematics(std::istream& in, const JigsawsOptions& opts = {}) {
  std::vector<double> values;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string tok;
    int col = 0;
    std::vector<double> parsed;
    while (cells >> tok) {
      ++col;
      const auto v = detail::parse_double(tok);
      if (!v)
        throw DataError("unparseable value at row " + std::to_string(row + 1) + ", column " + std::to_string(col));
      if (!std::isfinite(*v))
        throw DataError("non-finite value at row " + std::to_string(row + 1) + ", column " + std::to_string(col));
      parsed.push_back(*v);
    }
    if (col == 0) continue;
    ++row;
    if (col != kJigsawsColumns)
      throw DataError("row " + std::to_string(row) + " has " + std::to_string(col) + " columns, expected 76");
    values.insert(values.end(), parsed.begin(), parsed.end());
  }
  if (row < 2) throw DataError("dataset needs at least 2 samples, found " + std::to_string(row));

  const auto n = static_cast<Eigen::Index>(row);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> all =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), n,
                                                                                               kJigsawsColumns);
  TrajectoryDataset ds;
  ds.dt = opts.dt;
  if (opts.full_features) {
    ds.inputs = all.leftCols(38);
    ds.outputs = all.rightCols(38);
    static const char* blocks[] = {"mtm_l", "mtm_r", "psm1", "psm2"};
    for (int c = 0; c < kJigsawsColumns; ++c) {
      auto name = std::string(blocks[c / 19]) + "_" + std::to_string(c % 19 + 1);
      (c < 38 ? ds.input_names : ds.output_names).push_back(std::move(name));
    }
  } else {
    const Eigen::Index master = opts.arm == JigsawsArm::kRight ? 19 : 0;
    const Eigen::Index slave = opts.arm == JigsawsArm::kRight ? 38 : 57;
    ds.inputs = all.middleCols(master, 3);
    ds.outputs = all.middleCols(slave, 3);
    ds.input_names = {"x", "y", "z"};
    ds.output_names = {"x", "y", "z"};
  }
  ds.validate();
  return ds;
}

inline TrajectoryDataset load_jigsaws_kinematics(const std::string& path, const JigsawsOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open kinematics file '" + path + "'");
  try {
    return parse_jigsaws_kinematics(in, opts);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

/// Writes the dataset with a time column `t = k * dt`. Values are written in
/// shortest round-trip form, so reloading is bit-identical.
inline void write_dataset(std::ostream& out, const TrajectoryDataset& ds) {
  out << "t";
  for (const auto& n : ds.input_names) out << ",u:" << n;
  for (const auto& n : ds.output_names) out << ",y:" << n;
  out << '\n';
  for (Eigen::Index k = 0; k < ds.samples(); ++k) {
    out << detail::format_double(static_cast<double>(k) * ds.dt);
    for (Eigen::Index c = 0; c < ds.inputs.cols(); ++c)
      out << ',' << detail::format_double(ds.inputs(k, c));
    for (Eigen::Index c = 0; c < ds.outputs.cols(); ++c)
      out << ',' << detail::format_double(ds.outputs(k, c));
    out << '\n';
  }
}

inline void save_dataset(const std::string& path, const TrajectoryDataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file '" + path + "'");
  write_dataset(out, ds);
}

namespace detail {

inline std::vector<ChannelScale> fit_scales(const Matrix& m, const std::vector<std::string>& names,
                                            ChannelRole role) {
  std::vector<ChannelScale> out;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    ChannelScale s;
    s.name = c < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(c)]
                                                         : std::to_string(c);
    s.role = role;
    s.min = m.col(c).minCoeff();
    s.max = m.col(c).maxCoeff();
    s.constant = s.max == s.min;
    out.push_back(std::move(s));
  }
  return out;
}

inline Matrix apply_scales(const Matrix& m, std::span<const ChannelScale> scales) {
  require_dims(static_cast<std::size_t>(m.cols()) == scales.size(),
               "series has " + std::to_string(m.cols()) + " columns, normalization has " +
                   std::to_string(scales.size()) + " channels");
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const auto& s = scales[static_cast<std::size_t>(c)];
    if (s.constant)
      out.col(c).setZero();
    else
      out.col(c) = (m.col(c).array() - s.min) / (s.max - s.min);
  }
  return out;
}

}  // namespace detail

/// Applies previously fitted scaling (e.g. from the identification split).
inline TrajectoryDataset apply_normalization(const TrajectoryDataset& ds,
                                             const NormalizationParams& params) {
  TrajectoryDataset out = ds;
  out.inputs = detail::apply_scales(ds.inputs, params.inputs);
  out.outputs = detail::apply_scales(ds.outputs, params.outputs);
  return out;
}

struct NormalizedDataset {
  TrajectoryDataset data;
  NormalizationParams params;
};

/// Min-max scales every channel to [0, 1]. Constant channels map to 0 and
/// are flagged in the returned params.
inline NormalizedDataset normalize(const TrajectoryDataset& ds) {
  NormalizationParams params;
  params.inputs = detail::fit_scales(ds.inputs, ds.input_names, ChannelRole::kInput);
  params.outputs = detail::fit_scales(ds.outputs, ds.output_names, ChannelRole::kOutput);
  return {apply_normalization(ds, params), std::move(params)};
}

/// Inverse of the min-max map. Constant channels come back as their value.
inline Matrix denormalize(const Matrix& series, std::span<const ChannelScale> scales) {
  detail::require_dims(static_cast<std::size_t>(series.cols()) == scales.size(),
                       "series has " + std::to_string(series.cols()) +
                           " columns, normalization has " + std::to_string(scales.size()) +
                           " channels");
  Matrix out(series.rows(), series.cols());
  for (Eigen::Index c = 0; c < series.cols(); ++c) {
    const auto& s = scales[static_cast<std::size_t>(c)];
    out.col(c) = series.col(c).array() * (s.max - s.min) + s.min;
  }
  return out;
}

/// Block Hankel matrix: block row s (0-based) holds samples s .. s+N-1, one
/// sample per column, each sample occupying vars_per_block rows.
struct HankelBlock {
  Matrix data;
  Eigen::Index block_rows = 0;
  Eigen::Index columns = 0;
  Eigen::Index vars_per_block = 0;

  /// Sample vector at block row s, column j (both 0-based).
  [[nodiscard]] auto block(Eigen::Index s, Eigen::Index j) const {
    return data.block(s * vars_per_block, j, vars_per_block, 1);
  }
};

inline HankelBlock build_hankel(const Matrix& series, Eigen::Index block_rows, Eigen::Index columns) {
  if (block_rows < 1 || columns < 1)
    throw DataError("block rows and columns must be positive");
  if (series.rows() < block_rows + columns - 1)
    throw DataError("insufficient samples for block size: need " +
                    std::to_string(block_rows + columns - 1) + ", have " +
                    std::to_string(series.rows()));
  const Eigen::Index m = series.cols();
  HankelBlock h;
  h.block_rows = block_rows;
  h.columns = columns;
  h.vars_per_block = m;
  h.data.resize(block_rows * m, columns);
  for (Eigen::Index s = 0; s < block_rows; ++s)
    h.data.middleRows(s * m, m) = series.middleRows(s, columns).transpose();
  return h;
}

/// Splits at a sample index: rows [0, at) and [at, N).
inline std::pair<TrajectoryDataset, TrajectoryDataset> split_dataset(const TrajectoryDataset& ds,
                                                                     Eigen::Index at) {
  if (at < 2 || ds.samples() - at < 2)
    throw DataError("split leaves fewer than 2 samples on one side");
  TrajectoryDataset a = ds;
  TrajectoryDataset b = ds;
  a.inputs = ds.inputs.topRows(at);
  a.outputs = ds.outputs.topRows(at);
  b.inputs = ds.inputs.bottomRows(ds.samples() - at);
  b.outputs = ds.outputs.bottomRows(ds.samples() - at);
  return {std::move(a), std::move(b)};
}

}  // namespace telesys
