#pragma once

// Experiment wiring shared by the command-line tool and the integration tests.
// Every command takes an ExperimentConfig, writes its artifacts under
// config.out_dir and returns the in-memory results.

#include <telesys/dataio.hpp>
#include <telesys/estimator.hpp>
#include <telesys/metrics.hpp>
#include <telesys/netsim.hpp>
#include <telesys/rng.hpp>
#include <telesys/sysid.hpp>
#include <telesys/types.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace telesys {

struct ExperimentConfig {
  std::string dataset;
  std::string validation_dataset;
  std::string model_path;  // reuse a saved model instead of identifying
  std::string trial;       // free-form label of the recorded trial
  // Fraction of the dataset used for identification when no validation file
  // is given; 1 means identify and evaluate on the same record.
  double split = 1.0;
  double dt = 1.0 / 30.0;
  std::vector<std::string> input_channels;
  std::vector<std::string> output_channels;
  // "csv" (role-prefixed header) or "jigsaws" (raw 76-column kinematics).
  std::string format = "csv";
  JigsawsArm jigsaws_arm = JigsawsArm::kRight;
  bool jigsaws_full = false;

  Eigen::Index block_rows = 20;
  OrderCriterion order = order_criterion::Energy{};

  double eps_q = 1e-4;
  double eps_r = 1e-4;
  int bootstrap_iterations = 1;
  UpdateMode update_mode = UpdateMode::kSequential;
  ResidualInput residual_input = ResidualInput::kPrevious;

  std::optional<Eigen::Index> burn_in;  // default 10 * order
  AccuracyMetric metric = AccuracyMetric::kNrmseRange;
  int whiteness_lag = 10;

  // Empty means the published six-scenario suite.
  std::optional<std::vector<nlohmann::json>> scenarios;
  bool sample_delay_range = false;

  std::uint64_t seed = 42;
  std::string out_dir = "telesys_out";
  int jobs = 1;
};

namespace detail {

inline nlohmann::json order_to_json(const OrderCriterion& c) {
  struct V {
    nlohmann::json operator()(const order_criterion::Energy& e) const {
      return {{"criterion", "energy"}, {"value", e.fraction}};
    }
    nlohmann::json operator()(const order_criterion::Fixed& f) const {
      return {{"criterion", "fixed"}, {"value", f.order}};
    }
    nlohmann::json operator()(const order_criterion::ThresholdRatio& t) const {
      return {{"criterion", "threshold"}, {"value", t.ratio}};
    }
    nlohmann::json operator()(const order_criterion::Knee&) const { return {{"criterion", "knee"}}; }
  };
  return std::visit(V{}, c);
}

inline OrderCriterion order_from_json(const nlohmann::json& j) {
  const auto kind = j.value("criterion", std::string("energy"));
  if (kind == "energy") return order_criterion::Energy{j.value("value", 0.85)};
  if (kind == "fixed") return order_criterion::Fixed{j.at("value").get<Eigen::Index>()};
  if (kind == "threshold") return order_criterion::ThresholdRatio{j.value("value", 1e-3)};
  if (kind == "knee") return order_criterion::Knee{};
  throw ConfigError("unknown order criterion '" + kind + "'");
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"dataset", c.dataset},
                     {"validation_dataset", c.validation_dataset},
                     {"model", c.model_path},
                     {"trial", c.trial},
                     {"split", c.split},
                     {"dt", c.dt},
                     {"inputs", c.input_channels},
                     {"outputs", c.output_channels},
                     {"format", c.format},
                     {"jigsaws_arm", c.jigsaws_arm == JigsawsArm::kLeft ? "left" : "right"},
                     {"jigsaws_full", c.jigsaws_full},
                     {"block_rows", c.block_rows},
                     {"order", detail::order_to_json(c.order)},
                     {"eps_q", c.eps_q},
                     {"eps_r", c.eps_r},
                     {"bootstrap_iterations", c.bootstrap_iterations},
                     {"update_mode", c.update_mode == UpdateMode::kBatch ? "batch" : "sequential"},
                     {"residual_input", c.residual_input == ResidualInput::kCurrent ? "current" : "previous"},
                     {"metric", to_string(c.metric)},
                     {"whiteness_lag", c.whiteness_lag},
                     {"sample_delay_range", c.sample_delay_range},
                     {"seed", c.seed},
                     {"out", c.out_dir},
                     {"jobs", c.jobs}};
  j["burn_in"] = c.burn_in ? nlohmann::json(*c.burn_in) : nlohmann::json(nullptr);
  j["scenarios"] = c.scenarios ? nlohmann::json(*c.scenarios) : nlohmann::json("suite");
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  static const std::vector<std::string> known{
      "dataset", "validation_dataset", "model", "trial", "split", "dt", "inputs", "outputs",
      "format", "jigsaws_arm", "jigsaws_full",
      "block_rows", "order", "eps_q", "eps_r", "bootstrap_iterations", "update_mode",
      "residual_input", "metric", "whiteness_lag", "sample_delay_range", "seed", "out", "jobs",
      "burn_in", "scenarios"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config key '" + key + "'");
  c = {};
  c.dataset = j.value("dataset", c.dataset);
  c.validation_dataset = j.value("validation_dataset", c.validation_dataset);
  c.model_path = j.value("model", c.model_path);
  c.trial = j.value("trial", c.trial);
  c.split = j.value("split", c.split);
  c.dt = j.value("dt", c.dt);
  c.input_channels = j.value("inputs", c.input_channels);
  c.output_channels = j.value("outputs", c.output_channels);
  c.format = j.value("format", c.format);
  if (c.format != "csv" && c.format != "jigsaws") throw ConfigError("format must be csv or jigsaws");
  const auto arm = j.value("jigsaws_arm", std::string("right"));
  if (arm != "right" && arm != "left") throw ConfigError("jigsaws_arm must be right or left");
  c.jigsaws_arm = arm == "left" ? JigsawsArm::kLeft : JigsawsArm::kRight;
  c.jigsaws_full = j.value("jigsaws_full", c.jigsaws_full);
  c.block_rows = j.value("block_rows", c.block_rows);
  if (j.contains("order")) c.order = detail::order_from_json(j.at("order"));
  c.eps_q = j.value("eps_q", c.eps_q);
  c.eps_r = j.value("eps_r", c.eps_r);
  c.bootstrap_iterations = j.value("bootstrap_iterations", c.bootstrap_iterations);
  const auto mode = j.value("update_mode", std::string("sequential"));
  if (mode != "sequential" && mode != "batch") throw ConfigError("update_mode must be sequential or batch");
  c.update_mode = mode == "batch" ? UpdateMode::kBatch : UpdateMode::kSequential;
  const auto ri = j.value("residual_input", std::string("previous"));
  if (ri != "previous" && ri != "current") throw ConfigError("residual_input must be previous or current");
  c.residual_input = ri == "current" ? ResidualInput::kCurrent : ResidualInput::kPrevious;
  c.metric = accuracy_metric_from_string(j.value("metric", std::string("nrmse_range")));
  c.whiteness_lag = j.value("whiteness_lag", c.whiteness_lag);
  c.sample_delay_range = j.value("sample_delay_range", c.sample_delay_range);
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out", c.out_dir);
  c.jobs = j.value("jobs", c.jobs);
  if (j.contains("burn_in") && !j.at("burn_in").is_null()) c.burn_in = j.at("burn_in").get<Eigen::Index>();
  if (j.contains("scenarios")) {
    const auto& s = j.at("scenarios");
    if (s.is_string()) {
      if (s.get<std::string>() != "suite") throw ConfigError("scenarios must be \"suite\" or a list");
    } else if (s.is_array()) {
      c.scenarios = s.get<std::vector<nlohmann::json>>();
    } else {
      throw ConfigError("scenarios must be \"suite\" or a list");
    }
  }
  if (!(c.split > 0.0 && c.split <= 1.0)) throw ConfigError("split must lie in (0, 1]");
  if (c.block_rows < 1) throw ConfigError("block_rows must be positive");
  if (c.jobs < 1) throw ConfigError("jobs must be positive");
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return nlohmann::json::parse(in).get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// FNV-1a 64 over the canonical (key-sorted, compact) JSON of the config,
/// excluding the output directory and worker count.
inline std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = c;
  j.erase("out");
  j.erase("jobs");
  const auto text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct OutputStamp {
  std::string config_hash;
  std::string metric_def;

  [[nodiscard]] std::string csv_comment() const {
    return "# telesys " + std::string(kVersion) + " config_hash=" + config_hash + " metric_def=" + metric_def +
           "\n";
  }
  void apply(nlohmann::json& j) const {
    j["config_hash"] = config_hash;
    j["metric_def"] = metric_def;
    j["version"] = kVersion;
  }
};

inline OutputStamp stamp_for(const ExperimentConfig& c) { return {config_hash(c), to_string(c.metric)}; }

namespace detail {

inline std::filesystem::path ensure_out_dir(const ExperimentConfig& c) {
  std::filesystem::path dir(c.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + c.out_dir + "': " + ec.message());
  return dir;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + p.string() + "'");
  out << text;
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  write_text(p, j.dump(2) + "\n");
}

}  // namespace detail

struct PreparedData {
  TrajectoryDataset identification;  // normalized
  TrajectoryDataset evaluation;      // normalized with identification params
  NormalizationParams params;
};

inline TrajectoryDataset load_config_dataset(const ExperimentConfig& c, const std::string& path) {
  if (path.empty()) throw ConfigError("no dataset given");
  if (c.format == "jigsaws") {
    JigsawsOptions jo;
    jo.arm = c.jigsaws_arm;
    jo.full_features = c.jigsaws_full;
    jo.dt = c.dt;
    return load_jigsaws_kinematics(path, jo);
  }
  LoadOptions opts;
  opts.dt = c.dt;
  opts.input_channels = c.input_channels;
  opts.output_channels = c.output_channels;
  return load_dataset(path, opts);
}

/// Loads, splits and normalizes. Scaling is always fitted on the
/// identification portion only.
inline PreparedData prepare_data(const ExperimentConfig& c) {
  const auto raw = load_config_dataset(c, c.dataset);
  TrajectoryDataset ident = raw;
  std::optional<TrajectoryDataset> eval;
  if (!c.validation_dataset.empty()) {
    eval = load_config_dataset(c, c.validation_dataset);
  } else if (c.split < 1.0) {
    const auto at = static_cast<Eigen::Index>(std::floor(c.split * static_cast<double>(raw.samples())));
    auto parts = split_dataset(raw, at);
    ident = std::move(parts.first);
    eval = std::move(parts.second);
  }
  auto norm = normalize(ident);
  PreparedData out;
  out.identification = std::move(norm.data);
  out.params = std::move(norm.params);
  out.evaluation = eval ? apply_normalization(*eval, out.params) : out.identification;
  return out;
}

/// Fails unless the dataset's channels match the names the model was fitted on.
inline void check_params_match(const NormalizationParams& params, const TrajectoryDataset& ds) {
  auto names = [](const std::vector<ChannelScale>& v) {
    std::vector<std::string> out;
    for (const auto& c : v) out.push_back(c.name);
    return out;
  };
  if (params.empty()) return;
  if (names(params.inputs) != ds.input_names || names(params.outputs) != ds.output_names)
    throw DataError("normalization params of the model do not match the dataset channels");
}

struct IdentifyResult {
  Identification identification;
  nlohmann::json log;
};

inline IdentifyResult cmd_identify(const ExperimentConfig& c) {
  const auto data = prepare_data(c);
  IdentifyResult res;
  res.identification = identify(data.identification, data.params, {c.block_rows, c.order});
  const auto& id = res.identification;
  const auto stamp = stamp_for(c);
  const auto dir = detail::ensure_out_dir(c);

  nlohmann::json model = id.model;
  stamp.apply(model);
  detail::write_json(dir / "model.json", model);

  std::ostringstream ss;
  ss << stamp.csv_comment();
  write_singular_values_csv(ss, id.decomposition.singular_values);
  detail::write_text(dir / "singular_values.csv", ss.str());

  res.log = {{"dataset", c.dataset},
             {"trial", c.trial},
             {"samples", data.identification.samples()},
             {"block_rows", c.block_rows},
             {"order_criterion", detail::order_to_json(c.order)},
             {"order", id.order},
             {"energy_ratio", id.energy_ratio},
             {"singular_values", id.decomposition.singular_values.size()},
             {"shift_condition", id.model.shift_condition},
             {"spectral_radius", id.model.spectral_radius()},
             {"unstable", id.model.unstable()},
             {"warnings", id.decomposition.warnings}};
  stamp.apply(res.log);
  detail::write_json(dir / "identify_log.json", res.log);
  return res;
}

inline StateSpaceModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model '" + path + "'");
  try {
    return nlohmann::json::parse(in).get<StateSpaceModel>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

/// Saved model when configured, otherwise identified from the dataset
/// (without writing identification artifacts).
inline StateSpaceModel obtain_model(const ExperimentConfig& c, const PreparedData& data) {
  if (!c.model_path.empty()) return load_model(c.model_path);
  return identify(data.identification, data.params, {c.block_rows, c.order}).model;
}

/// Evaluation data for a loaded model: raw data normalized with the model's
/// own params, after checking the channel layout.
inline TrajectoryDataset evaluation_for_model(const ExperimentConfig& c, const StateSpaceModel& model,
                                              const PreparedData& data) {
  if (c.model_path.empty() || model.norm_params.empty()) return data.evaluation;
  const auto& path = !c.validation_dataset.empty() ? c.validation_dataset : c.dataset;
  auto raw = load_config_dataset(c, path);
  if (c.validation_dataset.empty() && c.split < 1.0) {
    const auto at = static_cast<Eigen::Index>(std::floor(c.split * static_cast<double>(raw.samples())));
    raw = split_dataset(raw, at).second;
  }
  check_params_match(model.norm_params, raw);
  return apply_normalization(raw, model.norm_params);
}

inline FitReport cmd_validate(const ExperimentConfig& c) {
  const auto data = prepare_data(c);
  const auto model = obtain_model(c, data);
  const auto eval = evaluation_for_model(c, model, data);
  if (eval.input_channels() != model.inputs() || eval.output_channels() != model.outputs())
    throw DataError("dataset has " + std::to_string(eval.input_channels()) + "x" +
                    std::to_string(eval.output_channels()) + " channels, model expects " +
                    std::to_string(model.inputs()) + "x" + std::to_string(model.outputs()));
  auto rep = fit_report(model, eval, c.metric);

  const auto stamp = stamp_for(c);
  const auto dir = detail::ensure_out_dir(c);
  nlohmann::json j{{"channels", rep.channels}, {"scores", rep.scores}, {"samples", eval.samples()},
                   {"order", model.order()}, {"trial", c.trial},
                   {"initial_state", std::vector<double>(rep.initial_state.begin(), rep.initial_state.end())}};
  stamp.apply(j);
  detail::write_json(dir / "fit_report.json", j);

  std::ostringstream ss;
  ss << stamp.csv_comment() << 'k';
  for (const auto& n : eval.output_names) ss << ",y_true:" << n;
  for (const auto& n : eval.output_names) ss << ",y_pred:" << n;
  ss << '\n';
  for (Eigen::Index k = 0; k < eval.samples(); ++k) {
    ss << (k + 1);
    for (Eigen::Index o = 0; o < eval.output_channels(); ++o) ss << ',' << detail::format_double(eval.outputs(k, o));
    for (Eigen::Index o = 0; o < eval.output_channels(); ++o)
      ss << ',' << detail::format_double(rep.predicted(k, o));
    ss << '\n';
  }
  detail::write_text(dir / "validation.csv", ss.str());
  return rep;
}

/// Scenario list with per-scenario seeds. Explicit seeds in the config win;
/// otherwise seed_i = derive(master_seed, i).
inline std::vector<NetworkScenario> resolve_scenarios(const ExperimentConfig& c) {
  std::vector<NetworkScenario> out;
  if (!c.scenarios) {
    out = scenario_suite();
    for (std::size_t i = 0; i < out.size(); ++i) out[i].seed = rng::derive(c.seed, i);
  } else {
    for (std::size_t i = 0; i < c.scenarios->size(); ++i) {
      const auto& j = (*c.scenarios)[i];
      auto s = j.get<NetworkScenario>();
      if (!j.contains("seed")) s.seed = rng::derive(c.seed, i);
      out.push_back(std::move(s));
    }
  }
  for (auto& s : out)
    if (c.sample_delay_range && s.delay_range) s.sample_delay_range = true;
  return out;
}

struct ScenarioOutcome {
  NetworkScenario scenario;
  std::optional<EstimationReport> report;
  std::optional<NoiseModel> noise;
  std::string error;
};

struct SweepResult {
  std::vector<ScenarioOutcome> outcomes;
  std::vector<std::string> channels;
  std::string summary_csv;
};

inline Eigen::Index default_burn_in(const ExperimentConfig& c, Eigen::Index order, Eigen::Index samples) {
  const Eigen::Index b = c.burn_in.value_or(10 * order);
  return std::min(b, samples / 2);
}

/// Impair, bootstrap Q/R, filter and score one scenario.
inline ScenarioOutcome run_scenario(const ExperimentConfig& c, const StateSpaceModel& model,
                                    const TrajectoryDataset& eval, const NetworkScenario& scenario) {
  ScenarioOutcome out;
  out.scenario = scenario;
  try {
    const auto impaired = impair(eval.outputs, scenario, eval.dt);
    BootstrapOptions bo;
    bo.eps_q = c.eps_q;
    bo.eps_r = c.eps_r;
    bo.iterations = c.bootstrap_iterations;
    bo.residual_input = c.residual_input;
    bo.filter.mode = c.update_mode;
    const auto noise = estimate_noise_empirical(model, eval.inputs, impaired.observed, bo);
    auto run = run_filter(model, noise, eval.inputs, impaired, bo.filter);
    run.scenario = scenario;
    ReportOptions ro;
    ro.metric = c.metric;
    ro.burn_in = default_burn_in(c, model.order(), eval.samples());
    ro.whiteness_lag = c.whiteness_lag;
    auto rep = make_report(run.estimates, eval.outputs, run.innovations, ro, eval.output_names);
    rep.scenario = scenario;
    out.report = std::move(rep);
    out.noise = noise;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

inline std::string sweep_summary_csv(const SweepResult& r, const OutputStamp& stamp) {
  std::ostringstream ss;
  ss << stamp.csv_comment() << "nj,nd,np";
  for (const auto& n : r.channels) ss << ",acc_" << n;
  for (const auto& n : r.channels) ss << ",rmse_" << n;
  ss << ",status\n";
  for (const auto& o : r.outcomes) {
    ss << detail::format_double(o.scenario.jitter_ms) << ',' << detail::format_double(o.scenario.delay_ms) << ','
       << detail::format_double(o.scenario.loss_prob);
    if (o.report) {
      for (const auto& s : o.report->scores) ss << ',' << detail::format_double(s.accuracy_pct);
      for (const auto& s : o.report->scores) ss << ',' << detail::format_double(s.rmse);
      ss << ",ok\n";
    } else {
      for (std::size_t i = 0; i < 2 * r.channels.size(); ++i) ss << ",nan";
      std::string msg = o.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      ss << ",error: " << msg << '\n';
    }
  }
  return ss.str();
}

inline SweepResult cmd_sweep(const ExperimentConfig& c) {
  const auto data = prepare_data(c);
  const auto model = obtain_model(c, data);
  const auto eval = evaluation_for_model(c, model, data);
  if (eval.input_channels() != model.inputs() || eval.output_channels() != model.outputs())
    throw DataError("dataset channel layout does not match the model");
  const auto scenarios = resolve_scenarios(c);

  SweepResult res;
  res.channels = eval.output_names;
  res.outcomes.resize(scenarios.size());
  if (c.jobs > 1 && scenarios.size() > 1) {
    std::vector<std::future<ScenarioOutcome>> futures;
    for (const auto& s : scenarios)
      futures.push_back(std::async(std::launch::async, [&c, &model, &eval, s] { return run_scenario(c, model, eval, s); }));
    for (std::size_t i = 0; i < futures.size(); ++i) res.outcomes[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < scenarios.size(); ++i) res.outcomes[i] = run_scenario(c, model, eval, scenarios[i]);
  }

  const auto stamp = stamp_for(c);
  const auto dir = detail::ensure_out_dir(c);
  for (std::size_t i = 0; i < res.outcomes.size(); ++i) {
    const auto& o = res.outcomes[i];
    nlohmann::json j{{"index", i + 1}, {"scenario", o.scenario}, {"trial", c.trial}};
    if (o.report) j["report"] = *o.report;
    if (o.noise) j["noise"] = *o.noise;
    if (!o.error.empty()) j["error"] = o.error;
    stamp.apply(j);
    detail::write_json(dir / ("scenario_" + std::to_string(i + 1) + ".json"), j);
  }
  res.summary_csv = sweep_summary_csv(res, stamp);
  detail::write_text(dir / "sweep_summary.csv", res.summary_csv);
  return res;
}

/// Channel-only dry run on the raw dataset outputs.
inline ImpairedStream cmd_impair(const ExperimentConfig& c, const NetworkScenario& scenario) {
  const auto raw = load_config_dataset(c, c.dataset);
  auto s = impair(raw.outputs, scenario, raw.dt);
  const auto stamp = stamp_for(c);
  const auto dir = detail::ensure_out_dir(c);
  std::ostringstream ss;
  ss << stamp.csv_comment();
  write_impaired_csv(ss, s, raw.output_names);
  detail::write_text(dir / "impaired.csv", ss.str());
  return s;
}

}  // namespace telesys
