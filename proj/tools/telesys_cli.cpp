// telesys: identify, validate and sweep network scenarios from the shell.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.

#include <telesys/telesys.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using telesys::ExperimentConfig;

struct Overrides {
  std::string config;
  std::optional<std::string> dataset;
  std::optional<std::string> validation;
  std::optional<std::string> model;
  std::optional<std::string> trial;
  std::optional<double> split;
  std::optional<double> dt;
  std::optional<std::string> format;
  std::optional<std::string> jigsaws_arm;
  bool jigsaws_full = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> metric;
  std::optional<Eigen::Index> block_rows;
  std::optional<std::string> order_criterion;
  std::optional<double> order_value;
  std::optional<double> eps_q;
  std::optional<double> eps_r;
  std::optional<int> iterations;
  std::optional<Eigen::Index> burn_in;
  std::optional<std::string> scenarios_file;
  std::optional<int> jobs;
  bool batch = false;
  bool sample_delay_range = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "Experiment config (JSON)");
  cmd->add_option("--dataset", o.dataset, "Trajectory CSV");
  cmd->add_option("--validation", o.validation, "Held-out trajectory CSV");
  cmd->add_option("--model", o.model, "Saved model JSON (skips identification)");
  cmd->add_option("--trial", o.trial, "Label recorded with the outputs");
  cmd->add_option("--split", o.split, "Identification fraction when no validation file is given");
  cmd->add_option("--dt", o.dt, "Sample period in seconds when the file has no time column");
  cmd->add_option("--format", o.format, "Dataset format: csv | jigsaws")->check(CLI::IsMember({"csv", "jigsaws"}));
  cmd->add_option("--jigsaws-arm", o.jigsaws_arm, "JIGSAWS arm pair: right (MTM-R/PSM1) | left (MTM-L/PSM2)")
      ->check(CLI::IsMember({"right", "left"}));
  cmd->add_flag("--jigsaws-full", o.jigsaws_full, "Ingest all 76 JIGSAWS kinematic columns");
  cmd->add_option("--block-rows", o.block_rows, "Hankel block rows d");
  cmd->add_option("--order-criterion", o.order_criterion, "energy | fixed | threshold | knee");
  cmd->add_option("--order-value", o.order_value, "Parameter of the order criterion");
  cmd->add_option("--eps-q", o.eps_q, "Initial process noise scale");
  cmd->add_option("--eps-r", o.eps_r, "Initial measurement noise scale");
  cmd->add_option("--iterations", o.iterations, "Q/R bootstrap iterations");
  cmd->add_option("--burn-in", o.burn_in, "Samples excluded from scoring");
  cmd->add_option("--scenarios", o.scenarios_file, "JSON list of scenarios (default: published suite)");
  cmd->add_option("--jobs", o.jobs, "Worker threads for the sweep");
  cmd->add_flag("--batch-update", o.batch, "Joint vector update with the full R");
  cmd->add_flag("--sample-delay-range", o.sample_delay_range, "Draw ranged delays per sample");
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c;
  if (!o.config.empty()) c = telesys::load_config(o.config);
  if (o.dataset) c.dataset = *o.dataset;
  if (o.validation) c.validation_dataset = *o.validation;
  if (o.model) c.model_path = *o.model;
  if (o.trial) c.trial = *o.trial;
  if (o.split) c.split = *o.split;
  if (o.dt) c.dt = *o.dt;
  if (o.format) c.format = *o.format;
  if (o.jigsaws_arm) c.jigsaws_arm = *o.jigsaws_arm == "left" ? telesys::JigsawsArm::kLeft : telesys::JigsawsArm::kRight;
  if (o.jigsaws_full) c.jigsaws_full = true;
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out_dir = *o.out;
  if (o.metric) c.metric = telesys::accuracy_metric_from_string(*o.metric);
  if (o.block_rows) c.block_rows = *o.block_rows;
  if (o.order_criterion || o.order_value) {
    nlohmann::json j{{"criterion", o.order_criterion.value_or("energy")}};
    if (o.order_value) j["value"] = *o.order_value;
    if (j["criterion"] == "fixed" && o.order_value) j["value"] = static_cast<Eigen::Index>(*o.order_value);
    c.order = telesys::detail::order_from_json(j);
  }
  if (o.eps_q) c.eps_q = *o.eps_q;
  if (o.eps_r) c.eps_r = *o.eps_r;
  if (o.iterations) c.bootstrap_iterations = *o.iterations;
  if (o.burn_in) c.burn_in = *o.burn_in;
  if (o.jobs) c.jobs = *o.jobs;
  if (o.batch) c.update_mode = telesys::UpdateMode::kBatch;
  if (o.sample_delay_range) c.sample_delay_range = true;
  if (o.scenarios_file) {
    std::ifstream in(*o.scenarios_file);
    if (!in) throw telesys::ConfigError("cannot open scenarios file '" + *o.scenarios_file + "'");
    c.scenarios = nlohmann::json::parse(in).get<std::vector<nlohmann::json>>();
  }
  // Round-trip through JSON so command-line values get the same validation.
  return nlohmann::json(c).get<ExperimentConfig>();
}

void print_scores(const std::vector<std::string>& channels, const std::vector<telesys::ChannelScore>& scores) {
  for (std::size_t i = 0; i < scores.size(); ++i)
    std::printf("  %-10s rmse %.4f  accuracy %.2f%%\n", i < channels.size() ? channels[i].c_str() : "?",
                scores[i].rmse, scores[i].accuracy_pct);
}

int run(int argc, char** argv) {
  CLI::App app{"telesys: subspace identification and networked Kalman estimation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", telesys::kVersion);

  Overrides o;
  app.add_option("--seed", o.seed, "Master RNG seed");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--metric", o.metric, "Accuracy metric: nrmse_range | one_minus_rmse | nmae");

  auto* identify = app.add_subcommand("identify", "Identify a state-space model (MOESP)");
  auto* validate = app.add_subcommand("validate", "Open-loop fit of a model on held-out data");
  auto* sweep = app.add_subcommand("sweep", "Run the Kalman filter over a set of network scenarios");
  auto* impair_cmd = app.add_subcommand("impair", "Channel-only dry run on a dataset's outputs");
  auto* calibrate = app.add_subcommand("calibrate-accuracy", "Score accuracy formulas against published pairs");
  auto* synth = app.add_subcommand("synth", "Write a synthetic teleoperation dataset");
  for (auto* cmd : {identify, validate, sweep, impair_cmd}) add_common(cmd, o);
  for (auto* cmd : {identify, validate, sweep, impair_cmd, calibrate, synth}) cmd->fallthrough();

  telesys::NetworkScenario channel;
  std::optional<double> np_percent;
  std::string scenario_file;
  impair_cmd->add_option("--nd", channel.delay_ms, "Delay in ms");
  impair_cmd->add_option("--nj", channel.jitter_ms, "Jitter standard deviation in ms");
  impair_cmd->add_option("--np", channel.loss_prob, "Loss probability as a fraction");
  impair_cmd->add_option("--np-percent", np_percent, "Loss probability in percent");
  impair_cmd->add_option("--scenario", scenario_file, "Scenario JSON document");

  std::string pair_set = "table";
  std::optional<double> known_range;
  calibrate->add_option("--pairs", pair_set, "table | summary | all")->check(CLI::IsMember({"table", "summary", "all"}));
  calibrate->add_option("--range", known_range, "Known truth range instead of fitting one");

  telesys::synthetic::SurrogateOptions so;
  std::string synth_path = "surrogate.csv";
  synth->add_option("--samples", so.samples, "Number of samples")->capture_default_str();
  synth->add_option("--dt", so.dt, "Sample period in seconds")->capture_default_str();
  synth->add_option("--disturbance", so.disturbance, "Slave disturbance std")->capture_default_str();
  synth->add_option("--sensor-noise", so.sensor_noise, "Sensor noise std")->capture_default_str();
  synth->add_option("--data-seed", so.seed, "Generator seed")->capture_default_str();
  synth->add_option("-o,--file", synth_path, "Output CSV")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*identify) {
    const auto c = resolve(o);
    const auto res = telesys::cmd_identify(c);
    const auto& id = res.identification;
    std::printf("order %lld (energy %.3f), %lld singular values, spectral radius %.4f%s\n",
                static_cast<long long>(id.order), id.energy_ratio,
                static_cast<long long>(id.decomposition.singular_values.size()), id.model.spectral_radius(),
                id.model.unstable() ? " [unstable]" : "");
    for (const auto& w : id.decomposition.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::printf("wrote %s/model.json, singular_values.csv, identify_log.json\n", c.out_dir.c_str());
  } else if (*validate) {
    const auto c = resolve(o);
    const auto rep = telesys::cmd_validate(c);
    std::printf("open-loop fit (%s):\n", rep.metric_def.c_str());
    print_scores(rep.channels, rep.scores);
  } else if (*sweep) {
    const auto c = resolve(o);
    const auto res = telesys::cmd_sweep(c);
    std::fputs(res.summary_csv.c_str(), stdout);
  } else if (*impair_cmd) {
    const auto c = resolve(o);
    if (!scenario_file.empty()) {
      std::ifstream in(scenario_file);
      if (!in) throw telesys::ConfigError("cannot open scenario '" + scenario_file + "'");
      channel = nlohmann::json::parse(in).get<telesys::NetworkScenario>();
    }
    if (np_percent) channel.loss_prob = *np_percent / 100.0;
    if (scenario_file.empty()) channel.seed = c.seed;
    const auto s = telesys::cmd_impair(c, channel);
    std::printf("%lld samples, loss rate %.6f; wrote %s/impaired.csv\n", static_cast<long long>(s.samples()),
                s.loss_rate(), c.out_dir.c_str());
  } else if (*calibrate) {
    std::vector<telesys::PublishedPair> pairs;
    if (pair_set != "summary") pairs = telesys::published_table_pairs();
    if (pair_set != "table")
      for (auto& p : telesys::published_summary_pairs()) pairs.push_back(p);
    const auto scores = telesys::calibrate_accuracy(pairs, known_range);
    std::printf("%-16s %12s %12s %12s\n", "metric_def", "range", "rms_err_pct", "max_err_pct");
    for (const auto& s : scores)
      std::printf("%-16s %12.4f %12.4f %12.4f\n", s.metric_def.c_str(), s.fitted_range, s.rms_error_pct,
                  s.max_error_pct);
    std::printf("best: %s\n", scores.front().metric_def.c_str());
  } else if (*synth) {
    const auto ds = telesys::synthetic::teleoperation_surrogate(so);
    telesys::save_dataset(synth_path, ds);
    std::printf("wrote %lld samples to %s\n", static_cast<long long>(ds.samples()), synth_path.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const telesys::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const telesys::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const telesys::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
