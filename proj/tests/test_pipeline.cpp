#include <telesys/telesys.hpp>

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"

using namespace telesys;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::path(::testing::TempDir()) / ("telesys_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Surrogate sampled at 1 kHz, where millisecond delays move the source index.
std::string surrogate_csv(const fs::path& dir) {
  synthetic::SurrogateOptions so;
  so.dt = 0.001;
  const auto path = (dir / "surrogate.csv").string();
  save_dataset(path, synthetic::teleoperation_surrogate(so));
  return path;
}

std::string second_order_csv(const fs::path& dir, std::uint64_t seed = 1, Eigen::Index samples = 1500) {
  synthetic::TrueSystem sys;
  sys.A = Matrix::Zero(2, 2);
  sys.A(0, 0) = 0.8;
  sys.A(1, 1) = -0.7;
  sys.B = Matrix::Ones(2, 1);
  sys.C = Matrix::Identity(2, 2);
  sys.D = Matrix::Zero(2, 1);
  TrajectoryDataset ds;
  ds.inputs = synthetic::white_noise(seed, samples, 1);
  ds.outputs = synthetic::simulate_truth(sys, ds.inputs, 0.0, 0.0, seed).outputs;
  ds.dt = 0.01;
  ds.input_names = {"u"};
  ds.output_names = {"a", "b"};
  const auto path = (dir / ("second_order_" + std::to_string(seed) + ".csv")).string();
  save_dataset(path, ds);
  return path;
}

ExperimentConfig base_config(const fs::path& dir, const std::string& dataset) {
  ExperimentConfig c;
  c.dataset = dataset;
  c.out_dir = (dir / "out").string();
  c.order = order_criterion::Knee{};
  return c;
}

#ifdef TELESYS_CLI_PATH
int run_cli(const std::string& args) {
  const std::string cmd = std::string(TELESYS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

}  // namespace

TEST(Identify, SecondOrderSystemUnderEnergyCriterion) {
  // [0,1] scaling adds a constant offset, which shows up as one extra mode at 1.
  const auto dir = scratch("identify2");
  auto c = base_config(dir, second_order_csv(dir));
  c.order = order_criterion::Energy{};
  c.block_rows = 10;
  const auto res = cmd_identify(c);
  EXPECT_EQ(res.identification.order, 3);
  const auto model = load_model((dir / "out" / "model.json").string());
  ASSERT_EQ(model.order(), 3);
  EXPECT_LT(oracle::matched_pole_error(poles(model), {0.8, -0.7, 1.0}), 1e-6);
  EXPECT_EQ(model.norm_params.outputs.size(), 2u);
  const auto log = nlohmann::json::parse(slurp(dir / "out" / "identify_log.json"));
  EXPECT_EQ(log["order"], 3);
  EXPECT_EQ(log["config_hash"], config_hash(c));
  const auto scree = slurp(dir / "out" / "singular_values.csv");
  EXPECT_EQ(scree.rfind("# telesys ", 0), 0u);
}

TEST(Identify, SixtyRowScreeForThreeByThree) {
  const auto dir = scratch("scree");
  const auto c = base_config(dir, surrogate_csv(dir));
  cmd_identify(c);
  std::istringstream in(slurp(dir / "out" / "singular_values.csv"));
  std::string line;
  int data_rows = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#' && line != "index,value") ++data_rows;
  EXPECT_EQ(data_rows, 60);
}

TEST(Identify, BlockRowsTooLarge) {
  const auto dir = scratch("toolarge");
  auto c = base_config(dir, second_order_csv(dir, 1, 100));
  c.block_rows = 60;
  try {
    cmd_identify(c);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient samples for block size"), std::string::npos);
  }
}

TEST(Validate, SelfValidationAndHeldOut) {
  const auto dir = scratch("validate");
  auto c = base_config(dir, second_order_csv(dir, 1));
  c.block_rows = 10;
  const auto self = cmd_validate(c);
  for (const auto& s : self.scores) EXPECT_GT(s.accuracy_pct, 99.9);

  c.validation_dataset = second_order_csv(dir, 2, 700);
  const auto held = cmd_validate(c);
  for (std::size_t i = 0; i < held.scores.size(); ++i)
    EXPECT_NEAR(held.scores[i].accuracy_pct, self.scores[i].accuracy_pct, 2.0);
  std::istringstream in(slurp(dir / "out" / "validation.csv"));
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 700 + 2);
  const auto report = nlohmann::json::parse(slurp(dir / "out" / "fit_report.json"));
  EXPECT_EQ(report["metric_def"], "nrmse_range");
}

TEST(Validate, SavedModelWithMismatchedChannels) {
  const auto dir = scratch("mismatch");
  auto c = base_config(dir, second_order_csv(dir));
  c.block_rows = 10;
  cmd_identify(c);

  TrajectoryDataset other;
  other.inputs = synthetic::white_noise(5, 300, 1);
  other.outputs = synthetic::white_noise(6, 300, 2);
  other.input_names = {"u"};
  other.output_names = {"p", "q"};
  const auto other_path = (dir / "other.csv").string();
  save_dataset(other_path, other);

  auto v = c;
  v.model_path = (dir / "out" / "model.json").string();
  v.dataset = other_path;
  try {
    cmd_validate(v);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("normalization params of the model do not match"), std::string::npos);
  }
}

TEST(Validate, WrongChannelCount) {
  const auto dir = scratch("wrongcount");
  auto c = base_config(dir, second_order_csv(dir));
  c.block_rows = 10;
  cmd_identify(c);
  auto model = load_model((dir / "out" / "model.json").string());
  model.norm_params = {};
  {
    std::ofstream out(dir / "bare_model.json");
    out << nlohmann::json(model).dump();
  }
  TrajectoryDataset other;
  other.inputs = synthetic::white_noise(5, 300, 2);
  other.outputs = synthetic::white_noise(6, 300, 2);
  other.input_names = {"u", "w"};
  other.output_names = {"a", "b"};
  save_dataset((dir / "wide.csv").string(), other);
  auto v = c;
  v.model_path = (dir / "bare_model.json").string();
  v.dataset = (dir / "wide.csv").string();
  EXPECT_THROW(cmd_validate(v), DataError);
}

TEST(Sweep, SuiteOrderingOnSurrogate) {
  const auto dir = scratch("sweep");
  const auto c = base_config(dir, surrogate_csv(dir));
  const auto res = cmd_sweep(c);
  ASSERT_EQ(res.outcomes.size(), 6u);
  std::vector<double> mean;
  for (const auto& o : res.outcomes) {
    ASSERT_TRUE(o.report.has_value()) << o.error;
    mean.push_back(o.report->mean_accuracy());
  }
  EXPECT_EQ(std::max_element(mean.begin(), mean.end()) - mean.begin(), 2);
  EXPECT_EQ(std::min_element(mean.begin(), mean.end()) - mean.begin(), 5);
  for (int i = 1; i <= 6; ++i) EXPECT_TRUE(fs::exists(dir / "out" / ("scenario_" + std::to_string(i) + ".json")));
  const auto j = nlohmann::json::parse(slurp(dir / "out" / "scenario_3.json"));
  EXPECT_EQ(j["metric_def"], "nrmse_range");
  EXPECT_EQ(j["noise"]["provenance"], "empirical");
}

TEST(Sweep, DeterministicSummary) {
  const auto dir = scratch("determinism");
  auto c = base_config(dir, surrogate_csv(dir));
  c.out_dir = (dir / "a").string();
  cmd_sweep(c);
  c.out_dir = (dir / "b").string();
  c.jobs = 3;
  cmd_sweep(c);
  EXPECT_EQ(slurp(dir / "a" / "sweep_summary.csv"), slurp(dir / "b" / "sweep_summary.csv"));
  EXPECT_EQ(slurp(dir / "a" / "scenario_6.json"), slurp(dir / "b" / "scenario_6.json"));
}

TEST(Sweep, EmptyScenarioListGivesHeaderOnly) {
  const auto dir = scratch("empty");
  auto c = base_config(dir, surrogate_csv(dir));
  c.scenarios = std::vector<nlohmann::json>{};
  const auto res = cmd_sweep(c);
  EXPECT_TRUE(res.outcomes.empty());
  std::istringstream in(res.summary_csv);
  std::string comment, header, extra;
  std::getline(in, comment);
  std::getline(in, header);
  EXPECT_EQ(comment.rfind("# telesys", 0), 0u);
  EXPECT_EQ(header, "nj,nd,np,acc_x,acc_y,acc_z,rmse_x,rmse_y,rmse_z,status");
  EXPECT_FALSE(std::getline(in, extra));
}

TEST(Sweep, ScenarioSeedsDeriveFromMaster) {
  ExperimentConfig c;
  c.seed = 7;
  const auto a = resolve_scenarios(c);
  ASSERT_EQ(a.size(), 6u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].seed, rng::derive(7, i));
  c.scenarios = std::vector<nlohmann::json>{{{"nd_ms", 3}, {"seed", 5}}, {{"nd_ms", 4}}};
  const auto b = resolve_scenarios(c);
  EXPECT_EQ(b[0].seed, 5u);
  EXPECT_EQ(b[1].seed, rng::derive(7, 1));
}

TEST(Config, UnknownKeysAndHashStability) {
  EXPECT_THROW(nlohmann::json::parse(R"({"dataset": "x", "colour": 1})").get<ExperimentConfig>(), ConfigError);
  ExperimentConfig a;
  a.dataset = "d.csv";
  auto b = a;
  b.out_dir = "elsewhere";
  b.jobs = 8;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 43;
  EXPECT_NE(config_hash(a), config_hash(b));
  const nlohmann::json j = a;
  EXPECT_EQ(config_hash(j.get<ExperimentConfig>()), config_hash(a));
}

#ifdef TELESYS_CLI_PATH
TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  const auto data = surrogate_csv(dir);
  const auto out = (dir / "out").string();
  EXPECT_EQ(run_cli("identify --dataset " + data + " --order-criterion knee --out " + out), 0);
  EXPECT_EQ(run_cli("validate --dataset " + data + " --model " + out + "/model.json --out " + out), 0);
  EXPECT_EQ(run_cli("sweep --dataset " + data + " --model " + out + "/model.json --out " + out), 0);
  EXPECT_EQ(run_cli("impair --dataset " + data + " --nd 2 --np-percent 1 --out " + out), 0);
  EXPECT_EQ(run_cli("calibrate-accuracy --pairs all"), 0);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("identify --dataset " + data + " --metric bogus --out " + out), 1);
  EXPECT_EQ(run_cli("identify --dataset " + (dir / "missing.csv").string() + " --out " + out), 2);
  EXPECT_EQ(run_cli("identify --dataset " + data + " --block-rows 400 --out " + out), 2);

  const auto zeros = (dir / "zeros.csv").string();
  {
    std::ofstream z(zeros);
    z << "u:a,y:b\n";
    for (int i = 0; i < 200; ++i) z << "0,0\n";
  }
  EXPECT_EQ(run_cli("identify --dataset " + zeros + " --block-rows 5 --out " + out), 3);
}
#endif
