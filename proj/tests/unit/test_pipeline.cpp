#include <algorithm>
#include <cstdlib>
#include <limits>
#include <filesystem>
#include <random>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "tvpgvar/pipeline.hpp"

using namespace tvpgvar;
using namespace tvpgvar::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("tvpgvar_pipeline_" + name + "_" + std::to_string(std::random_device{}()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json small_config(const fs::path& out) {
  auto j = json::parse(io::read_file(std::string(TVPGVAR_DATA_DIR) + "/sample_config.json"));
  j["data"]["path"] = std::string(TVPGVAR_DATA_DIR) + "/sample_panel.csv";
  j["tvp"]["iters"] = 20;
  j["irf"]["shocks"] = json::array({{{"name", "cpi"}, {"targets", {"USA:CPI"}}},
                                    {{"name", "hur"}, {"targets", {"USA:HUR"}}},
                                    {{"name", "both"}, {"targets", {"USA:CPI", "USA:HUR"}}}});
  j["output_dir"] = out.string();
  return j;
}

RunConfig config_for(const fs::path& out) { return parse_config(small_config(out).dump(), out); }

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(fresh_dir("main"));
    const auto c = config_for(*dir_);
    cmd_ingest(c);
    cmd_estimate(c);
    irf_ = new std::vector<IRFOutput>(cmd_irf(c));
    forecast_ = new ForecastRun(cmd_forecast(c));
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
    delete irf_;
    delete forecast_;
  }
  static fs::path* dir_;
  static std::vector<IRFOutput>* irf_;
  static ForecastRun* forecast_;
};

fs::path* Pipeline::dir_ = nullptr;
std::vector<IRFOutput>* Pipeline::irf_ = nullptr;
ForecastRun* Pipeline::forecast_ = nullptr;

}  // namespace

TEST_F(Pipeline, IngestWidthAndReproducibility) {
  const auto panel = parse_panel_csv(io::read_file((*dir_ / "panel.csv").string()), "panel.csv");
  EXPECT_EQ(panel.dims().width(), 10);
  EXPECT_EQ(panel.periods(), 250);

  const auto other = fresh_dir("rerun");
  cmd_ingest(config_for(other));
  EXPECT_EQ(io::read_file((other / "panel.csv").string()), io::read_file((*dir_ / "panel.csv").string()));
  EXPECT_EQ(io::read_file((other / "weights.csv").string()), io::read_file((*dir_ / "weights.csv").string()));

  // Same seed, same trajectories.
  cmd_estimate(config_for(other));
  EXPECT_EQ(io::read_file((other / "trajectories.csv").string()),
            io::read_file((*dir_ / "trajectories.csv").string()));
  fs::remove_all(other);
}

TEST_F(Pipeline, TrajectoryShape) {
  const auto pp = parse_parameter_csv(io::read_file((*dir_ / "trajectories.csv").string()), "trajectories.csv");
  ASSERT_EQ(pp.columns.size(), 10u);
  EXPECT_EQ(pp.dates.size(), 250u);
  for (const auto& p : pp.paths) {
    EXPECT_EQ(p.rows(), 250);
    EXPECT_EQ(p.cols(), 2);
    EXPECT_TRUE(p.allFinite());
  }
  const auto text = io::read_file((*dir_ / "trajectories.csv").string());
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 10 * 250);
}

TEST_F(Pipeline, TimeInvariantPathsAreConstant) {
  const auto other = fresh_dir("ti");
  auto c = config_for(other);
  c.time_invariant = true;
  cmd_ingest(c);
  const auto res = cmd_estimate(c);
  ASSERT_EQ(res.paths.paths.size(), 10u);
  for (const auto& p : res.paths.paths)
    for (Index t = 1; t < p.rows(); ++t) EXPECT_EQ(p.row(t), p.row(0));
  const auto coef = json::parse(io::read_file((other / "coefficients.json").string()));
  EXPECT_TRUE(coef.at("time_invariant").get<bool>());
  fs::remove_all(other);
}

TEST_F(Pipeline, IrfFilesPerDateAndShock) {
  ASSERT_EQ(irf_->size(), 9u);
  std::size_t json_files = 0;
  for (const auto& e : fs::directory_iterator(*dir_ / "irf"))
    if (e.path().extension() == ".json") ++json_files;
  EXPECT_EQ(json_files, 9u);
  EXPECT_TRUE(fs::exists(*dir_ / "irf" / "irf_2007-12_cpi.json"));
  EXPECT_FALSE(fs::exists(*dir_ / "irf" / "skipped.csv"));

  const auto j = json::parse(io::read_file((*dir_ / "irf" / "irf_2011-04_both.json").string()));
  EXPECT_NEAR(j.at("z").get<double>(), 1.959964, 1e-6);
  EXPECT_EQ(j.at("at_time").get<std::string>(), "2011-04");
  EXPECT_EQ(j.at("horizons").size(), 13u);
  EXPECT_EQ(j.at("columns").size(), 10u);
}

TEST_F(Pipeline, MultiTargetJsonIsSumOfSingles) {
  for (const std::string date : {"2007-12", "2011-04", "2020-07"}) {
    auto load = [&](const std::string& shock) {
      return json::parse(io::read_file((*dir_ / "irf" / ("irf_" + date + "_" + shock + ".json")).string()))
          .at("responses");
    };
    const auto a = load("cpi");
    const auto b = load("hur");
    const auto ab = load("both");
    for (std::size_t col = 0; col < ab.size(); ++col)
      for (std::size_t h = 0; h < ab[col].size(); ++h)
        EXPECT_EQ(ab[col][h].get<double>(), a[col][h].get<double>() + b[col][h].get<double>())
            << date << " col " << col << " h " << h;
  }
}

TEST_F(Pipeline, ForecastArtifacts) {
  const auto report = io::parse_csv(io::read_file((*dir_ / "forecast" / "mse_report.csv").string()), "mse");
  const auto c_method = report.column("method", "mse");
  const auto c_series = report.column("series", "mse");
  const auto c_mse = report.column("mse", "mse");
  std::string best;
  double best_mse = std::numeric_limits<double>::infinity();
  int all_rows = 0;
  for (const auto& row : report.rows) {
    if (row.fields[c_series] != "ALL") continue;
    ++all_rows;
    const double v = std::stod(row.fields[c_mse]);
    if (v < best_mse) {
      best_mse = v;
      best = row.fields[c_method];
    }
  }
  EXPECT_EQ(all_rows, 3);
  EXPECT_EQ(forecast_->selected, best);
  EXPECT_EQ(io::read_file((*dir_ / "forecast" / "selected_model.txt").string()), best + "\n");

  ASSERT_EQ(forecast_->future_dates.size(), 6u);
  EXPECT_EQ(forecast_->future_dates.back(), (YearMonth{2020, 10}));
  for (const std::string m : {"constant", "var1", "lasso"}) {
    const auto paths = parse_panel_csv(io::read_file((*dir_ / "forecast" / (m + "_paths.csv")).string()), m);
    EXPECT_EQ(paths.time_index, forecast_->future_dates);
    EXPECT_EQ(paths.dims().width(), 10);
  }
}

TEST_F(Pipeline, DateOutsideSample) {
  auto c = config_for(*dir_);
  c.irf.dates = {"1990-01"};
  try {
    cmd_irf(c);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("outside sample"), std::string::npos);
  }
}

TEST_F(Pipeline, ReportMentionsSelection) {
  const auto text = cmd_report(config_for(*dir_));
  EXPECT_NE(text.find(forecast_->selected), std::string::npos);
}

TEST(Cli, MissingDataFileExitsOne) {
  const auto dir = fresh_dir("cli");
  auto j = small_config(dir);
  j["data"]["path"] = "no_such_panel.csv";
  io::write_file((dir / "config.json").string(), j.dump());
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string(TVPGVAR_CLI) + " --config " + (dir / "config.json").string() + " ingest 2> " +
                          err.string();
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 1);
  EXPECT_NE(io::read_file(err.string()).find((dir / "no_such_panel.csv").string()), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, HelpExitsZero) {
  const std::string cmd = std::string(TVPGVAR_CLI) + " --help > /dev/null";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
}
