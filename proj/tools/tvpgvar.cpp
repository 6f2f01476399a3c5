#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tvpgvar/tvpgvar.hpp"

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> threads;
  bool time_invariant = false;
};

tvpgvar::RunConfig load(const GlobalFlags& flags) {
  auto cfg = tvpgvar::load_config(flags.config);
  if (flags.seed) cfg.tvp.seed = *flags.seed;
  if (flags.out) cfg.output_dir = std::filesystem::absolute(*flags.out).string();
  if (flags.threads) cfg.tvp.threads = *flags.threads;
  cfg.time_invariant = flags.time_invariant;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-varying-parameter GVAR toolkit"};
  app.require_subcommand(1);
  GlobalFlags flags;
  app.add_option("--config", flags.config, "Run configuration (JSON)")->required();
  app.add_option("--seed", flags.seed, "Override tvp.seed");
  app.add_option("--out", flags.out, "Override output_dir");
  app.add_option("--threads", flags.threads, "Worker threads for per-equation estimation")
      ->check(CLI::PositiveNumber);
  app.add_flag("--time-invariant", flags.time_invariant, "Average weights over time and fit constant coefficients");

  auto* ingest = app.add_subcommand("ingest", "Align and validate the raw panel; derive weights");
  auto* estimate = app.add_subcommand("estimate", "Structural GVAR fit and TVP trajectories");
  auto* irf = app.add_subcommand("irf", "Impulse responses with bands for each configured date and shock");
  auto* forecast = app.add_subcommand("forecast", "Two-stage holdout forecasts and MSE report");
  auto* report = app.add_subcommand("report", "Summarize the artifacts in the output directory");
  for (auto* sub : {ingest, estimate, irf, forecast, report}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = load(flags);
    namespace pl = tvpgvar::pipeline;
    if (*ingest) {
      const auto res = pl::cmd_ingest(cfg);
      std::cout << "panel: " << res.panel.periods() << " x " << res.panel.dims().width() << " -> "
                << pl::artifact(cfg, "panel.csv").string() << "\n";
    } else if (*estimate) {
      const auto res = pl::cmd_estimate(cfg);
      std::cout << "estimated " << res.paths.columns.size() << " equations -> " << cfg.out_dir().string() << "\n";
    } else if (*irf) {
      const auto res = pl::cmd_irf(cfg);
      for (const auto& o : res) {
        std::cout << o.json_path.string() << (o.result.stable ? "" : " (unstable)") << "\n";
      }
    } else if (*forecast) {
      const auto run = pl::cmd_forecast(cfg, &std::cout);
      for (const auto& [method, m] : run.pooled) std::cout << method << " mse " << tvpgvar::io::format_double(m) << "\n";
    } else if (*report) {
      std::cout << pl::cmd_report(cfg);
    }
  } catch (const tvpgvar::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const tvpgvar::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
