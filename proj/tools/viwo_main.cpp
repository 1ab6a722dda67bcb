#include "viwo/config.hpp"
#include "viwo/csv_io.hpp"
#include "viwo/evaluation.hpp"
#include "viwo/runner.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 long seed_override) {
  viwo::RunConfig cfg = viwo::RunConfig::parse_file(config_path);
  cfg.require_simulate_keys();
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  std::filesystem::create_directories(out_dir);

  const viwo::SyntheticDataset data = viwo::simulate_dataset(cfg);
  viwo::write_imu_csv(out_dir + "/imu.csv", data.imu);
  viwo::write_wheel_csv(out_dir + "/wheel.csv", data.wheel);
  viwo::write_features_csv(out_dir + "/features.csv", data.features);
  viwo::write_groundtruth_csv(out_dir + "/groundtruth.csv", data.groundtruth);
  std::printf("wrote %zu imu, %zu wheel, %zu feature, %zu groundtruth rows to %s\n",
              data.imu.size(), data.wheel.size(), data.features.size(),
              data.groundtruth.size(), out_dir.c_str());
  return kExitOk;
}

int cmd_run(const std::string& config_path, const std::string& dataset_dir,
            const std::string& out_path, const std::string& mode_override) {
  viwo::RunConfig cfg = viwo::RunConfig::parse_file(config_path);
  if (!mode_override.empty()) {
    cfg.estimator.mode = viwo::fusion_mode_from_string(mode_override);
    cfg.has_mode = true;
  }
  cfg.require_run_keys();

  const viwo::Dataset data = viwo::load_dataset(dataset_dir);
  const viwo::RunResult result = viwo::run_estimation(cfg, data);
  viwo::write_trajectory(out_path, result.trajectory);
  if (!result.initialized) {
    std::fprintf(stderr, "error: %s\n", result.message.c_str());
    return kExitData;
  }
  if (result.diverged) {
    std::fprintf(stderr, "divergence: %s (partial trajectory written)\n",
                 result.message.c_str());
    return kExitDivergence;
  }
  std::printf("wrote %zu poses to %s\n", result.trajectory.size(), out_path.c_str());
  return kExitOk;
}

int cmd_eval(const std::string& traj_path, const std::string& gt_path,
             const std::string& out_path) {
  const auto est = viwo::read_trajectory(traj_path);
  const auto gt = viwo::read_trajectory(gt_path);
  const viwo::DriftReport report = viwo::evaluate_drift(est, gt);
  const std::string text = report.format();
  std::fputs(text.c_str(), stdout);
  if (!out_path.empty()) {
    std::FILE* f = std::fopen(out_path.c_str(), "w");
    if (!f) throw viwo::DataError("cannot open '" + out_path + "' for writing");
    std::fputs(text.c_str(), f);
    std::fclose(f);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"visual-inertial-wheel odometry: simulate, run, evaluate"};
  app.require_subcommand(1);

  std::string config_path, dataset_dir, out_path, mode_override, traj_path, gt_path;
  long seed_override = -1;

  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim->add_option("--config", config_path, "config file")->required();
  sim->add_option("--out", out_path, "output dataset directory")->required();
  sim->add_option("--seed", seed_override, "RNG seed override");

  CLI::App* run = app.add_subcommand("run", "run the estimator on a dataset");
  run->add_option("--config", config_path, "config file")->required();
  run->add_option("--dataset", dataset_dir, "dataset directory")->required();
  run->add_option("--out", out_path, "trajectory output path")->required();
  run->add_option("--mode", mode_override,
                  "fused | wheel-odom | wheel-inertial | visual-inertial");

  CLI::App* ev = app.add_subcommand("eval", "drift report: estimate vs ground truth");
  ev->add_option("trajectory", traj_path, "estimated trajectory")->required();
  ev->add_option("groundtruth", gt_path, "ground-truth trajectory")->required();
  ev->add_option("--out", out_path, "also write the report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (sim->parsed()) return cmd_simulate(config_path, out_path, seed_override);
    if (run->parsed()) return cmd_run(config_path, dataset_dir, out_path, mode_override);
    if (ev->parsed()) return cmd_eval(traj_path, gt_path, out_path);
  } catch (const viwo::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const viwo::DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return kExitDivergence;
  } catch (const viwo::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const viwo::PipelineError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitConfig;
}
