#pragma once

#include "viwo/config.hpp"
#include "viwo/csv_io.hpp"
#include "viwo/estimator.hpp"

#include <string>
#include <vector>

namespace viwo {

struct Dataset {
  std::vector<ImuSample> imu;
  std::vector<WheelSample> wheel;
  std::vector<FeatureRow> features;
  std::vector<GroundTruthRow> groundtruth;
};

Dataset load_dataset(const std::string& dir);

std::vector<FrameBundle> bundles_from_dataset(const Dataset& data,
                                              const PipelineConfig& pipeline_cfg);

struct RunResult {
  std::vector<TrajectoryPose> trajectory;
  bool diverged = false;
  std::string message;
  bool initialized = false;
};

// Streams bundles through bootstrap + estimator (or plain dead reckoning in
// wheel-odom mode). On divergence the partial trajectory is preserved.
RunResult run_estimation(const RunConfig& cfg, const Dataset& data);

// Pure Eq.-13 dead reckoning over the raw wheel stream, sampled at the frame
// times, lifted to 3D with z = 0.
std::vector<TrajectoryPose> dead_reckon_trajectory(
    const std::vector<WheelSample>& wheel, const std::vector<double>& sample_times);

SyntheticDataset simulate_dataset(const RunConfig& cfg);

}  // namespace viwo
