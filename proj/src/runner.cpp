#include "viwo/runner.hpp"

#include "viwo/initializer.hpp"

#include <algorithm>
#include <map>

namespace viwo {

Dataset load_dataset(const std::string& dir) {
  Dataset d;
  d.imu = read_imu_csv(dir + "/imu.csv");
  d.wheel = read_wheel_csv(dir + "/wheel.csv");
  d.features = read_features_csv(dir + "/features.csv");
  d.groundtruth = read_groundtruth_csv(dir + "/groundtruth.csv");
  if (d.imu.empty() || d.wheel.empty()) {
    throw DataError("dataset '" + dir + "' has an empty imu or wheel stream");
  }
  return d;
}

std::vector<FrameBundle> bundles_from_dataset(const Dataset& data,
                                              const PipelineConfig& pipeline_cfg) {
  // Frame times come from the ground-truth clock (the camera trigger); feature
  // rows attach to their frame time.
  std::vector<double> frame_times;
  for (const GroundTruthRow& g : data.groundtruth) frame_times.push_back(g.t);
  std::map<double, std::vector<FeatureObservation>> feats;
  for (const FeatureRow& f : data.features) {
    feats[f.t].push_back({f.feature_id, f.u, f.v});
  }
  return build_bundles(frame_times, feats, data.imu, data.wheel, pipeline_cfg);
}

std::vector<TrajectoryPose> dead_reckon_trajectory(
    const std::vector<WheelSample>& wheel, const std::vector<double>& sample_times) {
  std::vector<TrajectoryPose> out;
  if (wheel.empty()) return out;
  Odom2DState s;
  std::size_t w = 1;
  for (double t : sample_times) {
    while (w < wheel.size() && wheel[w].t <= t + 1e-9) {
      s = dead_reckon_step(s, wheel[w], wheel[w].t - wheel[w - 1].t);
      ++w;
    }
    TrajectoryPose p;
    p.t = t;
    p.p = Vec3(s.px, s.py, 0.0);
    p.q = quat_from_yaw(s.theta);
    out.push_back(p);
  }
  return out;
}

RunResult run_estimation(const RunConfig& cfg, const Dataset& data) {
  RunResult result;

  if (cfg.estimator.mode == FusionMode::kWheelOdom) {
    std::vector<double> frame_times;
    for (const GroundTruthRow& g : data.groundtruth) frame_times.push_back(g.t);
    frame_times = downsample_frames(frame_times, cfg.pipeline.cam_hz);
    result.trajectory = dead_reckon_trajectory(data.wheel, frame_times);
    result.initialized = true;
    return result;
  }

  const std::vector<FrameBundle> bundles = bundles_from_dataset(data, cfg.pipeline);
  Bootstrapper boot(cfg.init, cfg.estimator);
  Estimator est(cfg.estimator);
  bool initialized = false;

  for (const FrameBundle& bundle : bundles) {
    try {
      if (!initialized) {
        if (auto w = boot.feed(bundle)) {
          est.install_window(std::move(*w));
          est.solve_window();
          initialized = true;
        }
        continue;
      }
      est.add_frame(bundle);
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.message = e.what();
      break;
    }
  }
  result.initialized = initialized;
  if (!initialized) {
    result.message = "initialization never completed: " + boot.last_failure();
    return result;
  }

  for (const KeyframeState& s : est.full_trajectory()) {
    result.trajectory.push_back({s.t, s.p, s.q});
  }
  std::sort(result.trajectory.begin(), result.trajectory.end(),
            [](const TrajectoryPose& a, const TrajectoryPose& b) { return a.t < b.t; });
  return result;
}

SyntheticDataset simulate_dataset(const RunConfig& cfg) {
  const LandmarkField landmarks =
      generate_landmarks(cfg.traj, cfg.landmark_density, cfg.seed);
  return synthesize(cfg.traj, cfg.faults, landmarks, cfg.estimator.camera,
                    cfg.estimator.extrinsics, cfg.sim_noise, cfg.rates, cfg.seed);
}

}  // namespace viwo
