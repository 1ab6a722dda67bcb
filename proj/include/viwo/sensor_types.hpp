#pragma once

#include "viwo/rotation.hpp"

#include <cstdint>
#include <vector>

namespace viwo {

struct ImuSample {
  double t = 0.0;       // seconds
  Vec3 accel = Vec3::Zero();   // specific force, body frame B, m/s^2
  Vec3 gyro = Vec3::Zero();    // body frame B, rad/s
};

struct WheelSample {
  double t = 0.0;       // seconds
  double vx = 0.0;      // odometer frame O, m/s
  double vy = 0.0;
  double omega = 0.0;   // yaw rate, rad/s
};

// One wheel-sample pair fused with time-aligned IMU averages (Fig.-1 output).
struct PreFusedWheelMeas {
  double t0 = 0.0;
  double t1 = 0.0;
  Vec3 delta_p = Vec3::Zero();   // planar displacement increment, O frame, z = 0
  Vec3 avg_accel = Vec3::Zero();
  Vec3 avg_gyro = Vec3::Zero();
  double dyaw = 0.0;             // wheel-measured heading increment, used by init
};

struct FeatureObservation {
  std::int64_t id = -1;
  double u = 0.0;   // pixel
  double v = 0.0;
};

// Per-frame packet handed to the estimator. imu covers [prev_frame_t, frame_t]
// with interpolated boundary samples; wheel measurements tile the same span.
struct FrameBundle {
  double frame_t = 0.0;
  std::vector<FeatureObservation> features;
  std::vector<ImuSample> imu;
  std::vector<PreFusedWheelMeas> wheel;
};

}  // namespace viwo
