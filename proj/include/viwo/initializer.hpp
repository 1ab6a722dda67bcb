#pragma once

#include "viwo/estimator.hpp"
#include "viwo/imu_preintegration.hpp"
#include "viwo/wheel_odometry.hpp"

#include <optional>
#include <vector>

namespace viwo {

struct InitializationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientExcitation : InitializationError {
  using InitializationError::InitializationError;
};

// One keyframe-aligned interval of the buffering phase. The wheel rotation is
// taken from the integrated wheel heading (yaw lifted to a quaternion), not
// from the gyro, so a gyro bias shows up as a rotation discrepancy.
struct InitInterval {
  ImuPreintegration imu;           // references ba = bg = 0
  WheelPreintegration wheel;       // gyro-rotated, for displacement seeding
  double wheel_yaw = 0.0;          // integrated wheel heading increment
  FrameBundle boundary_bundle;     // the bundle closing the interval
};

struct InitBuffer {
  std::vector<InitInterval> intervals;
  FrameBundle first_bundle;
  Extrinsics extrinsics;
};

struct InitializerConfig {
  int min_intervals = 5;           // K_min
  int bundles_per_interval = 3;
  double min_interval_dt = 0.05;   // s
  double excitation_rotation = 0.05;   // rad, total IMU rotation gate
  double static_path_gate = 0.01;      // m, wheel path below this is "static"
  double max_condition_number = 1e8;
  double max_plausible_bias = 0.2;     // rad/s
};

// Gyro bias from the wheel-heading / IMU relative-rotation consistency
// system, iterated with repropagation until the linearization converges.
Vec3 estimate_gyro_bias(const InitBuffer& buf, const InitializerConfig& cfg);

struct VelocityGravityResult {
  std::vector<Vec3> v_body;   // one per keyframe boundary, in that body frame
  Vec3 g_b0;                  // gravity in the first body frame, norm 9.81
};

// Linear system over keyframe velocities and gravity; the wheel-scale column
// is assembled but pinned at s = 1.
VelocityGravityResult init_velocity_gravity(const InitBuffer& buf, const Vec3& bg,
                                            const InitializerConfig& cfg);

// Buffers bundles, forms intervals, and produces a fully seeded window once
// both initialization stages pass. Stays in the buffering state on failure.
class Bootstrapper {
 public:
  Bootstrapper(const InitializerConfig& init_cfg, const EstimatorConfig& est_cfg)
      : cfg_(init_cfg), est_cfg_(est_cfg) {}

  // Returns an initialized window once ready.
  std::optional<SlidingWindow> feed(const FrameBundle& bundle);

  const InitBuffer& buffer() const { return buf_; }
  Vec3 gyro_bias() const { return bg_; }
  std::string last_failure() const { return last_failure_; }

 private:
  SlidingWindow assemble_window(const VelocityGravityResult& vg);

  InitializerConfig cfg_;
  EstimatorConfig est_cfg_;
  InitBuffer buf_;
  std::vector<FrameBundle> pending_;
  bool have_first_ = false;
  Vec3 bg_ = Vec3::Zero();
  std::string last_failure_;
};

// Rotation aligning measured gravity with +z, yaw pinned to zero.
Quat attitude_from_gravity(const Vec3& g_body);

// Gauge-fixing prior on the first keyframe: tight position and yaw, soft
// roll/pitch, velocity, and biases.
MarginalPrior make_gauge_prior(std::int64_t kf_id, const KeyframeState& state);

}  // namespace viwo
