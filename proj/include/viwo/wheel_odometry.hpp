#pragma once

#include "viwo/imu_preintegration.hpp"
#include "viwo/sensor_types.hpp"
#include "viwo/state.hpp"

#include <vector>

namespace viwo {

using Mat9 = Eigen::Matrix<double, 9, 9>;
using Mat3x30 = Eigen::Matrix<double, 3, 30>;

// Planar dead-reckoning state; theta wrapped to (-pi, pi].
struct Odom2DState {
  double px = 0.0;
  double py = 0.0;
  double theta = 0.0;
};

// Straight-line translation with the previous heading, then the heading update.
Odom2DState dead_reckon_step(const Odom2DState& s, const WheelSample& w, double dt);

// Displacement noise floor keeping the covariance nonsingular when parked.
constexpr double kWheelNoiseFloor = 1e-4;   // m

// Wheel/gyro preintegration between two keyframes. Error-state order is
// [d_p, d_theta, d_bg].
struct WheelPreintegration {
  Vec3 p = Vec3::Zero();       // p^{O_k}, m
  Quat q = Quat::Identity();   // q^{O_k}, gyro-integrated
  Vec3 bg_ref = Vec3::Zero();
  Mat9 cov = Mat9::Zero();
  Mat9 jac = Mat9::Identity();
  double dt_sum = 0.0;
  NoiseParams noise;
  std::vector<PreFusedWheelMeas> meas;   // retained for repropagation

  static WheelPreintegration make(const Vec3& bg, const NoiseParams& n);

  Mat3 Jp_bg() const { return jac.block<3, 3>(0, 6); }
  Mat3 Jq_bg() const { return jac.block<3, 3>(3, 6); }

  bool within_correction_range(const Vec3& bg) const {
    return (bg - bg_ref).norm() < kBiasCorrectionGuard;
  }
};

WheelPreintegration wheel_preint_propagate(const WheelPreintegration& pre,
                                           const PreFusedWheelMeas& m,
                                           const Extrinsics& extr);

WheelPreintegration wheel_repropagate(const WheelPreintegration& pre, const Vec3& bg,
                                      const Extrinsics& extr);

WheelPreintegration wheel_concat(const WheelPreintegration& a,
                                 const WheelPreintegration& b, const Extrinsics& extr);

// Displacement residual (the rotation and bias rows live in the IMU residual).
Vec3 wheel_residual(const WheelPreintegration& pre, const KeyframeState& x_k,
                    const KeyframeState& x_k1, const Extrinsics& extr);

// Nonzero blocks: both positions, both attitudes, and the k-frame gyro bias.
Mat3x30 wheel_residual_jacobian(const WheelPreintegration& pre,
                                const KeyframeState& x_k, const KeyframeState& x_k1,
                                const Extrinsics& extr);

// Upper-left displacement block of the preintegration covariance.
Mat3 wheel_residual_covariance(const WheelPreintegration& pre);

}  // namespace viwo
