#pragma once

#include "viwo/rotation.hpp"

namespace viwo {

constexpr double kGravityMag = 9.81;

inline Vec3 gravity_world() { return Vec3(0.0, 0.0, kGravityMag); }   // z-up

// Full IMU state attached to one keyframe.
struct KeyframeState {
  Vec3 p = Vec3::Zero();       // p_B^W, m
  Vec3 v = Vec3::Zero();       // v_B^W, m/s
  Quat q = Quat::Identity();   // q_B^W
  Vec3 ba = Vec3::Zero();
  Vec3 bg = Vec3::Zero();
  double t = 0.0;

  bool biases_plausible() const { return ba.norm() < 1.0 && bg.norm() < 0.2; }
};

// Camera and odometer mounting, both expressed in the IMU/body frame:
// x_B = R_*_in_body * x_* + p_*_in_body.
struct Extrinsics {
  Mat3 R_cam_in_body = Mat3::Identity();
  Vec3 p_cam_in_body = Vec3::Zero();
  Mat3 R_odom_in_body = Mat3::Identity();
  Vec3 p_odom_in_body = Vec3::Zero();
};

}  // namespace viwo
