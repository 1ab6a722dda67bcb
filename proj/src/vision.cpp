#include "viwo/vision.hpp"

#include <cmath>

namespace viwo {

Vec3 back_project(const CameraModel& cam, const Vec2& px) {
  return Vec3((px.x() - cam.cx) / cam.fx, (px.y() - cam.cy) / cam.fy, 1.0).normalized();
}

Vec2 project(const CameraModel& cam, const Vec3& p_cam) {
  if (p_cam.z() < 1e-9) throw DegenerateGeometry("projection of non-positive depth");
  return Vec2(cam.fx * p_cam.x() / p_cam.z() + cam.cx,
              cam.fy * p_cam.y() / p_cam.z() + cam.cy);
}

std::pair<Vec3, Vec3> tangent_basis(const Vec3& n) {
  Vec3 a = Vec3::UnitZ();
  if (std::abs(n.dot(a)) > 0.9) a = Vec3::UnitX();
  const Vec3 b1 = n.cross(a).normalized();
  const Vec3 b2 = n.cross(b1).normalized();
  return {b1, b2};
}

Vec3 transform_to_observer(const FeatureTrack& track, const Vec2& host_px,
                           const KeyframeState& x_i, const KeyframeState& x_j,
                           const Extrinsics& extr, const CameraModel& cam) {
  if (!(track.inv_depth > 0.0)) {
    throw DegenerateGeometry("feature " + std::to_string(track.id) +
                             ": non-positive inverse depth");
  }
  const Vec3 p_ci = back_project(cam, host_px) / track.inv_depth;
  const Vec3 p_bi = extr.R_cam_in_body * p_ci + extr.p_cam_in_body;
  const Vec3 p_w = rot_from_quat(x_i.q) * p_bi + x_i.p;
  const Vec3 p_bj = rot_from_quat(x_j.q).transpose() * (p_w - x_j.p);
  return extr.R_cam_in_body.transpose() * (p_bj - extr.p_cam_in_body);
}

Vec2 visual_residual(const FeatureTrack& track, std::int64_t obs_frame,
                     const KeyframeState& x_i, const KeyframeState& x_j,
                     const Extrinsics& extr, const CameraModel& cam) {
  const Vec2& host_px = track.obs.at(track.host_keyframe);
  const Vec2& obs_px = track.obs.at(obs_frame);
  const Vec3 p_cj = transform_to_observer(track, host_px, x_i, x_j, extr, cam);
  if (p_cj.norm() < 1e-6) {
    throw DegenerateGeometry("feature " + std::to_string(track.id) +
                             " collapses onto the observer");
  }
  const Vec3 measured = back_project(cam, obs_px);
  const auto [b1, b2] = tangent_basis(measured);
  const Vec3 diff = p_cj.normalized() - measured;
  return Vec2(b1.dot(diff), b2.dot(diff));
}

Mat2x13 visual_jacobian(const FeatureTrack& track, std::int64_t obs_frame,
                        const KeyframeState& x_i, const KeyframeState& x_j,
                        const Extrinsics& extr, const CameraModel& cam) {
  const Vec2& host_px = track.obs.at(track.host_keyframe);
  const Vec2& obs_px = track.obs.at(obs_frame);
  const Vec3 f_i = back_project(cam, host_px);
  const Vec3 p_cj = transform_to_observer(track, host_px, x_i, x_j, extr, cam);
  const double n = p_cj.norm();
  if (n < 1e-6) {
    throw DegenerateGeometry("feature " + std::to_string(track.id) +
                             " collapses onto the observer");
  }
  const Vec3 measured = back_project(cam, obs_px);
  const auto [b1, b2] = tangent_basis(measured);
  Eigen::Matrix<double, 2, 3> B;
  B.row(0) = b1.transpose();
  B.row(1) = b2.transpose();

  // d(normalize)/dx
  const Mat3 dn = (Mat3::Identity() - (p_cj / n) * (p_cj / n).transpose()) / n;
  const Eigen::Matrix<double, 2, 3> head = B * dn;

  const Mat3 Rc_t = extr.R_cam_in_body.transpose();
  const Mat3 Ri = rot_from_quat(x_i.q);
  const Mat3 Rj_t = rot_from_quat(x_j.q).transpose();
  const Vec3 p_bi = extr.R_cam_in_body * (f_i / track.inv_depth) + extr.p_cam_in_body;
  const Vec3 p_w = Ri * p_bi + x_i.p;
  const Vec3 p_bj = Rj_t * (p_w - x_j.p);

  Mat2x13 J = Mat2x13::Zero();
  J.block<2, 3>(0, 0) = head * Rc_t * Rj_t;                          // dp_i
  J.block<2, 3>(0, 3) = -head * Rc_t * Rj_t * Ri * skew(p_bi);       // dtheta_i
  J.block<2, 3>(0, 6) = -head * Rc_t * Rj_t;                         // dp_j
  J.block<2, 3>(0, 9) = head * Rc_t * skew(p_bj);                    // dtheta_j
  J.col(12) = head * Rc_t * Rj_t * Ri * extr.R_cam_in_body *
              (-f_i / (track.inv_depth * track.inv_depth));          // dlambda
  return J;
}

double huber_weight(double squared_mahalanobis) {
  if (squared_mahalanobis <= 1.0) return 1.0;
  return 1.0 / std::sqrt(squared_mahalanobis);
}

double huber_cost(double squared_mahalanobis) {
  if (squared_mahalanobis <= 1.0) return squared_mahalanobis;
  return 2.0 * std::sqrt(squared_mahalanobis) - 1.0;
}

}  // namespace viwo
