#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>

namespace viwo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;   // Hamilton, scalar-first construction Quat(w,x,y,z)

// q_a * q_b composes body->parent maps: the q_b rotation is applied first.
inline Quat quat_mul(const Quat& a, const Quat& b) {
  Quat q(a.w() * b.w() - a.x() * b.x() - a.y() * b.y() - a.z() * b.z(),
         a.w() * b.x() + a.x() * b.w() + a.y() * b.z() - a.z() * b.y(),
         a.w() * b.y() - a.x() * b.z() + a.y() * b.w() + a.z() * b.x(),
         a.w() * b.z() + a.x() * b.y() - a.y() * b.x() + a.z() * b.w());
  q.normalize();
  return q;
}

inline Quat quat_conj(const Quat& q) { return Quat(q.w(), -q.x(), -q.y(), -q.z()); }

// Exponential map. Series branch below 1e-8 rad avoids 0/0.
inline Quat quat_from_small_angle(const Vec3& theta) {
  const double angle = theta.norm();
  double w, k;
  if (angle < 1e-8) {
    const double a2 = angle * angle;
    w = 1.0 - a2 / 8.0;
    k = 0.5 - a2 / 48.0;
  } else {
    w = std::cos(0.5 * angle);
    k = std::sin(0.5 * angle) / angle;
  }
  Quat q(w, k * theta.x(), k * theta.y(), k * theta.z());
  q.normalize();
  return q;
}

inline Mat3 rot_from_quat(const Quat& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Mat3 r;
  r << w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z;
  return r;
}

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m <<     0, -v.z(),  v.y(),
       v.z(),      0, -v.x(),
      -v.y(),  v.x(),      0;
  return m;
}

// 2 * imaginary part, sign-canonicalized so w >= 0. First-order equal to the
// rotation vector of q; used for small-angle residual extraction.
inline Vec3 quat_imag_doubled(const Quat& q) {
  const double s = (q.w() < 0.0) ? -2.0 : 2.0;
  return Vec3(s * q.x(), s * q.y(), s * q.z());
}

// Exact logarithm (rotation vector), for oracle checks and yaw chaining.
inline Vec3 quat_log(const Quat& q_in) {
  Quat q = q_in;
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  const Vec3 v(q.x(), q.y(), q.z());
  const double vn = v.norm();
  if (vn < 1e-12) return 2.0 * v;
  const double angle = 2.0 * std::atan2(vn, q.w());
  return (angle / vn) * v;
}

// Left quaternion product matrix: L(a) * b_vec4 == a ⊗ b, order (w,x,y,z).
inline Eigen::Matrix4d quat_left_matrix(const Quat& q) {
  Eigen::Matrix4d m;
  m(0, 0) = q.w();
  m.block<1, 3>(0, 1) = -Vec3(q.x(), q.y(), q.z()).transpose();
  m.block<3, 1>(1, 0) = Vec3(q.x(), q.y(), q.z());
  m.block<3, 3>(1, 1) = q.w() * Mat3::Identity() + skew(Vec3(q.x(), q.y(), q.z()));
  return m;
}

// Right quaternion product matrix: R(b) * a_vec4 == a ⊗ b.
inline Eigen::Matrix4d quat_right_matrix(const Quat& q) {
  Eigen::Matrix4d m;
  m(0, 0) = q.w();
  m.block<1, 3>(0, 1) = -Vec3(q.x(), q.y(), q.z()).transpose();
  m.block<3, 1>(1, 0) = Vec3(q.x(), q.y(), q.z());
  m.block<3, 3>(1, 1) = q.w() * Mat3::Identity() - skew(Vec3(q.x(), q.y(), q.z()));
  return m;
}

// Right Jacobian of SO(3): exp(phi + d) ≈ exp(phi) ⊗ exp(Jr(phi) d).
inline Mat3 so3_right_jacobian(const Vec3& phi) {
  const double a = phi.norm();
  const Mat3 px = skew(phi);
  if (a < 1e-6) {
    return Mat3::Identity() - 0.5 * px + (1.0 / 6.0) * px * px;
  }
  const double a2 = a * a;
  return Mat3::Identity() - (1.0 - std::cos(a)) / a2 * px +
         (a - std::sin(a)) / (a2 * a) * px * px;
}

inline double yaw_from_quat(const Quat& q) {
  const Mat3 r = rot_from_quat(q);
  return std::atan2(r(1, 0), r(0, 0));   // ZYX convention
}

inline Quat quat_from_yaw(double yaw) {
  return Quat(std::cos(0.5 * yaw), 0.0, 0.0, std::sin(0.5 * yaw));
}

inline double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a <= 0.0) a += 2.0 * M_PI;
  return a - M_PI;   // (-pi, pi]
}

}  // namespace viwo
