#include "viwo/wheel_odometry.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace viwo {

Odom2DState dead_reckon_step(const Odom2DState& s, const WheelSample& w, double dt) {
  if (!(dt > 0.0) || !std::isfinite(w.vx) || !std::isfinite(w.vy) ||
      !std::isfinite(w.omega)) {
    throw RejectedSample("dead_reckon_step: non-finite input or dt <= 0");
  }
  const double c = std::cos(s.theta);
  const double sn = std::sin(s.theta);
  Odom2DState out;
  out.px = s.px + (c * w.vx - sn * w.vy) * dt;
  out.py = s.py + (sn * w.vx + c * w.vy) * dt;
  out.theta = wrap_angle(s.theta + w.omega * dt);
  return out;
}

WheelPreintegration WheelPreintegration::make(const Vec3& bg, const NoiseParams& n) {
  n.validate();
  WheelPreintegration pre;
  pre.bg_ref = bg;
  pre.noise = n;
  return pre;
}

namespace {

void step_in_place(WheelPreintegration& pre, const PreFusedWheelMeas& m,
                   const Extrinsics& extr) {
  const double dt = m.t1 - m.t0;
  if (!(dt > 0.0) || !m.delta_p.allFinite() || !m.avg_gyro.allFinite()) {
    throw RejectedSample("wheel propagate: bad interval [" + std::to_string(m.t0) +
                         ", " + std::to_string(m.t1) + "]");
  }
  const Mat3 R = rot_from_quat(pre.q);
  const Mat3 R_body_to_odom = extr.R_odom_in_body.transpose();
  const Vec3 u = R_body_to_odom * (m.avg_gyro - pre.bg_ref) * dt;
  const Mat3 Jr = so3_right_jacobian(u);

  // One-step error transition; the displacement row couples to the attitude
  // error through the rotated increment.
  Mat9 A = Mat9::Identity();
  A.block<3, 3>(0, 3) = -R * skew(m.delta_p);
  A.block<3, 3>(3, 3) = rot_from_quat(quat_from_small_angle(u)).transpose();
  A.block<3, 3>(3, 6) = -Jr * R_body_to_odom * dt;
  pre.jac = A * pre.jac;

  // Noise entry: displacement scaled by distance traveled, gyro white noise,
  // gyro bias random walk.
  const double d = std::max(m.delta_p.norm(), kWheelNoiseFloor);
  Mat9 B = Mat9::Zero();
  B.block<3, 3>(0, 0) = R * (d * Mat3::Identity());
  B.block<3, 3>(3, 3) = -Jr * R_body_to_odom * dt;
  B.block<3, 3>(6, 6) = Mat3::Identity() * dt;

  Eigen::Matrix<double, 9, 1> qd;
  const NoiseParams& n = pre.noise;
  qd << n.sigma_wheel.array().square() * dt,
        Vec3::Constant(n.sigma_g * n.sigma_g / dt),
        Vec3::Constant(n.sigma_bg * n.sigma_bg * dt);
  pre.cov = A * pre.cov * A.transpose() + B * qd.asDiagonal() * B.transpose();
  pre.cov = 0.5 * (pre.cov + pre.cov.transpose()).eval();

  pre.p += R * m.delta_p;
  pre.q = quat_mul(pre.q, quat_from_small_angle(u));
  pre.dt_sum += dt;
  pre.meas.push_back(m);
}

}  // namespace

WheelPreintegration wheel_preint_propagate(const WheelPreintegration& pre,
                                           const PreFusedWheelMeas& m,
                                           const Extrinsics& extr) {
  WheelPreintegration out = pre;
  step_in_place(out, m, extr);
  return out;
}

WheelPreintegration wheel_repropagate(const WheelPreintegration& pre, const Vec3& bg,
                                      const Extrinsics& extr) {
  WheelPreintegration out = WheelPreintegration::make(bg, pre.noise);
  for (const PreFusedWheelMeas& m : pre.meas) step_in_place(out, m, extr);
  return out;
}

WheelPreintegration wheel_concat(const WheelPreintegration& a,
                                 const WheelPreintegration& b, const Extrinsics& extr) {
  WheelPreintegration out = WheelPreintegration::make(a.bg_ref, a.noise);
  for (const PreFusedWheelMeas& m : a.meas) step_in_place(out, m, extr);
  for (const PreFusedWheelMeas& m : b.meas) step_in_place(out, m, extr);
  return out;
}

namespace {

Vec3 corrected_displacement(const WheelPreintegration& pre, const Vec3& bg) {
  if (!pre.within_correction_range(bg)) {
    throw RepropagationRequired("wheel preintegration bias shift exceeds guard");
  }
  return pre.p + pre.Jp_bg() * (bg - pre.bg_ref);
}

}  // namespace

Vec3 wheel_residual(const WheelPreintegration& pre, const KeyframeState& x_k,
                    const KeyframeState& x_k1, const Extrinsics& extr) {
  const Mat3 Ro_t = extr.R_odom_in_body.transpose();
  const Mat3 Rk_t = rot_from_quat(x_k.q).transpose();
  const Mat3 Rk1 = rot_from_quat(x_k1.q);
  const Vec3& p_ob = extr.p_odom_in_body;
  return Ro_t * Rk_t * (x_k1.p - x_k.p) + Ro_t * Rk_t * Rk1 * p_ob - Ro_t * p_ob -
         corrected_displacement(pre, x_k.bg);
}

Mat3x30 wheel_residual_jacobian(const WheelPreintegration& pre,
                                const KeyframeState& x_k, const KeyframeState& x_k1,
                                const Extrinsics& extr) {
  const Mat3 Ro_t = extr.R_odom_in_body.transpose();
  const Mat3 Rk_t = rot_from_quat(x_k.q).transpose();
  const Mat3 Rk1 = rot_from_quat(x_k1.q);
  const Vec3& p_ob = extr.p_odom_in_body;

  Mat3x30 J = Mat3x30::Zero();
  J.block<3, 3>(0, 0) = -Ro_t * Rk_t;
  J.block<3, 3>(0, 6) = Ro_t * skew(Rk_t * (x_k1.p - x_k.p) + Rk_t * Rk1 * p_ob);
  J.block<3, 3>(0, 12) = -pre.Jp_bg();
  J.block<3, 3>(0, 15) = Ro_t * Rk_t;
  J.block<3, 3>(0, 21) = -Ro_t * Rk_t * Rk1 * skew(p_ob);
  return J;
}

Mat3 wheel_residual_covariance(const WheelPreintegration& pre) {
  const Mat3 block = pre.cov.topLeftCorner<3, 3>();
  Eigen::SelfAdjointEigenSolver<Mat3> es(block);
  const double floor = -1e-12 * std::max(1.0, es.eigenvalues().maxCoeff());
  if (es.eigenvalues().minCoeff() < floor) {
    throw std::runtime_error("wheel displacement covariance is not PSD");
  }
  return block;
}

}  // namespace viwo
