#include "viwo/imu_preintegration.hpp"

#include <cmath>

namespace viwo {

void NoiseParams::validate() const {
  const bool ok = sigma_a > 0 && sigma_g > 0 && sigma_ba > 0 && sigma_bg > 0 &&
                  sigma_wheel.minCoeff() > 0;
  if (!ok) throw std::invalid_argument("NoiseParams: all densities must be > 0");
}

ImuPreintegration ImuPreintegration::make(const Vec3& ba, const Vec3& bg,
                                          const NoiseParams& n) {
  n.validate();
  ImuPreintegration pre;
  pre.ba_ref = ba;
  pre.bg_ref = bg;
  pre.noise = n;
  return pre;
}

namespace {

void step_in_place(ImuPreintegration& pre, const ImuSample& s, double dt) {
  if (!(dt > 0.0) || dt >= 0.1 || !s.accel.allFinite() || !s.gyro.allFinite()) {
    throw RejectedSample("imu propagate: dt=" + std::to_string(dt) +
                         " or non-finite sample at t=" + std::to_string(s.t));
  }
  const Vec3 a = s.accel - pre.ba_ref;
  const Vec3 w = s.gyro - pre.bg_ref;
  const Mat3 R = rot_from_quat(pre.q);
  const Vec3 u = w * dt;

  // Exact one-step transition of the discrete recursion, for the bias Jacobian.
  Mat15 A = Mat15::Identity();
  A.block<3, 3>(0, 3) = Mat3::Identity() * dt;
  A.block<3, 3>(0, 6) = -0.5 * R * skew(a) * dt * dt;
  A.block<3, 3>(0, 9) = -0.5 * R * dt * dt;
  A.block<3, 3>(3, 6) = -R * skew(a) * dt;
  A.block<3, 3>(3, 9) = -R * dt;
  A.block<3, 3>(6, 6) = rot_from_quat(quat_from_small_angle(u)).transpose();
  A.block<3, 3>(6, 12) = -so3_right_jacobian(u) * dt;
  pre.jac = A * pre.jac;

  // Covariance with the first-order transition (I + F dt) and (G dt) Q (G dt)^T.
  Mat15 phi = Mat15::Identity();
  phi.block<3, 3>(0, 3) = Mat3::Identity() * dt;
  phi.block<3, 3>(3, 6) = -R * skew(a) * dt;
  phi.block<3, 3>(3, 9) = -R * dt;
  phi.block<3, 3>(6, 6) -= skew(w) * dt;
  phi.block<3, 3>(6, 12) = -Mat3::Identity() * dt;

  Eigen::Matrix<double, 15, 12> Gdt = Eigen::Matrix<double, 15, 12>::Zero();
  Gdt.block<3, 3>(3, 0) = -R * dt;
  Gdt.block<3, 3>(6, 3) = -Mat3::Identity() * dt;
  Gdt.block<3, 3>(9, 6) = Mat3::Identity() * dt;
  Gdt.block<3, 3>(12, 9) = Mat3::Identity() * dt;

  // White densities discretize as sigma^2/dt, random walks as sigma^2*dt.
  Eigen::Matrix<double, 12, 1> qd;
  const NoiseParams& n = pre.noise;
  qd << Vec3::Constant(n.sigma_a * n.sigma_a / dt),
        Vec3::Constant(n.sigma_g * n.sigma_g / dt),
        Vec3::Constant(n.sigma_ba * n.sigma_ba * dt),
        Vec3::Constant(n.sigma_bg * n.sigma_bg * dt);
  pre.cov = phi * pre.cov * phi.transpose() + Gdt * qd.asDiagonal() * Gdt.transpose();
  pre.cov = 0.5 * (pre.cov + pre.cov.transpose()).eval();

  pre.alpha += pre.beta * dt + 0.5 * R * a * dt * dt;
  pre.beta += R * a * dt;
  pre.q = quat_mul(pre.q, quat_from_small_angle(u));
  pre.dt_sum += dt;
  pre.samples.push_back(s);
  pre.dts.push_back(dt);
}

}  // namespace

ImuPreintegration propagate(const ImuPreintegration& pre, const ImuSample& sample,
                            double dt) {
  ImuPreintegration out = pre;
  step_in_place(out, sample, dt);
  return out;
}

ImuPreintegration repropagate(const ImuPreintegration& pre, const Vec3& ba,
                              const Vec3& bg) {
  ImuPreintegration out = ImuPreintegration::make(ba, bg, pre.noise);
  for (std::size_t i = 0; i < pre.samples.size(); ++i) {
    step_in_place(out, pre.samples[i], pre.dts[i]);
  }
  return out;
}

ImuPreintegration integrate_imu_samples(const std::vector<ImuSample>& samples,
                                        const Vec3& ba, const Vec3& bg,
                                        const NoiseParams& noise) {
  ImuPreintegration pre = ImuPreintegration::make(ba, bg, noise);
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const double dt = samples[i].t - samples[i - 1].t;
    if (dt <= 1e-12) continue;
    step_in_place(pre, samples[i], dt);
  }
  return pre;
}

ImuPreintegration imu_concat(const ImuPreintegration& a, const ImuPreintegration& b) {
  ImuPreintegration out = ImuPreintegration::make(a.ba_ref, a.bg_ref, a.noise);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    step_in_place(out, a.samples[i], a.dts[i]);
  }
  for (std::size_t i = 0; i < b.samples.size(); ++i) {
    step_in_place(out, b.samples[i], b.dts[i]);
  }
  return out;
}

CorrectedImuDelta bias_corrected_delta(const ImuPreintegration& pre, const Vec3& ba,
                                       const Vec3& bg) {
  const Vec3 dba = ba - pre.ba_ref;
  const Vec3 dbg = bg - pre.bg_ref;
  if (!pre.within_correction_range(ba, bg)) {
    throw RepropagationRequired("bias shift " + std::to_string(dba.norm()) + "/" +
                                std::to_string(dbg.norm()) +
                                " exceeds first-order guard");
  }
  CorrectedImuDelta d;
  d.alpha = pre.alpha + pre.jac.block<3, 3>(0, 9) * dba + pre.jac.block<3, 3>(0, 12) * dbg;
  d.beta = pre.beta + pre.jac.block<3, 3>(3, 9) * dba + pre.jac.block<3, 3>(3, 12) * dbg;
  d.q = quat_mul(pre.q, quat_from_small_angle(pre.jac.block<3, 3>(6, 12) * dbg));
  return d;
}

Vec15 imu_residual(const ImuPreintegration& pre, const KeyframeState& x_k,
                   const KeyframeState& x_k1, const Vec3& gravity) {
  const CorrectedImuDelta d = bias_corrected_delta(pre, x_k.ba, x_k.bg);
  const double dt = pre.dt_sum;
  const Mat3 Rk_t = rot_from_quat(x_k.q).transpose();

  Vec15 r;
  r.segment<3>(0) =
      Rk_t * (x_k1.p - x_k.p - x_k.v * dt + 0.5 * gravity * dt * dt) - d.alpha;
  r.segment<3>(3) = Rk_t * (x_k1.v - x_k.v + gravity * dt) - d.beta;
  const Quat q_err = quat_mul(quat_mul(quat_conj(d.q), quat_conj(x_k.q)), x_k1.q);
  r.segment<3>(6) = quat_imag_doubled(q_err);
  r.segment<3>(9) = x_k1.ba - x_k.ba;
  r.segment<3>(12) = x_k1.bg - x_k.bg;
  return r;
}

Mat15x30 imu_residual_jacobian(const ImuPreintegration& pre, const KeyframeState& x_k,
                               const KeyframeState& x_k1, const Vec3& gravity) {
  const Vec3 dbg = x_k.bg - pre.bg_ref;
  const Vec3 phi = pre.jac.block<3, 3>(6, 12) * dbg;
  const Quat q_corr = quat_mul(pre.q, quat_from_small_angle(phi));
  const double dt = pre.dt_sum;
  const Mat3 Rk_t = rot_from_quat(x_k.q).transpose();

  const Quat q_rel = quat_mul(quat_conj(x_k.q), x_k1.q);
  const Quat q_err = quat_mul(quat_conj(q_corr), q_rel);
  const double flip = (q_err.w() < 0.0) ? -1.0 : 1.0;

  Mat15x30 J = Mat15x30::Zero();
  // d_alpha rows.
  J.block<3, 3>(0, 0) = -Rk_t;
  J.block<3, 3>(0, 3) = -Rk_t * dt;
  J.block<3, 3>(0, 6) =
      skew(Rk_t * (x_k1.p - x_k.p - x_k.v * dt + 0.5 * gravity * dt * dt));
  J.block<3, 3>(0, 9) = -pre.jac.block<3, 3>(0, 9);
  J.block<3, 3>(0, 12) = -pre.jac.block<3, 3>(0, 12);
  J.block<3, 3>(0, 15) = Rk_t;
  // d_beta rows.
  J.block<3, 3>(3, 3) = -Rk_t;
  J.block<3, 3>(3, 6) = skew(Rk_t * (x_k1.v - x_k.v + gravity * dt));
  J.block<3, 3>(3, 9) = -pre.jac.block<3, 3>(3, 9);
  J.block<3, 3>(3, 12) = -pre.jac.block<3, 3>(3, 12);
  J.block<3, 3>(3, 18) = Rk_t;
  // d_theta rows: r = 2 vec(q_corr^-1 ⊗ q_k^-1 ⊗ q_k1), perturbed on the right.
  const Eigen::Matrix4d M =
      quat_left_matrix(quat_conj(q_corr)) * quat_right_matrix(q_rel);
  J.block<3, 3>(6, 6) = -flip * M.block<3, 3>(1, 1);
  J.block<3, 3>(6, 21) = flip * quat_left_matrix(q_err).block<3, 3>(1, 1);
  J.block<3, 3>(6, 12) = -flip * quat_right_matrix(q_err).block<3, 3>(1, 1) *
                         so3_right_jacobian(phi) * pre.jac.block<3, 3>(6, 12);
  // Bias difference rows.
  J.block<3, 3>(9, 9) = -Mat3::Identity();
  J.block<3, 3>(9, 24) = Mat3::Identity();
  J.block<3, 3>(12, 12) = -Mat3::Identity();
  J.block<3, 3>(12, 27) = Mat3::Identity();
  return J;
}

}  // namespace viwo
