#include "viwo/initializer.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>

namespace viwo {

namespace {

Quat quat_from_mat(const Mat3& R) {
  Quat q(R);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  return q;
}

// Rotation of the odometer frame relative to the body frame as a quaternion.
Quat odom_in_body_quat(const Extrinsics& extr) {
  return quat_from_mat(extr.R_odom_in_body);
}

double rotation_discrepancy(const InitBuffer& buf, const Vec3& bg) {
  const Quat q_ob = odom_in_body_quat(buf.extrinsics);
  const Quat q_bo = quat_conj(q_ob);
  double sum = 0.0;
  for (const InitInterval& iv : buf.intervals) {
    const ImuPreintegration corrected = repropagate(iv.imu, Vec3::Zero(), bg);
    const Quat q_target = quat_mul(quat_mul(q_ob, quat_from_yaw(iv.wheel_yaw)), q_bo);
    sum += quat_log(quat_mul(quat_conj(corrected.q), q_target)).norm();
  }
  return sum;
}

}  // namespace

Vec3 estimate_gyro_bias(const InitBuffer& buf, const InitializerConfig& cfg) {
  const int n = static_cast<int>(buf.intervals.size());
  if (n < 3) {
    throw InitializationError("gyro bias needs >= 3 intervals, have " +
                              std::to_string(n));
  }
  double total_rotation = 0.0;
  double wheel_path = 0.0;
  double wheel_rot = 0.0;
  for (const InitInterval& iv : buf.intervals) {
    total_rotation += quat_log(iv.imu.q).norm();
    wheel_path += iv.wheel.p.norm();
    wheel_rot += std::abs(iv.wheel_yaw);
  }
  const bool is_static = wheel_path < cfg.static_path_gate && wheel_rot < 0.01;
  if (total_rotation <= cfg.excitation_rotation && !is_static) {
    throw InsufficientExcitation(
        "total rotation " + std::to_string(total_rotation) +
        " rad below excitation gate and motion is not static");
  }

  const Quat q_ob = odom_in_body_quat(buf.extrinsics);
  const Quat q_bo = quat_conj(q_ob);

  // Iterated linear solve; repropagation keeps the linearization point exact.
  Vec3 bg = Vec3::Zero();
  std::vector<ImuPreintegration> imu;
  imu.reserve(n);
  for (const InitInterval& iv : buf.intervals) imu.push_back(iv.imu);

  for (int iter = 0; iter < 5; ++iter) {
    Mat3 A = Mat3::Zero();
    Vec3 rhs = Vec3::Zero();
    for (int i = 0; i < n; ++i) {
      const Mat3 J = imu[i].jac.block<3, 3>(6, 12);
      const Quat q_target =
          quat_mul(quat_mul(q_ob, quat_from_yaw(buf.intervals[i].wheel_yaw)), q_bo);
      const Vec3 y = quat_imag_doubled(quat_mul(quat_conj(imu[i].q), q_target));
      A += J.transpose() * J;
      rhs += J.transpose() * y;
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(A);
    const double emin = es.eigenvalues().minCoeff();
    const double emax = es.eigenvalues().maxCoeff();
    if (emin <= 0.0 || emax / emin > cfg.max_condition_number) {
      throw InsufficientExcitation("gyro bias normal matrix condition number " +
                                   std::to_string(emax / std::max(emin, 1e-300)) +
                                   " exceeds gate");
    }
    const Vec3 delta = Eigen::LLT<Mat3>(A).solve(rhs);
    bg += delta;
    for (int i = 0; i < n; ++i) imu[i] = repropagate(imu[i], Vec3::Zero(), bg);
    if (delta.norm() < 1e-12) break;
  }

  if (bg.norm() > cfg.max_plausible_bias) {
    throw InsufficientExcitation("recovered gyro bias " + std::to_string(bg.norm()) +
                                 " rad/s is implausible (wheel/gyro disagreement)");
  }
  if (rotation_discrepancy(buf, bg) > rotation_discrepancy(buf, Vec3::Zero()) + 1e-12) {
    throw InitializationError("bias correction failed to reduce the rotation "
                              "discrepancy");
  }
  return bg;
}

VelocityGravityResult init_velocity_gravity(const InitBuffer& buf, const Vec3& bg,
                                            const InitializerConfig& cfg) {
  (void)cfg;
  const int n = static_cast<int>(buf.intervals.size());
  if (n + 1 < 4) throw InitializationError("velocity/gravity needs >= 4 keyframes");

  const Mat3 R_ob = buf.extrinsics.R_odom_in_body;
  const Vec3 p_ob = buf.extrinsics.p_odom_in_body;

  // Bias-corrected relative rotations chained from the first body frame.
  std::vector<ImuPreintegration> imu;
  std::vector<WheelPreintegration> wheel;
  for (const InitInterval& iv : buf.intervals) {
    imu.push_back(repropagate(iv.imu, Vec3::Zero(), bg));
    wheel.push_back(wheel_repropagate(iv.wheel, bg, buf.extrinsics));
  }
  std::vector<Mat3> R_chain(n + 1);   // R_{B_k}^{B_0}
  R_chain[0] = Mat3::Identity();
  for (int k = 0; k < n; ++k) {
    R_chain[k + 1] = R_chain[k] * rot_from_quat(imu[k].q);
  }

  // Unknowns: v^{B_k} for k = 0..n, then g^{B_0}. The scale column (wheel
  // displacement) is kept separate and folded in at s = 1.
  const int dim = 3 * (n + 1) + 3;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(6 * n, dim);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(6 * n);
  Eigen::VectorXd s_col = Eigen::VectorXd::Zero(6 * n);

  for (int k = 0; k < n; ++k) {
    const double dt = imu[k].dt_sum;
    const Mat3 R_rel = rot_from_quat(imu[k].q);           // R_{B_{k+1}}^{B_k}
    const Mat3 C_k = R_chain[k].transpose();              // R_{B_0}^{B_k}
    const Vec3 z_alpha = imu[k].alpha + R_rel * p_ob - p_ob;
    const Vec3 z_beta = imu[k].beta;

    H.block<3, 3>(6 * k, 3 * k) = -Mat3::Identity() * dt;
    H.block<3, 3>(6 * k, 3 * (n + 1)) = 0.5 * C_k * dt * dt;
    s_col.segment<3>(6 * k) = R_ob * wheel[k].p;
    z.segment<3>(6 * k) = z_alpha;

    H.block<3, 3>(6 * k + 3, 3 * k) = -Mat3::Identity();
    H.block<3, 3>(6 * k + 3, 3 * (k + 1)) = R_rel;
    H.block<3, 3>(6 * k + 3, 3 * (n + 1)) = C_k * dt;
    z.segment<3>(6 * k + 3) = z_beta;
  }
  z -= s_col;   // s = 1

  const Eigen::VectorXd x =
      (H.transpose() * H).ldlt().solve(H.transpose() * z);
  if (!x.allFinite()) {
    throw InitializationError("velocity/gravity system is singular");
  }

  VelocityGravityResult out;
  const Vec3 g_raw = x.segment<3>(3 * (n + 1));
  const double g_norm = g_raw.norm();
  if (g_norm < 8.3 || g_norm > 11.3) {
    throw InitializationError("recovered gravity magnitude " +
                              std::to_string(g_norm) + " outside [8.3, 11.3]");
  }
  out.g_b0 = g_raw * (kGravityMag / g_norm);
  for (int k = 0; k <= n; ++k) out.v_body.push_back(x.segment<3>(3 * k));
  return out;
}

Quat attitude_from_gravity(const Vec3& g_body) {
  const Vec3 g_hat = g_body.normalized();
  const Vec3 z_hat = Vec3::UnitZ();
  const double c = g_hat.dot(z_hat);
  if (c > 1.0 - 1e-12) return Quat::Identity();
  if (c < -1.0 + 1e-12) return Quat(0.0, 1.0, 0.0, 0.0);   // upside down
  const Vec3 axis = g_hat.cross(z_hat).normalized();
  return quat_from_small_angle(axis * std::acos(std::clamp(c, -1.0, 1.0)));
}

MarginalPrior make_gauge_prior(std::int64_t kf_id, const KeyframeState& state) {
  MarginalPrior prior;
  prior.kf_ids.push_back(kf_id);
  prior.lin_states.push_back(state);
  Eigen::VectorXd w(15);
  // position, velocity, attitude (roll/pitch soft, yaw tight), biases
  w << 1e4, 1e4, 1e4, 2.0, 2.0, 2.0, 10.0, 10.0, 1e4, 2.0, 2.0, 2.0, 10.0, 10.0, 10.0;
  prior.sqrt_jac = w.asDiagonal();
  prior.sqrt_res = Eigen::VectorXd::Zero(15);
  return prior;
}

std::optional<SlidingWindow> Bootstrapper::feed(const FrameBundle& bundle) {
  if (!have_first_) {
    buf_.first_bundle = bundle;
    buf_.extrinsics = est_cfg_.extrinsics;
    have_first_ = true;
    return std::nullopt;
  }
  pending_.push_back(bundle);
  if (static_cast<int>(pending_.size()) < cfg_.bundles_per_interval) {
    return std::nullopt;
  }

  // Close an interval over the pending bundles.
  InitInterval iv;
  std::vector<ImuSample> imu_samples;
  std::vector<PreFusedWheelMeas> wheel_meas;
  for (const FrameBundle& b : pending_) {
    imu_samples.insert(imu_samples.end(), b.imu.begin(), b.imu.end());
    wheel_meas.insert(wheel_meas.end(), b.wheel.begin(), b.wheel.end());
  }
  iv.imu = integrate_imu_samples(imu_samples, Vec3::Zero(), Vec3::Zero(),
                                 est_cfg_.noise);
  iv.wheel = WheelPreintegration::make(Vec3::Zero(), est_cfg_.noise);
  for (const PreFusedWheelMeas& m : wheel_meas) {
    iv.wheel = wheel_preint_propagate(iv.wheel, m, est_cfg_.extrinsics);
    iv.wheel_yaw += m.dyaw;
  }
  iv.boundary_bundle = pending_.back();
  pending_.clear();
  if (iv.imu.dt_sum <= cfg_.min_interval_dt) {
    last_failure_ = "interval too short";
    return std::nullopt;
  }
  buf_.intervals.push_back(std::move(iv));
  if (static_cast<int>(buf_.intervals.size()) > cfg_.min_intervals) {
    // Roll the buffering window forward; the first boundary moves with it.
    buf_.first_bundle = buf_.intervals.front().boundary_bundle;
    buf_.intervals.erase(buf_.intervals.begin());
  }
  if (static_cast<int>(buf_.intervals.size()) < cfg_.min_intervals) {
    return std::nullopt;
  }

  try {
    bg_ = estimate_gyro_bias(buf_, cfg_);
    const VelocityGravityResult vg = init_velocity_gravity(buf_, bg_, cfg_);
    return assemble_window(vg);
  } catch (const InitializationError& e) {
    last_failure_ = e.what();
    return std::nullopt;
  }
}

SlidingWindow Bootstrapper::assemble_window(const VelocityGravityResult& vg) {
  const int n = static_cast<int>(buf_.intervals.size());
  const Mat3 R_ob = buf_.extrinsics.R_odom_in_body;
  const Vec3 p_ob = buf_.extrinsics.p_odom_in_body;

  SlidingWindow w;
  const Quat q0 = attitude_from_gravity(vg.g_b0);

  std::vector<ImuPreintegration> imu;
  std::vector<WheelPreintegration> wheel;
  for (const InitInterval& iv : buf_.intervals) {
    imu.push_back(repropagate(iv.imu, Vec3::Zero(), bg_));
    wheel.push_back(wheel_repropagate(iv.wheel, bg_, buf_.extrinsics));
  }

  std::vector<KeyframeState> states(n + 1);
  states[0].q = q0;
  states[0].p = Vec3::Zero();
  states[0].t = buf_.first_bundle.frame_t;
  for (int k = 0; k <= n; ++k) {
    if (k > 0) {
      const KeyframeState& prev = states[k - 1];
      const Mat3 R_prev = rot_from_quat(prev.q);
      const Mat3 R_rel = rot_from_quat(imu[k - 1].q);
      // Keyframe displacement from the wheel chain (Eq.-20 inverted).
      const Vec3 dp_body = R_ob * wheel[k - 1].p + p_ob - R_rel * p_ob;
      states[k].p = prev.p + R_prev * dp_body;
      states[k].q = quat_mul(prev.q, imu[k - 1].q);
      states[k].t = buf_.intervals[k - 1].boundary_bundle.frame_t;
    }
    states[k].v = rot_from_quat(states[k].q) * vg.v_body[k];
    states[k].bg = bg_;
    states[k].ba = Vec3::Zero();
  }

  for (int k = 0; k <= n; ++k) {
    WindowFrame f;
    f.id = k;
    f.state = states[k];
    f.is_keyframe = true;
    if (k > 0) {
      f.imu_pre = imu[k - 1];
      f.wheel_pre = wheel[k - 1];
    }
    w.frames.push_back(std::move(f));
  }

  // Feature tracks from the boundary bundles.
  auto add_obs = [&w](const FrameBundle& b, std::int64_t kf_id) {
    for (const FeatureObservation& obs : b.features) {
      auto it = w.tracks.find(obs.id);
      if (it == w.tracks.end()) {
        FeatureTrack t;
        t.id = obs.id;
        t.host_keyframe = kf_id;
        t.inv_depth = 0.0;
        t.obs[kf_id] = Vec2(obs.u, obs.v);
        w.tracks.emplace(obs.id, std::move(t));
      } else {
        it->second.obs[kf_id] = Vec2(obs.u, obs.v);
      }
    }
  };
  add_obs(buf_.first_bundle, 0);
  for (int k = 0; k < n; ++k) add_obs(buf_.intervals[k].boundary_bundle, k + 1);

  w.prior = make_gauge_prior(0, states[0]);
  return w;
}

}  // namespace viwo
