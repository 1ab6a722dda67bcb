#include "viwo/estimator.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <set>

namespace viwo {

namespace {

constexpr double kEigClamp = 1e-10;

// Uninitialized depth sentinel; triangulation assigns a real value.
bool depth_valid(const FeatureTrack& t) { return t.inv_depth > 0.0; }

Eigen::Matrix<double, 15, 15> imu_sqrt_info(const ImuPreintegration& pre) {
  Mat15 cov = pre.cov;
  const double jitter = 1e-14 * std::max(1.0, cov.trace());
  cov.diagonal().array() += jitter;
  Eigen::LLT<Mat15> llt(cov);
  if (llt.info() != Eigen::Success) {
    cov.diagonal().array() += 1e6 * jitter;
    llt.compute(cov);
    if (llt.info() != Eigen::Success) {
      throw EstimatorError("imu covariance factorization failed");
    }
  }
  // L^-1 whitens: r' = L^-1 r.
  Mat15 Linv = Mat15::Identity();
  llt.matrixL().solveInPlace(Linv);
  return Linv;
}

Mat3 wheel_sqrt_info(const WheelPreintegration& pre) {
  Mat3 cov = wheel_residual_covariance(pre);
  cov.diagonal().array() += 1e-14 * std::max(1.0, cov.trace());
  Eigen::LLT<Mat3> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw EstimatorError("wheel covariance factorization failed");
  }
  Mat3 Linv = Mat3::Identity();
  llt.matrixL().solveInPlace(Linv);
  return Linv;
}

// State difference x [-] lin per keyframe, attitude as a local rotation vector.
Eigen::Matrix<double, 15, 1> state_boxminus(const KeyframeState& x,
                                            const KeyframeState& lin) {
  Eigen::Matrix<double, 15, 1> d;
  d.segment<3>(0) = x.p - lin.p;
  d.segment<3>(3) = x.v - lin.v;
  d.segment<3>(6) = quat_imag_doubled(quat_mul(quat_conj(lin.q), x.q));
  d.segment<3>(9) = x.ba - lin.ba;
  d.segment<3>(12) = x.bg - lin.bg;
  return d;
}

}  // namespace

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "fused") return FusionMode::kFused;
  if (s == "wheel-odom") return FusionMode::kWheelOdom;
  if (s == "wheel-inertial") return FusionMode::kWheelInertial;
  if (s == "visual-inertial") return FusionMode::kVisualInertial;
  throw std::invalid_argument("unknown fusion mode '" + s + "'");
}

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::kFused: return "fused";
    case FusionMode::kWheelOdom: return "wheel-odom";
    case FusionMode::kWheelInertial: return "wheel-inertial";
    case FusionMode::kVisualInertial: return "visual-inertial";
  }
  return "?";
}

int SlidingWindow::frame_index(std::int64_t id) const {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

SchurResult marginalize_system(const Eigen::MatrixXd& H, const Eigen::VectorXd& b,
                               const std::vector<int>& drop_indices) {
  const int n = static_cast<int>(H.rows());
  std::vector<bool> dropped(n, false);
  for (int i : drop_indices) {
    if (i < 0 || i >= n) throw EstimatorError("marginalize: drop index out of range");
    dropped[i] = true;
  }
  std::vector<int> kept;
  std::vector<int> drop;
  for (int i = 0; i < n; ++i) (dropped[i] ? drop : kept).push_back(i);

  SchurResult out;
  out.kept = kept;
  if (drop.empty()) {
    out.H = 0.5 * (H + H.transpose());
    out.b = b;
    return out;
  }

  const int na = static_cast<int>(drop.size());
  const int nb = static_cast<int>(kept.size());
  Eigen::MatrixXd Ha(na, na), Hab(na, nb), Hc(nb, nb);
  Eigen::VectorXd ba(na), bb(nb);
  for (int i = 0; i < na; ++i) {
    ba(i) = b(drop[i]);
    for (int j = 0; j < na; ++j) Ha(i, j) = H(drop[i], drop[j]);
    for (int j = 0; j < nb; ++j) Hab(i, j) = H(drop[i], kept[j]);
  }
  for (int i = 0; i < nb; ++i) {
    bb(i) = b(kept[i]);
    for (int j = 0; j < nb; ++j) Hc(i, j) = H(kept[i], kept[j]);
  }

  Ha = 0.5 * (Ha + Ha.transpose()).eval();
  const double scale = std::max(1.0, Ha.diagonal().cwiseAbs().maxCoeff());
  Ha.diagonal().array() += 1e-12 * scale;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(Ha);
  if (ldlt.info() != Eigen::Success ||
      ldlt.vectorD().minCoeff() < -1e-9 * scale) {
    throw EstimatorError("marginalization: drop block singular beyond regularization");
  }
  const Eigen::MatrixXd HaInvHab = ldlt.solve(Hab);
  out.H = Hc - Hab.transpose() * HaInvHab;
  out.H = 0.5 * (out.H + out.H.transpose()).eval();
  out.b = bb - HaInvHab.transpose() * ba;
  if (!out.H.allFinite() || !out.b.allFinite()) {
    throw EstimatorError("marginalization produced non-finite prior system");
  }
  return out;
}

void system_to_sqrt_factor(const Eigen::MatrixXd& H, const Eigen::VectorXd& b,
                           Eigen::MatrixXd* sqrt_jac, Eigen::VectorXd* sqrt_res) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()));
  Eigen::VectorXd evals = es.eigenvalues();
  Eigen::VectorXd s = evals.unaryExpr([](double v) { return v > kEigClamp ? v : 0.0; });
  Eigen::VectorXd s_sqrt = s.cwiseSqrt();
  Eigen::VectorXd s_inv_sqrt =
      s.unaryExpr([](double v) { return v > 0.0 ? 1.0 / std::sqrt(v) : 0.0; });
  *sqrt_jac = s_sqrt.asDiagonal() * es.eigenvectors().transpose();
  // Gradient of 0.5*||r0 + J d||^2 at d = 0 must reproduce -b.
  *sqrt_res = -(s_inv_sqrt.asDiagonal() * (es.eigenvectors().transpose() * b));
}

// ---------------------------------------------------------------------------
// Factor accumulation shared by the solver and the marginalization step.

namespace {

struct Assembly {
  Eigen::MatrixXd* H = nullptr;
  Eigen::VectorXd* b = nullptr;
  double* cost = nullptr;

  void add_block(const Eigen::MatrixXd& Jw, const Eigen::VectorXd& rw, double weight,
                 const std::vector<int>& cols) {
    if (cost) *cost += weight * rw.squaredNorm();
    if (!H) return;
    const Eigen::MatrixXd Hloc = weight * (Jw.transpose() * Jw);
    const Eigen::VectorXd bloc = weight * (Jw.transpose() * rw);
    const int m = static_cast<int>(cols.size());
    for (int i = 0; i < m; ++i) {
      if (cols[i] < 0) continue;
      (*b)(cols[i]) -= bloc(i);
      for (int j = 0; j < m; ++j) {
        if (cols[j] < 0) continue;
        (*this->H)(cols[i], cols[j]) += Hloc(i, j);
      }
    }
  }
};

std::vector<int> contiguous_cols(int start, int count) {
  std::vector<int> c(count);
  for (int i = 0; i < count; ++i) c[i] = start + i;
  return c;
}

}  // namespace

void Estimator::build_normal_equations(Eigen::MatrixXd* H, Eigen::VectorXd* b,
                                       double* cost,
                                       std::vector<std::int64_t>* feature_ids) const {
  const auto& frames = window_.frames;
  if (frames.size() < 2) throw EstimatorError("window has fewer than 2 keyframes");
  const int n_f = static_cast<int>(frames.size());

  std::vector<std::int64_t> feats;
  if (cfg_.use_vision()) {
    for (const auto& [id, track] : window_.tracks) {
      if (!depth_valid(track)) continue;
      if (window_.frame_index(track.host_keyframe) < 0) continue;
      int in_window = 0;
      for (const auto& [fid, px] : track.obs) {
        if (window_.frame_index(fid) >= 0) ++in_window;
      }
      if (in_window >= 2) feats.push_back(id);
    }
  }
  const int dim = 15 * n_f + static_cast<int>(feats.size());
  if (H) {
    H->setZero(dim, dim);
    b->setZero(dim);
  }
  if (cost) *cost = 0.0;
  if (feature_ids) *feature_ids = feats;

  Assembly acc{H, b, cost};

  // Prior term.
  if (!window_.prior.empty()) {
    const MarginalPrior& pr = window_.prior;
    const int np = static_cast<int>(pr.kf_ids.size());
    Eigen::VectorXd delta(15 * np);
    std::vector<int> cols;
    cols.reserve(15 * np);
    for (int k = 0; k < np; ++k) {
      const int fi = window_.frame_index(pr.kf_ids[k]);
      if (fi < 0) throw EstimatorError("prior references a state outside the window");
      delta.segment<15>(15 * k) = state_boxminus(frames[fi].state, pr.lin_states[k]);
      for (int j = 0; j < 15; ++j) cols.push_back(15 * fi + j);
    }
    const Eigen::VectorXd r_p = pr.sqrt_res + pr.sqrt_jac * delta;
    acc.add_block(pr.sqrt_jac, r_p, 1.0, cols);
  }

  // IMU and wheel interval factors.
  for (int i = 1; i < n_f; ++i) {
    const KeyframeState& xa = frames[i - 1].state;
    const KeyframeState& xb = frames[i].state;
    if (frames[i].imu_pre && frames[i].imu_pre->dt_sum > 0.0) {
      const ImuPreintegration& pre = *frames[i].imu_pre;
      const Vec15 r = imu_residual(pre, xa, xb, cfg_.gravity);
      if (!r.allFinite()) {
        throw EstimatorError("non-finite imu residual between frames " +
                             std::to_string(frames[i - 1].id) + " and " +
                             std::to_string(frames[i].id));
      }
      const Mat15 Linv = imu_sqrt_info(pre);
      const Vec15 rw = Linv * r;
      if (H) {
        const Mat15x30 Jw = Linv * imu_residual_jacobian(pre, xa, xb, cfg_.gravity);
        acc.add_block(Jw, rw, 1.0, contiguous_cols(15 * (i - 1), 30));
      } else if (cost) {
        *cost += rw.squaredNorm();
      }
    }
    if (cfg_.use_wheel() && frames[i].wheel_pre && frames[i].wheel_pre->dt_sum > 0.0) {
      const WheelPreintegration& pre = *frames[i].wheel_pre;
      const Vec3 r = wheel_residual(pre, xa, xb, cfg_.extrinsics);
      if (!r.allFinite()) {
        throw EstimatorError("non-finite wheel residual between frames " +
                             std::to_string(frames[i - 1].id) + " and " +
                             std::to_string(frames[i].id));
      }
      const Mat3 Linv = wheel_sqrt_info(pre);
      const Vec3 rw = Linv * r;
      const double s = rw.squaredNorm();
      const double w = huber_weight(s);
      if (H) {
        const Mat3x30 Jw = Linv * wheel_residual_jacobian(pre, xa, xb, cfg_.extrinsics);
        acc.add_block(Jw, rw, w, contiguous_cols(15 * (i - 1), 30));
        if (cost) *cost += huber_cost(s) - w * s;   // add_block already added w*s
      } else if (cost) {
        *cost += huber_cost(s);
      }
    }
  }

  // Visual factors.
  if (cfg_.use_vision()) {
    const double sigma = cfg_.camera.sphere_sigma();
    for (std::size_t fi = 0; fi < feats.size(); ++fi) {
      const FeatureTrack& track = window_.tracks.at(feats[fi]);
      const int hi = window_.frame_index(track.host_keyframe);
      const int feat_col = 15 * n_f + static_cast<int>(fi);
      for (const auto& [fid, px] : track.obs) {
        if (fid == track.host_keyframe) continue;
        const int ji = window_.frame_index(fid);
        if (ji < 0) continue;
        Vec2 r;
        Mat2x13 J;
        try {
          r = visual_residual(track, fid, frames[hi].state, frames[ji].state,
                              cfg_.extrinsics, cfg_.camera);
          if (H) {
            J = visual_jacobian(track, fid, frames[hi].state, frames[ji].state,
                                cfg_.extrinsics, cfg_.camera);
          }
        } catch (const DegenerateGeometry&) {
          continue;   // excluded, not fatal
        }
        if (!r.allFinite()) {
          throw EstimatorError("non-finite visual residual, feature " +
                               std::to_string(track.id) + " in frame " +
                               std::to_string(fid));
        }
        const Vec2 rw = r / sigma;
        const double s = rw.squaredNorm();
        const double w = huber_weight(s);
        if (H) {
          std::vector<int> cols(13);
          for (int k = 0; k < 3; ++k) {
            cols[k] = 15 * hi + k;
            cols[3 + k] = 15 * hi + 6 + k;
            cols[6 + k] = 15 * ji + k;
            cols[9 + k] = 15 * ji + 6 + k;
          }
          cols[12] = feat_col;
          acc.add_block(J / sigma, rw, w, cols);
          if (cost) *cost += huber_cost(s) - w * s;
        } else if (cost) {
          *cost += huber_cost(s);
        }
      }
    }
  }
}

double Estimator::evaluate_cost() const {
  double cost = 0.0;
  build_normal_equations(nullptr, nullptr, &cost, nullptr);
  return cost;
}

void Estimator::apply_step(const Eigen::VectorXd& dx,
                           const std::vector<std::int64_t>& feature_ids) {
  auto& frames = window_.frames;
  const int n_f = static_cast<int>(frames.size());
  for (int i = 0; i < n_f; ++i) {
    KeyframeState& x = frames[i].state;
    x.p += dx.segment<3>(15 * i);
    x.v += dx.segment<3>(15 * i + 3);
    x.q = quat_mul(x.q, quat_from_small_angle(dx.segment<3>(15 * i + 6)));
    x.ba += dx.segment<3>(15 * i + 9);
    x.bg += dx.segment<3>(15 * i + 12);
  }
  for (std::size_t j = 0; j < feature_ids.size(); ++j) {
    FeatureTrack& t = window_.tracks.at(feature_ids[j]);
    t.inv_depth = std::max(t.inv_depth + dx(15 * n_f + static_cast<int>(j)), 1e-4);
  }
}

void Estimator::repropagate_if_needed() {
  auto& frames = window_.frames;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const KeyframeState& xa = frames[i - 1].state;
    if (frames[i].imu_pre &&
        !frames[i].imu_pre->within_correction_range(xa.ba, xa.bg)) {
      frames[i].imu_pre = repropagate(*frames[i].imu_pre, xa.ba, xa.bg);
    }
    if (frames[i].wheel_pre && !frames[i].wheel_pre->within_correction_range(xa.bg)) {
      frames[i].wheel_pre =
          wheel_repropagate(*frames[i].wheel_pre, xa.bg, cfg_.extrinsics);
    }
  }
}

SolveStats Estimator::solve_window() {
  SolveStats stats;
  if (window_.frames.size() < 2) return stats;
  ensure_feature_depths();
  repropagate_if_needed();

  double lambda = 1e-8;
  Eigen::MatrixXd H;
  Eigen::VectorXd b;
  std::vector<std::int64_t> feat_ids;
  double cost = 0.0;

  build_normal_equations(&H, &b, &cost, &feat_ids);
  stats.initial_cost = cost;
  stats.accepted_costs.push_back(cost);
  if (!std::isfinite(cost)) throw DivergenceError("non-finite cost at solve entry");

  for (int iter = 0; iter < cfg_.max_iterations; ++iter) {
    stats.iterations = iter + 1;
    bool accepted = false;
    for (int attempt = 0; attempt < 10 && !accepted; ++attempt) {
      Eigen::MatrixXd Hd = H;
      Hd.diagonal().array() += lambda;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(Hd);
      Eigen::VectorXd dx = ldlt.solve(b);
      if (!dx.allFinite()) {
        lambda = std::max(lambda * 10.0, 1e-10);
        continue;
      }
      if (dx.norm() < cfg_.step_norm_tol) {
        stats.final_cost = cost;
        check_divergence();
        return stats;
      }
      // Trial step with rollback on cost increase; states and depths are the
      // only quantities the step touches.
      std::vector<KeyframeState> state_backup;
      state_backup.reserve(window_.frames.size());
      for (const WindowFrame& f : window_.frames) state_backup.push_back(f.state);
      std::vector<double> depth_backup;
      depth_backup.reserve(feat_ids.size());
      for (std::int64_t id : feat_ids) {
        depth_backup.push_back(window_.tracks.at(id).inv_depth);
      }

      apply_step(dx, feat_ids);
      const double new_cost = evaluate_cost();
      if (std::isfinite(new_cost) && new_cost < cost) {
        accepted = true;
        lambda = std::max(lambda * 0.1, 1e-12);
        const double drop = cost - new_cost;
        cost = new_cost;
        repropagate_if_needed();
        build_normal_equations(&H, &b, &cost, &feat_ids);
        stats.accepted_costs.push_back(cost);
        if (drop < cfg_.rel_cost_tol * std::max(cost, 1e-30)) {
          stats.final_cost = cost;
          check_divergence();
          return stats;
        }
      } else {
        for (std::size_t i = 0; i < window_.frames.size(); ++i) {
          window_.frames[i].state = state_backup[i];
        }
        for (std::size_t i = 0; i < feat_ids.size(); ++i) {
          window_.tracks.at(feat_ids[i]).inv_depth = depth_backup[i];
        }
        lambda *= 10.0;
      }
    }
    if (!accepted) break;   // damping exhausted; current state is the best found
  }
  stats.final_cost = cost;
  check_divergence();
  return stats;
}

void Estimator::check_divergence() const {
  for (const WindowFrame& f : window_.frames) {
    if (!f.state.biases_plausible() || !f.state.p.allFinite()) {
      throw DivergenceError("bias bound exceeded on frame " + std::to_string(f.id));
    }
  }
}

// ---------------------------------------------------------------------------
// Window management.

void Estimator::ensure_feature_depths() {
  for (auto& [id, track] : window_.tracks) {
    if (depth_valid(track)) continue;
    const int hi = window_.frame_index(track.host_keyframe);
    if (hi < 0) continue;
    // Use the farthest observation for the triangulation baseline.
    std::int64_t other = -1;
    for (const auto& [fid, px] : track.obs) {
      if (fid != track.host_keyframe && window_.frame_index(fid) >= 0) other = fid;
    }
    if (other < 0) continue;
    const int oi = window_.frame_index(other);
    const KeyframeState& xh = window_.frames[hi].state;
    const KeyframeState& xo = window_.frames[oi].state;
    const Extrinsics& ex = cfg_.extrinsics;
    const Mat3 Rh = rot_from_quat(xh.q);
    const Mat3 Ro = rot_from_quat(xo.q);
    const Vec3 ch = Rh * ex.p_cam_in_body + xh.p;
    const Vec3 co = Ro * ex.p_cam_in_body + xo.p;
    const Vec3 dh = Rh * ex.R_cam_in_body *
                    back_project(cfg_.camera, track.obs.at(track.host_keyframe));
    const Vec3 dob = Ro * ex.R_cam_in_body * back_project(cfg_.camera, track.obs.at(other));
    const auto [pt, parallax] = triangulate_midpoint(ch, dh, co, dob);
    if (parallax < 1e-3) {
      track.inv_depth = 1.0 / 5.0;   // low-parallax fallback
      continue;
    }
    const double range = (pt - ch).norm();
    track.inv_depth = (range > 0.05 && std::isfinite(range)) ? 1.0 / range : 1.0 / 5.0;
  }
}

bool Estimator::decide_keyframe(const FrameBundle& bundle) const {
  // Reference: latest confirmed keyframe in the window.
  int ref = -1;
  for (int i = static_cast<int>(window_.frames.size()) - 1; i >= 0; --i) {
    if (window_.frames[i].is_keyframe) {
      ref = i;
      break;
    }
  }
  if (ref < 0) return true;
  const std::int64_t ref_id = window_.frames[ref].id;

  double parallax_sum = 0.0;
  int co_tracked = 0;
  for (const FeatureObservation& obs : bundle.features) {
    auto it = window_.tracks.find(obs.id);
    if (it == window_.tracks.end()) continue;
    auto po = it->second.obs.find(ref_id);
    if (po == it->second.obs.end()) continue;
    parallax_sum += (Vec2(obs.u, obs.v) - po->second).norm();
    ++co_tracked;
  }
  if (co_tracked < cfg_.keyframe_min_tracked) return true;
  return (parallax_sum / co_tracked) > cfg_.keyframe_parallax_px;
}

void Estimator::merge_observations(const FrameBundle& bundle, std::int64_t frame_id) {
  if (!cfg_.use_vision()) return;
  for (const FeatureObservation& obs : bundle.features) {
    auto it = window_.tracks.find(obs.id);
    if (it == window_.tracks.end()) {
      FeatureTrack t;
      t.id = obs.id;
      t.host_keyframe = frame_id;
      t.inv_depth = 0.0;   // triangulated later
      t.obs[frame_id] = Vec2(obs.u, obs.v);
      window_.tracks.emplace(obs.id, std::move(t));
    } else {
      it->second.obs[frame_id] = Vec2(obs.u, obs.v);
    }
  }
}

void Estimator::add_frame(const FrameBundle& bundle) {
  auto& frames = window_.frames;
  if (!frames.empty() && bundle.frame_t <= frames.back().state.t) {
    throw EstimatorError("bundle at t=" + std::to_string(bundle.frame_t) +
                         " is not after the newest keyframe");
  }

  WindowFrame f;
  f.id = allocate_frame_id();
  f.is_keyframe = true;

  if (frames.empty()) {
    f.state.t = bundle.frame_t;
    frames.push_back(std::move(f));
    merge_observations(bundle, frames.back().id);
    return;
  }

  const KeyframeState& prev = frames.back().state;
  ImuPreintegration imu_pre =
      integrate_imu_samples(bundle.imu, prev.ba, prev.bg, cfg_.noise);
  WheelPreintegration wheel_pre = WheelPreintegration::make(prev.bg, cfg_.noise);
  for (const PreFusedWheelMeas& m : bundle.wheel) {
    wheel_pre = wheel_preint_propagate(wheel_pre, m, cfg_.extrinsics);
  }

  // Predicted state from the IMU chain.
  const double dt = imu_pre.dt_sum;
  const Mat3 R_prev = rot_from_quat(prev.q);
  f.state.p = prev.p + prev.v * dt - 0.5 * cfg_.gravity * dt * dt + R_prev * imu_pre.alpha;
  f.state.v = prev.v - cfg_.gravity * dt + R_prev * imu_pre.beta;
  f.state.q = quat_mul(prev.q, imu_pre.q);
  f.state.ba = prev.ba;
  f.state.bg = prev.bg;
  f.state.t = bundle.frame_t;
  f.is_keyframe = decide_keyframe(bundle);
  f.imu_pre = std::move(imu_pre);
  f.wheel_pre = std::move(wheel_pre);
  frames.push_back(std::move(f));
  merge_observations(bundle, frames.back().id);

  solve_window();
  slide();
}

void Estimator::slide() {
  auto& frames = window_.frames;
  if (frames.size() < 3) return;
  if (!frames.back().is_keyframe) {
    discard_second_newest();
    return;
  }
  if (static_cast<int>(frames.size()) > cfg_.window_size) {
    marginalize_oldest();
  }
}

void Estimator::marginalize_oldest() {
  auto& frames = window_.frames;
  const WindowFrame& f0 = frames.front();
  const int n_f = static_cast<int>(frames.size());

  // Tracks hosted at the dropped frame: their depths are eliminated with it.
  std::vector<std::int64_t> dropped_tracks;
  if (cfg_.use_vision()) {
    for (const auto& [id, track] : window_.tracks) {
      if (track.host_keyframe == f0.id && depth_valid(track)) {
        int in_window = 0;
        for (const auto& [fid, px] : track.obs) {
          if (window_.frame_index(fid) >= 0) ++in_window;
        }
        if (in_window >= 2) dropped_tracks.push_back(id);
      }
    }
  }

  const int dim = 15 * n_f + static_cast<int>(dropped_tracks.size());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
  Assembly acc{&H, &b, nullptr};

  // Prior.
  if (!window_.prior.empty()) {
    const MarginalPrior& pr = window_.prior;
    const int np = static_cast<int>(pr.kf_ids.size());
    Eigen::VectorXd delta(15 * np);
    std::vector<int> cols;
    for (int k = 0; k < np; ++k) {
      const int fi = window_.frame_index(pr.kf_ids[k]);
      if (fi < 0) throw EstimatorError("prior references a state outside the window");
      delta.segment<15>(15 * k) = state_boxminus(frames[fi].state, pr.lin_states[k]);
      for (int j = 0; j < 15; ++j) cols.push_back(15 * fi + j);
    }
    acc.add_block(pr.sqrt_jac, pr.sqrt_res + pr.sqrt_jac * delta, 1.0, cols);
  }

  // Interval factors attached to the dropped frame.
  if (frames[1].imu_pre && frames[1].imu_pre->dt_sum > 0.0) {
    const ImuPreintegration& pre = *frames[1].imu_pre;
    const Mat15 Linv = imu_sqrt_info(pre);
    acc.add_block(Linv * imu_residual_jacobian(pre, frames[0].state, frames[1].state,
                                               cfg_.gravity),
                  Linv * imu_residual(pre, frames[0].state, frames[1].state,
                                      cfg_.gravity),
                  1.0, contiguous_cols(0, 30));
  }
  if (cfg_.use_wheel() && frames[1].wheel_pre && frames[1].wheel_pre->dt_sum > 0.0) {
    const WheelPreintegration& pre = *frames[1].wheel_pre;
    const Mat3 Linv = wheel_sqrt_info(pre);
    const Vec3 rw =
        Linv * wheel_residual(pre, frames[0].state, frames[1].state, cfg_.extrinsics);
    acc.add_block(Linv * wheel_residual_jacobian(pre, frames[0].state, frames[1].state,
                                                 cfg_.extrinsics),
                  rw, huber_weight(rw.squaredNorm()), contiguous_cols(0, 30));
  }

  // Visual factors of the dropped tracks.
  const double sigma = cfg_.camera.sphere_sigma();
  for (std::size_t k = 0; k < dropped_tracks.size(); ++k) {
    const FeatureTrack& track = window_.tracks.at(dropped_tracks[k]);
    const int feat_col = 15 * n_f + static_cast<int>(k);
    for (const auto& [fid, px] : track.obs) {
      if (fid == track.host_keyframe) continue;
      const int ji = window_.frame_index(fid);
      if (ji < 0) continue;
      try {
        const Vec2 rw =
            visual_residual(track, fid, frames[0].state, frames[ji].state,
                            cfg_.extrinsics, cfg_.camera) /
            sigma;
        const Mat2x13 Jw =
            visual_jacobian(track, fid, frames[0].state, frames[ji].state,
                            cfg_.extrinsics, cfg_.camera) /
            sigma;
        std::vector<int> cols(13);
        for (int c = 0; c < 3; ++c) {
          cols[c] = c;           // host is frame 0
          cols[3 + c] = 6 + c;
          cols[6 + c] = 15 * ji + c;
          cols[9 + c] = 15 * ji + 6 + c;
        }
        cols[12] = feat_col;
        acc.add_block(Jw, rw, huber_weight(rw.squaredNorm()), cols);
      } catch (const DegenerateGeometry&) {
        continue;
      }
    }
  }

  // Drop the first frame block and every eliminated depth.
  std::vector<int> drop = contiguous_cols(0, 15);
  for (std::size_t k = 0; k < dropped_tracks.size(); ++k) {
    drop.push_back(15 * n_f + static_cast<int>(k));
  }
  const SchurResult red = marginalize_system(H, b, drop);

  // Reduced system covers frames 1..n-1; keep only keyframe columns.
  MarginalPrior prior;
  prior.kf_ids.reserve(n_f - 1);
  for (int i = 1; i < n_f; ++i) {
    prior.kf_ids.push_back(frames[i].id);
    prior.lin_states.push_back(frames[i].state);
  }
  system_to_sqrt_factor(red.H, red.b, &prior.sqrt_jac, &prior.sqrt_res);
  window_.prior = std::move(prior);

  // Remove the frame, its hosted tracks, and stale observations.
  finished_.push_back(f0.state);
  const std::int64_t dropped_id = f0.id;
  frames.erase(frames.begin());
  for (auto it = window_.tracks.begin(); it != window_.tracks.end();) {
    if (it->second.host_keyframe == dropped_id) {
      it = window_.tracks.erase(it);
    } else {
      it->second.obs.erase(dropped_id);
      ++it;
    }
  }
}

void Estimator::discard_second_newest() {
  auto& frames = window_.frames;
  const int idx = static_cast<int>(frames.size()) - 2;
  if (idx < 1) return;
  WindowFrame& victim = frames[idx];
  WindowFrame& tail = frames.back();

  // The prior may not reference the discarded frame; reduce it if it does.
  const int in_prior =
      std::count(window_.prior.kf_ids.begin(), window_.prior.kf_ids.end(), victim.id);
  if (in_prior > 0) {
    const MarginalPrior& pr = window_.prior;
    const int np = static_cast<int>(pr.kf_ids.size());
    const Eigen::MatrixXd H0 = pr.sqrt_jac.transpose() * pr.sqrt_jac;
    const Eigen::VectorXd b0 = -pr.sqrt_jac.transpose() * pr.sqrt_res;
    std::vector<int> drop;
    MarginalPrior reduced;
    for (int k = 0; k < np; ++k) {
      if (pr.kf_ids[k] == victim.id) {
        for (int j = 0; j < 15; ++j) drop.push_back(15 * k + j);
      } else {
        reduced.kf_ids.push_back(pr.kf_ids[k]);
        reduced.lin_states.push_back(pr.lin_states[k]);
      }
    }
    const SchurResult red = marginalize_system(H0, b0, drop);
    system_to_sqrt_factor(red.H, red.b, &reduced.sqrt_jac, &reduced.sqrt_res);
    window_.prior = std::move(reduced);
  }

  // Concatenate the two preintegration intervals.
  if (victim.imu_pre && tail.imu_pre) {
    tail.imu_pre = imu_concat(*victim.imu_pre, *tail.imu_pre);
  }
  if (victim.wheel_pre && tail.wheel_pre) {
    tail.wheel_pre = wheel_concat(*victim.wheel_pre, *tail.wheel_pre, cfg_.extrinsics);
  }

  // Visual factors of the discarded frame are dropped, not marginalized.
  const std::int64_t victim_id = victim.id;
  for (auto it = window_.tracks.begin(); it != window_.tracks.end();) {
    FeatureTrack& t = it->second;
    t.obs.erase(victim_id);
    if (t.host_keyframe == victim_id) {
      if (t.obs.empty()) {
        it = window_.tracks.erase(it);
        continue;
      }
      t.host_keyframe = t.obs.begin()->first;
      t.inv_depth = 0.0;   // re-triangulated at the new host
    }
    ++it;
  }
  frames.erase(frames.begin() + idx);
}

void Estimator::install_window(SlidingWindow w) {
  window_ = std::move(w);
  for (const WindowFrame& f : window_.frames) {
    next_frame_id_ = std::max(next_frame_id_, f.id + 1);
  }
}

std::vector<KeyframeState> Estimator::full_trajectory() const {
  std::vector<KeyframeState> out = finished_;
  for (const WindowFrame& f : window_.frames) out.push_back(f.state);
  return out;
}

Vec3 feature_world_point(const FeatureTrack& track, const KeyframeState& host,
                         const Extrinsics& extr, const CameraModel& cam) {
  const Vec3 p_c =
      back_project(cam, track.obs.at(track.host_keyframe)) / track.inv_depth;
  return rot_from_quat(host.q) * (extr.R_cam_in_body * p_c + extr.p_cam_in_body) +
         host.p;
}

std::pair<Vec3, double> triangulate_midpoint(const Vec3& center_a, const Vec3& dir_a,
                                             const Vec3& center_b, const Vec3& dir_b) {
  const Vec3 da = dir_a.normalized();
  const Vec3 db = dir_b.normalized();
  const double parallax = std::acos(std::clamp(da.dot(db), -1.0, 1.0));
  // min_{s,u} || (ca + s da) - (cb + u db) ||^2
  Eigen::Matrix2d A;
  A << 1.0, -da.dot(db), da.dot(db), -1.0;
  const Vec3 d = center_b - center_a;
  const Vec2 rhs(da.dot(d), db.dot(d));
  if (std::abs(A.determinant()) < 1e-12) {
    return {center_a + 5.0 * da, 0.0};
  }
  const Vec2 su = A.inverse() * rhs;
  const Vec3 pa = center_a + su(0) * da;
  const Vec3 pb = center_b + su(1) * db;
  return {0.5 * (pa + pb), parallax};
}

}  // namespace viwo
