#pragma once

#include "viwo/imu_preintegration.hpp"
#include "viwo/pipeline.hpp"
#include "viwo/state.hpp"
#include "viwo/vision.hpp"
#include "viwo/wheel_odometry.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace viwo {

struct EstimatorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergenceError : EstimatorError {
  using EstimatorError::EstimatorError;
};

// Linearized constraint left behind by marginalized states:
// cost = || sqrt_res + sqrt_jac * (x [-] lin) ||^2 over the retained keyframes.
// The Jacobian is frozen at the marginalization-time linearization point.
struct MarginalPrior {
  std::vector<std::int64_t> kf_ids;
  std::vector<KeyframeState> lin_states;
  Eigen::MatrixXd sqrt_jac;
  Eigen::VectorXd sqrt_res;

  bool empty() const { return sqrt_jac.size() == 0; }
};

// Schur elimination of the drop block, Hc - Hb^T Ha^-1 Hb. drop_indices may be
// empty (identity transform). Throws EstimatorError if the drop block stays
// singular after small regularization.
struct SchurResult {
  Eigen::MatrixXd H;
  Eigen::VectorXd b;
  std::vector<int> kept;   // original indices of the reduced system rows
};
SchurResult marginalize_system(const Eigen::MatrixXd& H, const Eigen::VectorXd& b,
                               const std::vector<int>& drop_indices);

// Eigen-decomposition square root of a reduced system; eigenvalues below
// 1e-10 are treated as exact zeros (gauge directions).
void system_to_sqrt_factor(const Eigen::MatrixXd& H, const Eigen::VectorXd& b,
                           Eigen::MatrixXd* sqrt_jac, Eigen::VectorXd* sqrt_res);

enum class FusionMode { kFused, kWheelOdom, kWheelInertial, kVisualInertial };

FusionMode fusion_mode_from_string(const std::string& s);
std::string to_string(FusionMode m);

struct EstimatorConfig {
  int window_size = 10;           // keyframes kept in the window
  double keyframe_parallax_px = 10.0;
  int keyframe_min_tracked = 20;
  int max_iterations = 10;
  double step_norm_tol = 1e-8;
  double rel_cost_tol = 1e-9;
  FusionMode mode = FusionMode::kFused;
  NoiseParams noise;
  Extrinsics extrinsics;
  CameraModel camera;
  Vec3 gravity = gravity_world();

  bool use_vision() const {
    return mode == FusionMode::kFused || mode == FusionMode::kVisualInertial;
  }
  bool use_wheel() const {
    return mode == FusionMode::kFused || mode == FusionMode::kWheelInertial;
  }
};

struct WindowFrame {
  std::int64_t id = -1;
  KeyframeState state;
  bool is_keyframe = true;
  // Preintegrations covering (previous frame, this frame]; absent on the first.
  std::optional<ImuPreintegration> imu_pre;
  std::optional<WheelPreintegration> wheel_pre;
};

struct SlidingWindow {
  std::vector<WindowFrame> frames;
  std::map<std::int64_t, FeatureTrack> tracks;
  MarginalPrior prior;

  int frame_index(std::int64_t id) const;
};

struct SolveStats {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<double> accepted_costs;
};

class Estimator {
 public:
  explicit Estimator(const EstimatorConfig& cfg) : cfg_(cfg) { cfg_.noise.validate(); }

  // Appends the bundle as a tentative frame, optimizes, and slides. States
  // leaving the window are appended to the finished-pose log.
  void add_frame(const FrameBundle& bundle);

  // Damped Gauss-Newton over the current window.
  SolveStats solve_window();

  // Normal equations of the full window at the current states. State order:
  // 15 per frame [dp dv dtheta dba dbg], then one inverse-depth column per
  // active track (returned in feature_ids).
  void build_normal_equations(Eigen::MatrixXd* H, Eigen::VectorXd* b, double* cost,
                              std::vector<std::int64_t>* feature_ids) const;

  double evaluate_cost() const;

  void slide();

  // Installs an externally initialized window (from the bootstrap).
  void install_window(SlidingWindow w);

  const SlidingWindow& window() const { return window_; }
  SlidingWindow& mutable_window() { return window_; }
  const EstimatorConfig& config() const { return cfg_; }

  // Keyframe poses already pushed out of the window plus, on demand, the
  // current window contents.
  const std::vector<KeyframeState>& finished_poses() const { return finished_; }
  std::vector<KeyframeState> full_trajectory() const;

 private:
  void merge_observations(const FrameBundle& bundle, std::int64_t frame_id);
  bool decide_keyframe(const FrameBundle& bundle) const;
  void marginalize_oldest();
  void discard_second_newest();
  void apply_step(const Eigen::VectorXd& dx,
                  const std::vector<std::int64_t>& feature_ids);
  void repropagate_if_needed();
  void ensure_feature_depths();
  void check_divergence() const;

  EstimatorConfig cfg_;
  SlidingWindow window_;
  std::vector<KeyframeState> finished_;
  std::int64_t next_frame_id_ = 0;

 public:
  std::int64_t allocate_frame_id() { return next_frame_id_++; }
};

// Landmark world position implied by a track's host observation and depth.
Vec3 feature_world_point(const FeatureTrack& track, const KeyframeState& host,
                         const Extrinsics& extr, const CameraModel& cam);

// Midpoint triangulation of two bearings; returns the world point and the ray
// parallax angle in radians.
std::pair<Vec3, double> triangulate_midpoint(const Vec3& center_a, const Vec3& dir_a,
                                             const Vec3& center_b, const Vec3& dir_b);

}  // namespace viwo
