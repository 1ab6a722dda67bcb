#pragma once

#include "viwo/rotation.hpp"
#include "viwo/sensor_types.hpp"
#include "viwo/state.hpp"

#include <stdexcept>
#include <vector>

namespace viwo {

using Mat15 = Eigen::Matrix<double, 15, 15>;
using Vec15 = Eigen::Matrix<double, 15, 1>;
using Mat15x30 = Eigen::Matrix<double, 15, 30>;

struct RejectedSample : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// First-order bias correction is invalid; caller must repropagate at the new
// reference biases.
struct RepropagationRequired : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoiseParams {
  double sigma_a = 0.02;      // accel white noise density, m/s^2/sqrt(Hz)
  double sigma_g = 0.002;     // gyro white noise density, rad/s/sqrt(Hz)
  double sigma_ba = 1e-4;     // accel bias random walk density
  double sigma_bg = 1e-5;     // gyro bias random walk density
  Vec3 sigma_wheel = Vec3(0.05, 0.05, 0.05);  // per-axis wheel displacement scale
  void validate() const;
};

// Bias shift magnitude beyond which the first-order correction is refused.
constexpr double kBiasCorrectionGuard = 0.1;

// Relative motion accumulated between two keyframes. Error-state order is
// [d_alpha, d_beta, d_theta, d_ba, d_bg]. Values are immutable between
// estimator iterations; propagation returns a new value.
struct ImuPreintegration {
  Vec3 alpha = Vec3::Zero();   // position delta in the B_k frame, m
  Vec3 beta = Vec3::Zero();    // velocity delta, m/s
  Quat q = Quat::Identity();   // rotation delta B_k -> current
  Vec3 ba_ref = Vec3::Zero();
  Vec3 bg_ref = Vec3::Zero();
  Mat15 cov = Mat15::Zero();
  Mat15 jac = Mat15::Identity();
  double dt_sum = 0.0;
  NoiseParams noise;
  std::vector<ImuSample> samples;   // retained for repropagation
  std::vector<double> dts;

  static ImuPreintegration make(const Vec3& ba, const Vec3& bg, const NoiseParams& n);

  bool within_correction_range(const Vec3& ba, const Vec3& bg) const {
    return (ba - ba_ref).norm() < kBiasCorrectionGuard &&
           (bg - bg_ref).norm() < kBiasCorrectionGuard;
  }
};

struct CorrectedImuDelta {
  Vec3 alpha;
  Vec3 beta;
  Quat q;
};

// One Euler step with the incoming sample's values; updates the covariance
// and the bias Jacobian alongside the nominal deltas.
ImuPreintegration propagate(const ImuPreintegration& pre, const ImuSample& sample,
                            double dt);

// Re-runs the whole accumulation at new reference biases.
ImuPreintegration repropagate(const ImuPreintegration& pre, const Vec3& ba,
                              const Vec3& bg);

// Integrates a timestamped sample list; consecutive duplicates (interpolated
// boundary markers) are skipped. The first sample only anchors the time axis.
ImuPreintegration integrate_imu_samples(const std::vector<ImuSample>& samples,
                                        const Vec3& ba, const Vec3& bg,
                                        const NoiseParams& noise);

// Joins two consecutive intervals into one, re-running at a's references.
ImuPreintegration imu_concat(const ImuPreintegration& a, const ImuPreintegration& b);

// First-order delta correction via the stored bias Jacobian blocks.
CorrectedImuDelta bias_corrected_delta(const ImuPreintegration& pre, const Vec3& ba,
                                       const Vec3& bg);

Vec15 imu_residual(const ImuPreintegration& pre, const KeyframeState& x_k,
                   const KeyframeState& x_k1, const Vec3& gravity);

// Jacobian w.r.t. [dp_k, dv_k, dtheta_k, dba_k, dbg_k,
//                  dp_k1, dv_k1, dtheta_k1, dba_k1, dbg_k1].
Mat15x30 imu_residual_jacobian(const ImuPreintegration& pre, const KeyframeState& x_k,
                               const KeyframeState& x_k1, const Vec3& gravity);

}  // namespace viwo
