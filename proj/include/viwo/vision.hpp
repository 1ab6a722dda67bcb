#pragma once

#include "viwo/rotation.hpp"
#include "viwo/state.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>

namespace viwo {

using Mat2x13 = Eigen::Matrix<double, 2, 13>;

struct DegenerateGeometry : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CameraModel {
  double fx = 460.0;
  double fy = 460.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
  double sigma_px = 1.5;   // isotropic pixel noise

  // Pixel noise mapped onto the unit sphere.
  double sphere_sigma() const { return sigma_px / (0.5 * (fx + fy)); }
};

// Landmark anchored at its first observing keyframe with inverse range lambda
// along the host bearing. Needs >= 2 observations to contribute residuals.
struct FeatureTrack {
  std::int64_t id = -1;
  std::int64_t host_keyframe = -1;
  double inv_depth = 0.2;
  std::map<std::int64_t, Vec2> obs;   // keyframe id -> pixel
};

// Unit-norm bearing of a pixel.
Vec3 back_project(const CameraModel& cam, const Vec2& px);

Vec2 project(const CameraModel& cam, const Vec3& p_cam);

// Deterministic orthonormal pair spanning the tangent plane at n.
std::pair<Vec3, Vec3> tangent_basis(const Vec3& n);

// Landmark position in the observing camera j, via host camera i.
Vec3 transform_to_observer(const FeatureTrack& track, const Vec2& host_px,
                           const KeyframeState& x_i, const KeyframeState& x_j,
                           const Extrinsics& extr, const CameraModel& cam);

// Unit-sphere reprojection error projected on the observed bearing's tangent
// basis. Throws DegenerateGeometry when the transformed point collapses.
Vec2 visual_residual(const FeatureTrack& track, std::int64_t obs_frame,
                     const KeyframeState& x_i, const KeyframeState& x_j,
                     const Extrinsics& extr, const CameraModel& cam);

// Jacobian w.r.t. [dp_i, dtheta_i, dp_j, dtheta_j, dlambda].
Mat2x13 visual_jacobian(const FeatureTrack& track, std::int64_t obs_frame,
                        const KeyframeState& x_i, const KeyframeState& x_j,
                        const Extrinsics& extr, const CameraModel& cam);

// IRLS weight for Huber with knee 1 on the Mahalanobis norm.
double huber_weight(double squared_mahalanobis);

// Robust cost rho(s) matching huber_weight.
double huber_cost(double squared_mahalanobis);

}  // namespace viwo
