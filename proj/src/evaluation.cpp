#include "viwo/evaluation.hpp"

#include "viwo/rotation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace viwo {

namespace {

constexpr double kAlignTolerance = 0.010;   // s

// Nearest ground-truth pose within the alignment tolerance.
int nearest_index(const std::vector<TrajectoryPose>& gt, double t) {
  auto it = std::lower_bound(gt.begin(), gt.end(), t,
                             [](const TrajectoryPose& p, double v) { return p.t < v; });
  int best = -1;
  double best_dt = kAlignTolerance;
  for (int i : {static_cast<int>(it - gt.begin()) - 1, static_cast<int>(it - gt.begin())}) {
    if (i < 0 || i >= static_cast<int>(gt.size())) continue;
    const double dt = std::abs(gt[i].t - t);
    if (dt <= best_dt) {
      best_dt = dt;
      best = i;
    }
  }
  return best;
}

}  // namespace

DriftReport evaluate_drift(const std::vector<TrajectoryPose>& estimate,
                           const std::vector<TrajectoryPose>& groundtruth) {
  if (estimate.empty() || groundtruth.empty()) {
    throw DataError("evaluate_drift: empty trajectory");
  }

  // Aligned pairs (estimate index, gt index).
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < static_cast<int>(estimate.size()); ++i) {
    const int j = nearest_index(groundtruth, estimate[i].t);
    if (j >= 0) pairs.emplace_back(i, j);
  }
  if (pairs.empty()) {
    throw DataError("evaluate_drift: no timestamp overlap within 10 ms");
  }

  const TrajectoryPose& e0 = estimate[pairs.front().first];
  const TrajectoryPose& e1 = estimate[pairs.back().first];
  const TrajectoryPose& g0 = groundtruth[pairs.front().second];
  const TrajectoryPose& g1 = groundtruth[pairs.back().second];

  DriftReport r;
  const Vec3 est_disp = e1.p - e0.p;
  const Vec3 gt_disp = g1.p - g0.p;
  r.x_err = est_disp.x() - gt_disp.x();
  r.y_err = est_disp.y() - gt_disp.y();
  r.position_error = std::hypot(r.x_err, r.y_err);
  const double yaw_drift_est = wrap_angle(yaw_from_quat(e1.q) - yaw_from_quat(e0.q));
  const double yaw_drift_gt = wrap_angle(yaw_from_quat(g1.q) - yaw_from_quat(g0.q));
  r.heading_error_deg = wrap_angle(yaw_drift_est - yaw_drift_gt) * 180.0 / M_PI;

  // Path statistics over the aligned ground-truth span.
  const int ja = pairs.front().second;
  const int jb = pairs.back().second;
  for (int j = ja + 1; j <= jb; ++j) {
    r.cumulative_translation += (groundtruth[j].p - groundtruth[j - 1].p).norm();
    r.cumulative_rotation_deg +=
        std::abs(wrap_angle(yaw_from_quat(groundtruth[j].q) -
                            yaw_from_quat(groundtruth[j - 1].q))) *
        180.0 / M_PI;
  }
  r.operation_time = estimate[pairs.back().first].t - estimate[pairs.front().first].t;
  r.position_error_rate =
      r.cumulative_translation > 0 ? r.position_error / r.cumulative_translation : 0.0;

  double se = 0.0;
  for (const auto& [i, j] : pairs) {
    se += (estimate[i].p - groundtruth[j].p).squaredNorm();
  }
  r.ate_rmse = std::sqrt(se / pairs.size());
  return r;
}

std::string format_error_rate_percent(double position_error,
                                      double cumulative_translation) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f%%",
                100.0 * position_error / cumulative_translation);
  return buf;
}

std::string DriftReport::format() const {
  char buf[1024];
  std::snprintf(buf, sizeof(buf),
                "# heading_error = estimate - truth, yaw (ZYX), degrees\n"
                "x_err_m = %.6f\n"
                "y_err_m = %.6f\n"
                "position_error_m = %.6f\n"
                "position_error_rate = %.6f\n"
                "position_error_rate_percent = %s\n"
                "heading_error_deg = %.6f\n"
                "cumulative_translation_m = %.6f\n"
                "cumulative_rotation_deg = %.6f\n"
                "operation_time_s = %.3f\n"
                "ate_rmse_m = %.6f\n",
                x_err, y_err, position_error, position_error_rate,
                format_error_rate_percent(position_error, cumulative_translation).c_str(),
                heading_error_deg, cumulative_translation, cumulative_rotation_deg,
                operation_time, ate_rmse);
  return buf;
}

}  // namespace viwo
