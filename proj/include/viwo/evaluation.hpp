#pragma once

#include "viwo/csv_io.hpp"

#include <string>
#include <vector>

namespace viwo {

// Start-to-end drift in the Table I-III layout. Heading error is the signed
// yaw difference (estimate - truth) in degrees; position error is planar.
struct DriftReport {
  double x_err = 0.0;
  double y_err = 0.0;
  double position_error = 0.0;
  double position_error_rate = 0.0;   // fraction of cumulative translation
  double heading_error_deg = 0.0;
  double cumulative_translation = 0.0;
  double cumulative_rotation_deg = 0.0;
  double operation_time = 0.0;
  double ate_rmse = 0.0;              // supplementary

  std::string format() const;
};

DriftReport evaluate_drift(const std::vector<TrajectoryPose>& estimate,
                           const std::vector<TrajectoryPose>& groundtruth);

// The tables' arithmetic in isolation: error over distance as a percentage
// string with two decimals.
std::string format_error_rate_percent(double position_error,
                                      double cumulative_translation);

}  // namespace viwo
