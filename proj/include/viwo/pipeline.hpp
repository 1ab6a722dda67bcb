#pragma once

#include "viwo/sensor_types.hpp"

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace viwo {

struct PipelineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  double cam_hz = 10.0;
  double wheel_hz = 100.0;
  double imu_hz = 200.0;
  double gap_factor = 1.5;   // gaps above gap_factor / rate are errors
};

// Keeps a subset of frame timestamps so consecutive kept frames are at least
// (1/target_hz)*(1-1e-6) apart. The first frame is always kept.
std::vector<double> downsample_frames(const std::vector<double>& frame_times,
                                      double target_hz);

// Componentwise linear interpolation; exact sample within 1e-9 s is returned
// as-is. Throws PipelineError if t is outside the sampled range.
ImuSample interpolate_imu(const std::vector<ImuSample>& samples, double t);

WheelSample interpolate_wheel(const std::vector<WheelSample>& samples, double t);

// One PreFusedWheelMeas per consecutive wheel-sample pair covering
// [span_t0, span_t1]; wheel samples are interpolated at the span boundaries.
// Displacement uses the pair's right-endpoint speeds over dt (Eq.-13 step in
// the body frame); avg_accel/avg_gyro are the means of the IMU interpolated at
// the pair endpoints.
std::vector<PreFusedWheelMeas> prefuse(const std::vector<WheelSample>& wheel,
                                       const std::vector<ImuSample>& imu,
                                       double span_t0, double span_t1,
                                       const PipelineConfig& cfg = {});

// Full pipeline: downsample frames, slice IMU and pre-fused wheel streams into
// per-frame bundles with interpolated boundary samples. feature_rows maps a
// raw frame timestamp to its observations (may be empty).
std::vector<FrameBundle> build_bundles(
    const std::vector<double>& frame_times,
    const std::map<double, std::vector<FeatureObservation>>& feature_rows,
    const std::vector<ImuSample>& imu,
    const std::vector<WheelSample>& wheel,
    const PipelineConfig& cfg = {});

}  // namespace viwo
