#include "viwo/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace viwo {

namespace {

constexpr double kTimeEps = 1e-9;

template <typename Sample>
void check_gaps(const std::vector<Sample>& s, double nominal_hz, double gap_factor,
                const char* name) {
  const double max_gap = gap_factor / nominal_hz;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const double gap = s[i].t - s[i - 1].t;
    if (gap > max_gap + kTimeEps) {
      throw PipelineError(std::string(name) + " stream gap of " + std::to_string(gap) +
                          " s in [" + std::to_string(s[i - 1].t) + ", " +
                          std::to_string(s[i].t) + "]");
    }
  }
}

// Index of the sample bracketing t from the left: s[i].t <= t <= s[i+1].t.
template <typename Sample>
std::size_t bracket(const std::vector<Sample>& s, double t, const char* name) {
  if (s.size() < 1 || t < s.front().t - kTimeEps || t > s.back().t + kTimeEps) {
    throw PipelineError(std::string(name) + ": t=" + std::to_string(t) +
                        " outside sampled range, extrapolation refused");
  }
  auto it = std::upper_bound(s.begin(), s.end(), t,
                             [](double v, const Sample& x) { return v < x.t; });
  std::size_t i = static_cast<std::size_t>(it - s.begin());
  if (i > 0) --i;
  if (i + 1 >= s.size()) i = s.size() - 2;
  return i;
}

}  // namespace

std::vector<double> downsample_frames(const std::vector<double>& frame_times,
                                      double target_hz) {
  std::vector<double> kept;
  if (frame_times.empty()) return kept;
  const double min_dt = (1.0 / target_hz) * (1.0 - 1e-6);
  kept.push_back(frame_times.front());
  for (double t : frame_times) {
    if (t - kept.back() >= min_dt) kept.push_back(t);
  }
  return kept;
}

ImuSample interpolate_imu(const std::vector<ImuSample>& samples, double t) {
  if (samples.empty()) throw PipelineError("interpolate_imu: empty stream");
  if (samples.size() == 1) {
    if (std::abs(samples[0].t - t) <= kTimeEps) return samples[0];
    throw PipelineError("interpolate_imu: single sample does not bracket t");
  }
  const std::size_t i = bracket(samples, t, "interpolate_imu");
  const ImuSample& a = samples[i];
  const ImuSample& b = samples[i + 1];
  if (std::abs(a.t - t) <= kTimeEps) return a;
  if (std::abs(b.t - t) <= kTimeEps) return b;
  const double w = (t - a.t) / (b.t - a.t);
  ImuSample out;
  out.t = t;
  out.accel = (1.0 - w) * a.accel + w * b.accel;
  out.gyro = (1.0 - w) * a.gyro + w * b.gyro;
  return out;
}

WheelSample interpolate_wheel(const std::vector<WheelSample>& samples, double t) {
  if (samples.empty()) throw PipelineError("interpolate_wheel: empty stream");
  if (samples.size() == 1) {
    if (std::abs(samples[0].t - t) <= kTimeEps) return samples[0];
    throw PipelineError("interpolate_wheel: single sample does not bracket t");
  }
  const std::size_t i = bracket(samples, t, "interpolate_wheel");
  const WheelSample& a = samples[i];
  const WheelSample& b = samples[i + 1];
  if (std::abs(a.t - t) <= kTimeEps) return a;
  if (std::abs(b.t - t) <= kTimeEps) return b;
  const double w = (t - a.t) / (b.t - a.t);
  WheelSample out;
  out.t = t;
  out.vx = (1.0 - w) * a.vx + w * b.vx;
  out.vy = (1.0 - w) * a.vy + w * b.vy;
  out.omega = (1.0 - w) * a.omega + w * b.omega;
  return out;
}

std::vector<PreFusedWheelMeas> prefuse(const std::vector<WheelSample>& wheel,
                                       const std::vector<ImuSample>& imu,
                                       double span_t0, double span_t1,
                                       const PipelineConfig& cfg) {
  if (span_t1 <= span_t0) throw PipelineError("prefuse: empty span");
  check_gaps(wheel, cfg.wheel_hz, cfg.gap_factor, "wheel");
  check_gaps(imu, cfg.imu_hz, cfg.gap_factor, "imu");

  // Wheel node times: span start, interior samples, span end.
  std::vector<WheelSample> nodes;
  nodes.push_back(interpolate_wheel(wheel, span_t0));
  for (const WheelSample& w : wheel) {
    if (w.t > span_t0 + kTimeEps && w.t < span_t1 - kTimeEps) nodes.push_back(w);
  }
  nodes.push_back(interpolate_wheel(wheel, span_t1));

  std::vector<PreFusedWheelMeas> out;
  out.reserve(nodes.size() - 1);
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const WheelSample& a = nodes[i];
    const WheelSample& b = nodes[i + 1];
    const double dt = b.t - a.t;
    PreFusedWheelMeas m;
    m.t0 = a.t;
    m.t1 = b.t;
    m.delta_p = Vec3(b.vx * dt, b.vy * dt, 0.0);
    m.dyaw = b.omega * dt;
    const ImuSample ia = interpolate_imu(imu, a.t);
    const ImuSample ib = interpolate_imu(imu, b.t);
    m.avg_accel = 0.5 * (ia.accel + ib.accel);
    m.avg_gyro = 0.5 * (ia.gyro + ib.gyro);
    out.push_back(m);
  }
  return out;
}

std::vector<FrameBundle> build_bundles(
    const std::vector<double>& frame_times,
    const std::map<double, std::vector<FeatureObservation>>& feature_rows,
    const std::vector<ImuSample>& imu,
    const std::vector<WheelSample>& wheel,
    const PipelineConfig& cfg) {
  std::vector<FrameBundle> bundles;
  const std::vector<double> kept = downsample_frames(frame_times, cfg.cam_hz);
  if (kept.empty()) return bundles;
  check_gaps(imu, cfg.imu_hz, cfg.gap_factor, "imu");
  check_gaps(wheel, cfg.wheel_hz, cfg.gap_factor, "wheel");

  double prev_t = kept.front();
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const double t = kept[k];
    FrameBundle b;
    b.frame_t = t;
    auto feat = feature_rows.find(t);
    if (feat != feature_rows.end()) b.features = feat->second;

    if (k > 0) {
      b.imu.push_back(interpolate_imu(imu, prev_t));
      for (const ImuSample& s : imu) {
        if (s.t > prev_t + kTimeEps && s.t < t - kTimeEps) b.imu.push_back(s);
      }
      b.imu.push_back(interpolate_imu(imu, t));
      b.wheel = prefuse(wheel, imu, prev_t, t, cfg);
    }
    bundles.push_back(std::move(b));
    prev_t = t;
  }
  return bundles;
}

}  // namespace viwo
