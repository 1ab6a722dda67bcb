#include "viwo/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace viwo {

TrajectoryKind trajectory_kind_from_string(const std::string& s) {
  if (s == "static") return TrajectoryKind::kStatic;
  if (s == "circle") return TrajectoryKind::kCircle;
  if (s == "figure-eight") return TrajectoryKind::kFigureEight;
  if (s == "corridor-loop") return TrajectoryKind::kCorridorLoop;
  throw std::invalid_argument("unknown trajectory kind '" + s + "'");
}

double GaussianRng::uniform() {
  return (eng_() >> 11) * (1.0 / 9007199254740992.0);
}

double GaussianRng::gaussian() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 1e-300) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * M_PI * u2);
  have_spare_ = true;
  return r * std::cos(2.0 * M_PI * u2);
}

namespace {

struct Planar {
  double x = 0, y = 0, vx = 0, vy = 0, ax = 0, ay = 0;
  double yaw = 0, yaw_rate = 0;
};

Planar circle_motion(const TrajectorySpec& s, double t) {
  Planar m;
  const double w = s.speed / s.radius;
  const double th = w * t;
  m.x = s.radius * std::sin(th);
  m.y = s.radius * (1.0 - std::cos(th));
  m.vx = s.speed * std::cos(th);
  m.vy = s.speed * std::sin(th);
  m.ax = -s.speed * w * std::sin(th);
  m.ay = s.speed * w * std::cos(th);
  m.yaw = th;
  m.yaw_rate = w;
  return m;
}

Planar figure_eight_motion(const TrajectorySpec& s, double t) {
  // Gerono lemniscate; |v| never vanishes so the heading is well defined.
  Planar m;
  const double A = s.radius;
  const double w = s.speed / A;
  const double th = w * t;
  m.x = A * std::sin(th);
  m.y = 0.5 * A * std::sin(2.0 * th);
  m.vx = A * w * std::cos(th);
  m.vy = A * w * std::cos(2.0 * th);
  m.ax = -A * w * w * std::sin(th);
  m.ay = -2.0 * A * w * w * std::sin(2.0 * th);
  m.yaw = std::atan2(m.vy, m.vx);
  const double v2 = m.vx * m.vx + m.vy * m.vy;
  m.yaw_rate = (m.vx * m.ay - m.vy * m.ax) / v2;
  return m;
}

// Rounded rectangle walked at constant speed: two straights per side joined by
// quarter-circle corners. Curvature steps at the joins are bounded.
Planar corridor_motion(const TrajectorySpec& s, double t) {
  const double rc = 0.5 * s.radius;
  const double sx = 3.0 * s.radius;
  const double sy = 1.5 * s.radius;
  const double quarter = 0.5 * M_PI * rc;
  const double perimeter = 2 * sx + 2 * sy + 4 * quarter;
  double arc = std::fmod(s.speed * t, perimeter);
  if (arc < 0) arc += perimeter;

  struct Seg {
    bool straight;
    double len;
    double x0, y0, heading;   // straights
    double cx, cy, phi0;      // corners
  };
  const Seg segs[8] = {
      {true, sx, 0, 0, 0, 0, 0, 0},
      {false, quarter, 0, 0, 0, sx, rc, -0.5 * M_PI},
      {true, sy, sx + rc, rc, 0.5 * M_PI, 0, 0, 0},
      {false, quarter, 0, 0, 0, sx, rc + sy, 0.0},
      {true, sx, sx, 2 * rc + sy, M_PI, 0, 0, 0},
      {false, quarter, 0, 0, 0, 0, rc + sy, 0.5 * M_PI},
      {true, sy, -rc, rc + sy, -0.5 * M_PI, 0, 0, 0},
      {false, quarter, 0, 0, 0, 0, rc, M_PI},
  };

  Planar m;
  for (const Seg& g : segs) {
    if (arc > g.len + 1e-12) {
      arc -= g.len;
      continue;
    }
    if (g.straight) {
      m.yaw = g.heading;
      m.yaw_rate = 0.0;
      m.x = g.x0 + std::cos(g.heading) * arc;
      m.y = g.y0 + std::sin(g.heading) * arc;
      m.vx = s.speed * std::cos(g.heading);
      m.vy = s.speed * std::sin(g.heading);
      m.ax = m.ay = 0.0;
    } else {
      const double phi = g.phi0 + arc / rc;
      m.x = g.cx + rc * std::cos(phi);
      m.y = g.cy + rc * std::sin(phi);
      m.yaw = phi + 0.5 * M_PI;
      m.yaw_rate = s.speed / rc;
      m.vx = -s.speed * std::sin(phi);
      m.vy = s.speed * std::cos(phi);
      m.ax = -s.speed * s.speed / rc * std::cos(phi);
      m.ay = -s.speed * s.speed / rc * std::sin(phi);
    }
    return m;
  }
  return m;
}

}  // namespace

GroundTruthSample ground_truth(const TrajectorySpec& spec, double t) {
  if (t < -1e-9 || t > spec.duration + 1e-9) {
    throw std::out_of_range("ground_truth: t outside [0, duration]");
  }
  GroundTruthSample g;
  if (spec.kind == TrajectoryKind::kStatic) return g;

  Planar m;
  switch (spec.kind) {
    case TrajectoryKind::kCircle: m = circle_motion(spec, t); break;
    case TrajectoryKind::kFigureEight: m = figure_eight_motion(spec, t); break;
    case TrajectoryKind::kCorridorLoop: m = corridor_motion(spec, t); break;
    default: break;
  }
  double z = 0, vz = 0, az = 0;
  if (spec.z_undulation_amp > 0.0) {
    // wavelength ~2 m of path
    const double w = M_PI * std::max(spec.speed, 1e-3);
    z = spec.z_undulation_amp * std::sin(w * t);
    vz = spec.z_undulation_amp * w * std::cos(w * t);
    az = -spec.z_undulation_amp * w * w * std::sin(w * t);
  }
  g.p = Vec3(m.x, m.y, z);
  g.v = Vec3(m.vx, m.vy, vz);
  g.a = Vec3(m.ax, m.ay, az);
  if (spec.yaw_follows_path) {
    g.q = quat_from_yaw(m.yaw);
    g.omega_body = Vec3(0.0, 0.0, m.yaw_rate);
  }
  return g;
}

LandmarkField generate_landmarks(const TrajectorySpec& spec, double density,
                                 std::uint64_t seed) {
  LandmarkField field;
  field.density = density;
  field.seed = seed;

  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  const int probes = 200;
  for (int i = 0; i <= probes; ++i) {
    const GroundTruthSample g = ground_truth(spec, spec.duration * i / probes);
    xmin = std::min(xmin, g.p.x());
    xmax = std::max(xmax, g.p.x());
    ymin = std::min(ymin, g.p.y());
    ymax = std::max(ymax, g.p.y());
  }
  const double margin = 4.0;
  xmin -= margin; xmax += margin;
  ymin -= margin; ymax += margin;
  const double zmin = -0.5, zmax = 2.5;
  const double volume = (xmax - xmin) * (ymax - ymin) * (zmax - zmin);
  const int count =
      std::clamp(static_cast<int>(density * volume), 200, 20000);

  GaussianRng rng(seed);
  field.points.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double x = xmin + (xmax - xmin) * rng.uniform();
    const double y = ymin + (ymax - ymin) * rng.uniform();
    const double z = zmin + (zmax - zmin) * rng.uniform();
    field.points.emplace_back(x, y, z);
  }
  return field;
}

namespace {

double slip_factor_at(const FaultSpec& faults, double t) {
  for (const SlipWindow& w : faults.slip_windows) {
    if (t >= w.t0 && t <= w.t1) return w.factor;
  }
  return 1.0;
}

bool in_dropout(const FaultSpec& faults, double t) {
  for (const DropoutWindow& w : faults.vision_dropout) {
    if (t >= w.t0 && t <= w.t1) return true;
  }
  return false;
}

}  // namespace

SyntheticDataset synthesize(const TrajectorySpec& spec, const FaultSpec& faults,
                            const LandmarkField& landmarks, const CameraModel& cam,
                            const Extrinsics& extr, const SimNoise& noise,
                            const SampleRates& rates, std::uint64_t seed) {
  if (rates.cam_hz <= 0 || rates.wheel_hz <= 0 || rates.imu_hz <= 0) {
    throw std::invalid_argument("synthesize: sample rates must be positive");
  }
  SyntheticDataset out;
  GaussianRng imu_rng(seed * 6364136223846793005ULL + 1);
  GaussianRng wheel_rng(seed * 6364136223846793005ULL + 2);
  GaussianRng px_rng(seed * 6364136223846793005ULL + 3);

  // IMU stream.
  const double imu_dt = 1.0 / rates.imu_hz;
  const long n_imu = std::lround(spec.duration * rates.imu_hz);
  const double accel_sd = noise.accel / std::sqrt(imu_dt);
  const double gyro_sd = noise.gyro / std::sqrt(imu_dt);
  for (long i = 0; i <= n_imu; ++i) {
    const double t = i * imu_dt;
    const GroundTruthSample g = ground_truth(spec, std::min(t, spec.duration));
    ImuSample s;
    s.t = t;
    const Mat3 Rt = rot_from_quat(g.q).transpose();
    s.accel = Rt * (g.a + gravity_world()) + faults.bias_accel;
    s.gyro = g.omega_body + faults.bias_gyro;
    if (noise.accel > 0) {
      s.accel += accel_sd * Vec3(imu_rng.gaussian(), imu_rng.gaussian(),
                                 imu_rng.gaussian());
    }
    if (noise.gyro > 0) {
      s.gyro += gyro_sd * Vec3(imu_rng.gaussian(), imu_rng.gaussian(),
                               imu_rng.gaussian());
    }
    out.imu.push_back(s);
  }

  // Wheel stream: planar velocity of the odometer frame, lever arm included.
  const double wheel_dt = 1.0 / rates.wheel_hz;
  const long n_wheel = std::lround(spec.duration * rates.wheel_hz);
  const Mat3 R_bo_t = extr.R_odom_in_body.transpose();
  for (long i = 0; i <= n_wheel; ++i) {
    const double t = i * wheel_dt;
    const GroundTruthSample g = ground_truth(spec, std::min(t, spec.duration));
    const Vec3 v_body = rot_from_quat(g.q).transpose() * g.v +
                        g.omega_body.cross(extr.p_odom_in_body);
    const Vec3 v_odom = R_bo_t * v_body;
    const double omega_odom = (R_bo_t * g.omega_body).z();
    const double slip = slip_factor_at(faults, t);
    WheelSample s;
    s.t = t;
    s.vx = slip * v_odom.x();
    s.vy = slip * v_odom.y();
    s.omega = slip * omega_odom;
    if (noise.wheel > 0) {
      const double speed = std::hypot(v_odom.x(), v_odom.y());
      const double sd = noise.wheel * std::max(speed, 0.01) * std::sqrt(wheel_dt);
      s.vx += sd * wheel_rng.gaussian();
      s.vy += sd * wheel_rng.gaussian();
      s.omega += sd * wheel_rng.gaussian();
    }
    out.wheel.push_back(s);
  }

  // Feature tracks: ids persist while a landmark stays selected; a landmark
  // that drops out of view re-enters under a fresh id.
  const double cam_dt = 1.0 / rates.cam_hz;
  const long n_cam = std::lround(spec.duration * rates.cam_hz);
  std::map<std::size_t, std::int64_t> active_ids;   // landmark index -> feature id
  std::int64_t next_id = 0;
  const int max_features = 120;
  for (long i = 0; i <= n_cam; ++i) {
    const double t = i * cam_dt;
    const GroundTruthSample g = ground_truth(spec, std::min(t, spec.duration));
    out.groundtruth.push_back({t, g.p, g.q});
    if (in_dropout(faults, t)) {
      active_ids.clear();
      continue;
    }
    const Mat3 R_wb_t = rot_from_quat(g.q).transpose();
    std::map<std::size_t, Vec2> visible;
    for (std::size_t li = 0; li < landmarks.points.size(); ++li) {
      const Vec3 p_body = R_wb_t * (landmarks.points[li] - g.p);
      const Vec3 p_cam =
          extr.R_cam_in_body.transpose() * (p_body - extr.p_cam_in_body);
      if (p_cam.z() < 0.2) continue;
      const double u = cam.fx * p_cam.x() / p_cam.z() + cam.cx;
      const double v = cam.fy * p_cam.y() / p_cam.z() + cam.cy;
      if (u < 1.0 || u > cam.width - 1.0 || v < 1.0 || v > cam.height - 1.0) continue;
      visible.emplace(li, Vec2(u, v));
      if (static_cast<int>(visible.size()) >= max_features) break;
    }
    for (auto it = active_ids.begin(); it != active_ids.end();) {
      it = visible.count(it->first) ? std::next(it) : active_ids.erase(it);
    }
    for (const auto& [li, px] : visible) {
      auto it = active_ids.find(li);
      if (it == active_ids.end()) it = active_ids.emplace(li, next_id++).first;
      FeatureRow row;
      row.t = t;
      row.feature_id = it->second;
      row.u = px.x() + noise.pixel * (noise.pixel > 0 ? px_rng.gaussian() : 0.0);
      row.v = px.y() + noise.pixel * (noise.pixel > 0 ? px_rng.gaussian() : 0.0);
      out.features.push_back(row);
    }
  }
  return out;
}

}  // namespace viwo
