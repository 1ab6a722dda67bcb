#include "viwo/config.hpp"

#include <fstream>
#include <sstream>

namespace viwo {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (trim(v.substr(used)).empty()) return d;
  } catch (...) {
  }
  throw ConfigError("key '" + key + "': cannot parse '" + v + "' as a number");
}

int to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  return static_cast<int>(std::lround(d));
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': cannot parse '" + v + "' as a bool");
}

Vec3 to_vec3(const std::string& key, const std::string& v) {
  std::istringstream ss(v);
  Vec3 out;
  if (!(ss >> out.x() >> out.y() >> out.z())) {
    throw ConfigError("key '" + key + "': expected three numbers, got '" + v + "'");
  }
  return out;
}

Quat to_quat(const std::string& key, const std::string& v) {
  std::istringstream ss(v);
  double w, x, y, z;
  if (!(ss >> w >> x >> y >> z)) {
    throw ConfigError("key '" + key + "': expected 'w x y z', got '" + v + "'");
  }
  Quat q(w, x, y, z);
  if (std::abs(q.norm() - 1.0) > 1e-6) {
    throw ConfigError("key '" + key + "': quaternion is not unit norm");
  }
  return q;
}

// "t0:t1:factor, t0:t1:factor"
std::vector<SlipWindow> to_slip_windows(const std::string& key, const std::string& v) {
  std::vector<SlipWindow> out;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    SlipWindow w;
    char c1 = 0, c2 = 0;
    std::istringstream is(item);
    if (!(is >> w.t0 >> c1 >> w.t1 >> c2 >> w.factor) || c1 != ':' || c2 != ':') {
      throw ConfigError("key '" + key + "': expected 't0:t1:factor', got '" + item +
                        "'");
    }
    if (w.t1 <= w.t0 || w.factor < 0) {
      throw ConfigError("key '" + key + "': invalid window '" + item + "'");
    }
    out.push_back(w);
  }
  return out;
}

std::vector<DropoutWindow> to_dropouts(const std::string& key, const std::string& v) {
  std::vector<DropoutWindow> out;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    DropoutWindow w;
    char c1 = 0;
    std::istringstream is(item);
    if (!(is >> w.t0 >> c1 >> w.t1) || c1 != ':' || w.t1 <= w.t0) {
      throw ConfigError("key '" + key + "': expected 't0:t1', got '" + item + "'");
    }
    out.push_back(w);
  }
  return out;
}

}  // namespace

RunConfig RunConfig::parse_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty key or value");
    }

    if (key == "mode") {
      cfg.estimator.mode = fusion_mode_from_string(val);
      cfg.has_mode = true;
    } else if (key == "window_size") {
      cfg.estimator.window_size = to_int(key, val);
    } else if (key == "keyframe.parallax_px") {
      cfg.estimator.keyframe_parallax_px = to_double(key, val);
    } else if (key == "keyframe.min_tracked") {
      cfg.estimator.keyframe_min_tracked = to_int(key, val);
    } else if (key == "solver.max_iterations") {
      cfg.estimator.max_iterations = to_int(key, val);
    } else if (key == "noise.sigma_accel") {
      cfg.estimator.noise.sigma_a = to_double(key, val);
    } else if (key == "noise.sigma_gyro") {
      cfg.estimator.noise.sigma_g = to_double(key, val);
    } else if (key == "noise.sigma_accel_bias") {
      cfg.estimator.noise.sigma_ba = to_double(key, val);
    } else if (key == "noise.sigma_gyro_bias") {
      cfg.estimator.noise.sigma_bg = to_double(key, val);
    } else if (key == "noise.sigma_wheel") {
      cfg.estimator.noise.sigma_wheel = to_vec3(key, val);
    } else if (key == "cam.fx") {
      cfg.estimator.camera.fx = to_double(key, val);
    } else if (key == "cam.fy") {
      cfg.estimator.camera.fy = to_double(key, val);
    } else if (key == "cam.cx") {
      cfg.estimator.camera.cx = to_double(key, val);
    } else if (key == "cam.cy") {
      cfg.estimator.camera.cy = to_double(key, val);
    } else if (key == "cam.width") {
      cfg.estimator.camera.width = to_int(key, val);
    } else if (key == "cam.height") {
      cfg.estimator.camera.height = to_int(key, val);
    } else if (key == "cam.sigma_px") {
      cfg.estimator.camera.sigma_px = to_double(key, val);
    } else if (key == "extr.q_cam_body") {
      cfg.estimator.extrinsics.R_cam_in_body = rot_from_quat(to_quat(key, val));
    } else if (key == "extr.p_cam_body") {
      cfg.estimator.extrinsics.p_cam_in_body = to_vec3(key, val);
    } else if (key == "extr.q_odom_body") {
      cfg.estimator.extrinsics.R_odom_in_body = rot_from_quat(to_quat(key, val));
    } else if (key == "extr.p_odom_body") {
      cfg.estimator.extrinsics.p_odom_in_body = to_vec3(key, val);
    } else if (key == "init.min_intervals") {
      cfg.init.min_intervals = to_int(key, val);
    } else if (key == "init.bundles_per_interval") {
      cfg.init.bundles_per_interval = to_int(key, val);
    } else if (key == "rates.cam_hz") {
      cfg.rates.cam_hz = to_double(key, val);
      cfg.pipeline.cam_hz = cfg.rates.cam_hz;
    } else if (key == "rates.wheel_hz") {
      cfg.rates.wheel_hz = to_double(key, val);
      cfg.pipeline.wheel_hz = cfg.rates.wheel_hz;
    } else if (key == "rates.imu_hz") {
      cfg.rates.imu_hz = to_double(key, val);
      cfg.pipeline.imu_hz = cfg.rates.imu_hz;
    } else if (key == "pipeline.target_cam_hz") {
      cfg.pipeline.cam_hz = to_double(key, val);
    } else if (key == "traj.kind") {
      cfg.traj.kind = trajectory_kind_from_string(val);
      cfg.has_traj_kind = true;
    } else if (key == "traj.speed") {
      cfg.traj.speed = to_double(key, val);
    } else if (key == "traj.duration") {
      cfg.traj.duration = to_double(key, val);
      cfg.has_traj_duration = true;
    } else if (key == "traj.radius") {
      cfg.traj.radius = to_double(key, val);
    } else if (key == "traj.z_undulation_amp") {
      cfg.traj.z_undulation_amp = to_double(key, val);
    } else if (key == "traj.yaw_follows_path") {
      cfg.traj.yaw_follows_path = to_bool(key, val);
    } else if (key == "faults.slip_windows") {
      cfg.faults.slip_windows = to_slip_windows(key, val);
    } else if (key == "faults.vision_dropout") {
      cfg.faults.vision_dropout = to_dropouts(key, val);
    } else if (key == "faults.bias_accel") {
      cfg.faults.bias_accel = to_vec3(key, val);
    } else if (key == "faults.bias_gyro") {
      cfg.faults.bias_gyro = to_vec3(key, val);
    } else if (key == "sim.sigma_accel") {
      cfg.sim_noise.accel = to_double(key, val);
    } else if (key == "sim.sigma_gyro") {
      cfg.sim_noise.gyro = to_double(key, val);
    } else if (key == "sim.sigma_wheel") {
      cfg.sim_noise.wheel = to_double(key, val);
    } else if (key == "sim.sigma_pixel") {
      cfg.sim_noise.pixel = to_double(key, val);
    } else if (key == "landmarks.density") {
      cfg.landmark_density = to_double(key, val);
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(to_double(key, val));
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  if (cfg.estimator.window_size < 3 || cfg.estimator.window_size > 100) {
    throw ConfigError("window_size must be in [3, 100]");
  }
  cfg.estimator.noise.validate();
  for (const SlipWindow& w : cfg.faults.slip_windows) {
    if (cfg.has_traj_duration && w.t1 > cfg.traj.duration) {
      throw ConfigError("faults.slip_windows: window ends after traj.duration");
    }
  }
  for (const DropoutWindow& w : cfg.faults.vision_dropout) {
    if (cfg.has_traj_duration && w.t1 > cfg.traj.duration) {
      throw ConfigError("faults.vision_dropout: window ends after traj.duration");
    }
  }
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

void RunConfig::require_simulate_keys() const {
  if (!has_traj_kind) throw ConfigError("missing required key 'traj.kind'");
  if (!has_traj_duration) throw ConfigError("missing required key 'traj.duration'");
  if (traj.duration <= 0) throw ConfigError("traj.duration must be > 0");
}

void RunConfig::require_run_keys() const {
  if (!has_mode) throw ConfigError("missing required key 'mode'");
}

}  // namespace viwo
