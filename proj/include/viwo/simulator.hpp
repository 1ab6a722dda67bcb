#pragma once

#include "viwo/sensor_types.hpp"
#include "viwo/state.hpp"
#include "viwo/vision.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace viwo {

enum class TrajectoryKind { kStatic, kCircle, kFigureEight, kCorridorLoop };

TrajectoryKind trajectory_kind_from_string(const std::string& s);

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::kCircle;
  double speed = 0.5;        // m/s
  double duration = 60.0;    // s
  double radius = 2.0;       // circle radius / path scale, m
  double z_undulation_amp = 0.0;   // smoothed ground-unevenness analog, m
  bool yaw_follows_path = true;
};

struct SlipWindow {
  double t0 = 0.0;
  double t1 = 0.0;
  double factor = 1.0;   // multiplies wheel speeds inside [t0, t1]
};

struct DropoutWindow {
  double t0 = 0.0;
  double t1 = 0.0;
};

struct FaultSpec {
  std::vector<SlipWindow> slip_windows;
  std::vector<DropoutWindow> vision_dropout;
  Vec3 bias_accel = Vec3::Zero();
  Vec3 bias_gyro = Vec3::Zero();
};

struct LandmarkField {
  std::vector<Vec3> points;
  double density = 0.0;   // per m^3
  std::uint64_t seed = 0;
};

struct GroundTruthSample {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();       // world-frame acceleration (gravity excluded)
  Quat q = Quat::Identity();
  Vec3 omega_body = Vec3::Zero();
};

// Analytic pose and derivatives; throws std::out_of_range outside [0, duration].
GroundTruthSample ground_truth(const TrajectorySpec& spec, double t);

// Injected measurement noise, continuous white densities (zero allowed).
struct SimNoise {
  double accel = 0.0;       // m/s^2/sqrt(Hz)
  double gyro = 0.0;        // rad/s/sqrt(Hz)
  double wheel = 0.0;       // fraction of displacement per sqrt(s)
  double pixel = 0.0;       // px
};

struct SampleRates {
  double cam_hz = 10.0;
  double wheel_hz = 100.0;
  double imu_hz = 200.0;
};

struct FeatureRow {
  double t = 0.0;
  std::int64_t feature_id = -1;
  double u = 0.0;
  double v = 0.0;
};

struct GroundTruthRow {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Quat q = Quat::Identity();
};

struct SyntheticDataset {
  std::vector<ImuSample> imu;
  std::vector<WheelSample> wheel;
  std::vector<FeatureRow> features;
  std::vector<GroundTruthRow> groundtruth;
};

LandmarkField generate_landmarks(const TrajectorySpec& spec, double density,
                                 std::uint64_t seed);

SyntheticDataset synthesize(const TrajectorySpec& spec, const FaultSpec& faults,
                            const LandmarkField& landmarks, const CameraModel& cam,
                            const Extrinsics& extr, const SimNoise& noise,
                            const SampleRates& rates, std::uint64_t seed);

// Deterministic gaussian source (mt19937_64 + Box-Muller).
class GaussianRng {
 public:
  explicit GaussianRng(std::uint64_t seed) : eng_(seed) {}
  double uniform();      // [0, 1)
  double gaussian();     // N(0, 1)

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace viwo
