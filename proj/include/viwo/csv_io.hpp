#pragma once

#include "viwo/sensor_types.hpp"
#include "viwo/simulator.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace viwo {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// CSV schemas (header row mandatory, '.' decimal, timestamps in seconds):
//   imu.csv:         t,ax,ay,az,gx,gy,gz
//   wheel.csv:       t,vx,vy,omega
//   features.csv:    t,feature_id,u,v
//   groundtruth.csv: t,px,py,pz,qx,qy,qz,qw
void write_imu_csv(const std::string& path, const std::vector<ImuSample>& rows);
void write_wheel_csv(const std::string& path, const std::vector<WheelSample>& rows);
void write_features_csv(const std::string& path, const std::vector<FeatureRow>& rows);
void write_groundtruth_csv(const std::string& path,
                           const std::vector<GroundTruthRow>& rows);

std::vector<ImuSample> read_imu_csv(const std::string& path);
std::vector<WheelSample> read_wheel_csv(const std::string& path);
std::vector<FeatureRow> read_features_csv(const std::string& path);
std::vector<GroundTruthRow> read_groundtruth_csv(const std::string& path);

struct TrajectoryPose {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Quat q = Quat::Identity();
};

// One `t px py pz qx qy qz qw` line per pose, 9 significant digits.
void write_trajectory(const std::string& path, const std::vector<TrajectoryPose>& tr);

// Accepts the space-separated trajectory format or groundtruth.csv.
std::vector<TrajectoryPose> read_trajectory(const std::string& path);

}  // namespace viwo
