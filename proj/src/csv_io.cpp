#include "viwo/csv_io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace viwo {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_for_write(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "w"));
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  return f;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(line);
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

std::vector<std::vector<double>> read_numeric_csv(const std::string& path,
                                                  std::size_t columns,
                                                  const std::string& expect_header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expect_header) {
    throw DataError("'" + path + "': expected header '" + expect_header + "', got '" +
                    line + "'");
  }
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line, ',');
    if (cells.size() != columns) {
      throw DataError("'" + path + "' line " + std::to_string(line_no) +
                      ": expected " + std::to_string(columns) + " columns");
    }
    std::vector<double> row(columns);
    for (std::size_t i = 0; i < columns; ++i) {
      try {
        row[i] = std::stod(cells[i]);
      } catch (...) {
        throw DataError("'" + path + "' line " + std::to_string(line_no) +
                        ": bad number '" + cells[i] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void write_imu_csv(const std::string& path, const std::vector<ImuSample>& rows) {
  FilePtr f = open_for_write(path);
  std::fprintf(f.get(), "t,ax,ay,az,gx,gy,gz\n");
  for (const ImuSample& s : rows) {
    std::fprintf(f.get(), "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", s.t, s.accel.x(),
                 s.accel.y(), s.accel.z(), s.gyro.x(), s.gyro.y(), s.gyro.z());
  }
}

void write_wheel_csv(const std::string& path, const std::vector<WheelSample>& rows) {
  FilePtr f = open_for_write(path);
  std::fprintf(f.get(), "t,vx,vy,omega\n");
  for (const WheelSample& s : rows) {
    std::fprintf(f.get(), "%.9g,%.9g,%.9g,%.9g\n", s.t, s.vx, s.vy, s.omega);
  }
}

void write_features_csv(const std::string& path, const std::vector<FeatureRow>& rows) {
  FilePtr f = open_for_write(path);
  std::fprintf(f.get(), "t,feature_id,u,v\n");
  for (const FeatureRow& s : rows) {
    std::fprintf(f.get(), "%.9g,%" PRId64 ",%.9g,%.9g\n", s.t, s.feature_id, s.u, s.v);
  }
}

void write_groundtruth_csv(const std::string& path,
                           const std::vector<GroundTruthRow>& rows) {
  FilePtr f = open_for_write(path);
  std::fprintf(f.get(), "t,px,py,pz,qx,qy,qz,qw\n");
  for (const GroundTruthRow& s : rows) {
    std::fprintf(f.get(), "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", s.t, s.p.x(),
                 s.p.y(), s.p.z(), s.q.x(), s.q.y(), s.q.z(), s.q.w());
  }
}

std::vector<ImuSample> read_imu_csv(const std::string& path) {
  const auto rows = read_numeric_csv(path, 7, "t,ax,ay,az,gx,gy,gz");
  std::vector<ImuSample> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    out.push_back({r[0], Vec3(r[1], r[2], r[3]), Vec3(r[4], r[5], r[6])});
  }
  return out;
}

std::vector<WheelSample> read_wheel_csv(const std::string& path) {
  const auto rows = read_numeric_csv(path, 4, "t,vx,vy,omega");
  std::vector<WheelSample> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back({r[0], r[1], r[2], r[3]});
  return out;
}

std::vector<FeatureRow> read_features_csv(const std::string& path) {
  const auto rows = read_numeric_csv(path, 4, "t,feature_id,u,v");
  std::vector<FeatureRow> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    out.push_back({r[0], static_cast<std::int64_t>(r[1]), r[2], r[3]});
  }
  return out;
}

std::vector<GroundTruthRow> read_groundtruth_csv(const std::string& path) {
  const auto rows = read_numeric_csv(path, 8, "t,px,py,pz,qx,qy,qz,qw");
  std::vector<GroundTruthRow> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    GroundTruthRow g;
    g.t = r[0];
    g.p = Vec3(r[1], r[2], r[3]);
    g.q = Quat(r[7], r[4], r[5], r[6]);   // file order is qx qy qz qw
    g.q.normalize();
    out.push_back(g);
  }
  return out;
}

void write_trajectory(const std::string& path, const std::vector<TrajectoryPose>& tr) {
  FilePtr f = open_for_write(path);
  for (const TrajectoryPose& s : tr) {
    std::fprintf(f.get(), "%.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", s.t, s.p.x(),
                 s.p.y(), s.p.z(), s.q.x(), s.q.y(), s.q.z(), s.q.w());
  }
}

std::vector<TrajectoryPose> read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string first;
  if (!std::getline(in, first)) throw DataError("'" + path + "' is empty");
  in.close();

  std::vector<TrajectoryPose> out;
  if (first.rfind("t,", 0) == 0) {
    for (const GroundTruthRow& g : read_groundtruth_csv(path)) {
      out.push_back({g.t, g.p, g.q});
    }
    return out;
  }

  std::ifstream in2(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in2, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    TrajectoryPose p;
    double qx, qy, qz, qw;
    if (!(ss >> p.t >> p.p.x() >> p.p.y() >> p.p.z() >> qx >> qy >> qz >> qw)) {
      throw DataError("'" + path + "' line " + std::to_string(line_no) +
                      ": expected 't px py pz qx qy qz qw'");
    }
    p.q = Quat(qw, qx, qy, qz);
    p.q.normalize();
    out.push_back(p);
  }
  return out;
}

}  // namespace viwo
