#pragma once

#include "viwo/estimator.hpp"
#include "viwo/initializer.hpp"
#include "viwo/pipeline.hpp"
#include "viwo/simulator.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>

namespace viwo {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key = value configuration; '#' starts a comment. Unknown keys are
// rejected; keys without defaults must be present for the command using them.
struct RunConfig {
  EstimatorConfig estimator;
  InitializerConfig init;
  PipelineConfig pipeline;
  TrajectorySpec traj;
  FaultSpec faults;
  SimNoise sim_noise;
  SampleRates rates;
  double landmark_density = 1.0;
  std::uint64_t seed = 1;

  bool has_traj_kind = false;
  bool has_traj_duration = false;
  bool has_mode = false;

  static RunConfig parse_file(const std::string& path);
  static RunConfig parse_text(const std::string& text);

  void require_simulate_keys() const;
  void require_run_keys() const;
};

}  // namespace viwo
