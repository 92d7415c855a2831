#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crossloc/estimator.hpp"
#include "crossloc/evaluation.hpp"
#include "crossloc/map_pipeline.hpp"
#include "crossloc/simulator.hpp"

namespace crossloc {

/// Offset applied to the true anchor to form the initial guess.
struct InitOffset {
  Vec3 translation = Vec3(0.6, -0.5, 0.0);  // m
  double yaw_deg = 3.0;
};

/// Every tunable in one flat namespace: sim.*, rig.*, map.*, est.*, init.*, eval.*, exec.*.
struct RunConfig {
  std::uint64_t world_seed = 7;
  int map_sessions = 8;
  SensorRig rig = SensorRig::make_default();
  SimulationOptions sim;
  MapFilterParams map;
  EstimatorParams est;
  std::string schedule = "1:3";
  InitOffset init;
  EvaluationOptions eval;
  bool parallel = true;

  Execution execution() const { return parallel ? Execution::Parallel : Execution::Serial; }

  /// Throws Error(InvalidArgument) for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  /// All keys in table order.
  static std::vector<std::string> keys();

  void load(const std::string& path);
  /// `key = value` for every key, in table order.
  void save(const std::string& path) const;
};

}  // namespace crossloc
