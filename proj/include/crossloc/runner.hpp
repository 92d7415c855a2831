#pragma once

#include <string>
#include <vector>

#include "crossloc/config.hpp"

namespace crossloc {

/// The local odometry frame: yaw-only rotation and position of the first
/// truth pose, so gravity stays along -z.
Pose local_frame_of(const Pose& first_truth);

/// Applies the configured translation and yaw offset to the true anchor.
Pose perturb_anchor(const Pose& anchor_true, const InitOffset& offset);

struct LocalizationResult {
  std::vector<TimedPose> trajectory;  // map frame, one per keyframe step
  std::vector<StepReport> steps;
  bool diverged = false;
  int keyframes = 0;
  Pose anchor_true;
  Pose anchor_guess;
  Pose anchor_final;
};

/// Drives the estimator over one session from the first frame. The initial
/// state is the truth pose and velocity moved into the local frame, biases zero.
LocalizationResult run_localization(const PointCloudMap& map, const SessionData& session,
                                    const RunConfig& config, const BaSchedule& schedule);

/// `counter,t,mode,constraints,plane,active_landmarks,rejected,iterations,icp_iterations,initial_cost,final_cost,mean_residual,anchor_x,anchor_y,anchor_z,anchor_yaw`
void save_step_log(const std::vector<StepReport>& steps, const std::string& path);

/// Map-building sessions 0..n-1 of the default world.
std::vector<SessionData> simulate_map_sessions(const RunConfig& config, std::uint64_t seed);

/// Query sessions use ids from 100 upwards, so no semi-static car is present.
constexpr int kQuerySessionBase = 100;
SessionData simulate_query_session(const RunConfig& config, int session_id, std::uint64_t seed);

struct AssociationStats {
  double mean_kld = 0.0;       // over finite samples
  std::size_t samples = 0;     // finite samples
  std::size_t infinite = 0;    // samples flagged infinite
};

/// Association quality along a localized trajectory. At each keyframe, stereo
/// points closer than `max_depth` are associated against the map under the
/// estimated camera pose and compared with the reference at the true pose.
AssociationStats association_diagnostics(const PointCloudMap& map, const SessionData& session,
                                         const LocalizationResult& result,
                                         const RunConfig& config, double max_depth = 8.0);

struct SweepRow {
  std::string schedule;
  std::string map;
  std::uint64_t seed = 0;
  int keyframes = 0;
  bool diverged = false;
  double ate_mean = 0.0;
  double ate_median = 0.0;
  double ate_max = 0.0;
};

struct NamedMap {
  std::string name;
  const PointCloudMap* map = nullptr;
};

/// Every (seed, map, schedule) combination, rows in that nesting order. Runs
/// are independent and execute in parallel when the config allows.
std::vector<SweepRow> run_sweep(const std::vector<NamedMap>& maps,
                                const std::vector<std::string>& schedules,
                                const std::vector<std::uint64_t>& seeds, const RunConfig& config);

/// `schedule,map,seed,keyframes,diverged,ate_mean,ate_median,ate_max`
void save_sweep(const std::vector<SweepRow>& rows, const std::string& path);

}  // namespace crossloc
