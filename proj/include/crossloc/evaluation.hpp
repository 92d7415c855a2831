#pragma once

#include <string>
#include <vector>

#include "crossloc/session.hpp"

namespace crossloc {

/// Fixed-width bins over [lo, hi); values outside land in the edge bins so the
/// counts always sum to the number of samples.
struct Histogram {
  double lo = 0.0;
  double width = 1.0;
  std::vector<std::size_t> counts;

  Histogram() = default;
  Histogram(double lo, double hi, double width);
  void add(double v);
  std::size_t total() const;
  double bin_start(std::size_t i) const { return lo + width * static_cast<double>(i); }
};

struct PoseError {
  double timestamp = 0.0;
  double ate = 0.0;      // m
  double lateral = 0.0;  // m, truth-body y component of (estimate - truth)
  double heading = 0.0;  // rad, yaw(estimate) - yaw(truth) wrapped to (-pi, pi]
};

struct EvaluationOptions {
  double tolerance = 0.05;  // s
  double lateral_range = 1.0;
  double lateral_bin = 0.05;
  double heading_range_deg = 10.0;
  double heading_bin_deg = 0.5;
};

struct TrajectoryErrorReport {
  std::vector<PoseError> poses;
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
  Histogram lateral_histogram;
  Histogram heading_histogram;  // degrees
};

/// Per-pose errors with no alignment. Estimates without a truth pose within
/// the tolerance are skipped; throws Error(NoOverlap) if none match.
TrajectoryErrorReport ate(const std::vector<TimedPose>& estimate,
                          const std::vector<TimedPose>& truth,
                          const EvaluationOptions& options = {});

/// `t,ate,lateral,heading`
void save_pose_errors(const TrajectoryErrorReport& r, const std::string& path);
/// `kind,bin_start,bin_end,count`
void save_histograms(const TrajectoryErrorReport& r, const std::string& path);

}  // namespace crossloc
