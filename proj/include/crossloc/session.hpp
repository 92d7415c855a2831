#pragma once

#include <string>
#include <vector>

#include "crossloc/imu_preintegration.hpp"
#include "crossloc/residuals.hpp"

namespace crossloc {

struct StereoObservation {
  int landmark_id = -1;
  Vec2 left = Vec2::Zero();
  Vec2 right = Vec2::Zero();
};

struct CameraFrame {
  double timestamp = 0.0;
  std::vector<StereoObservation> observations;
};

/// Points in the laser frame F. `labels` holds the world element hit per point.
struct LaserScan {
  double timestamp = 0.0;
  std::vector<Vec3> points;
  std::vector<int> labels;
};

struct TimedPose {
  double timestamp = 0.0;
  Pose pose;
};

struct TimedState {
  double timestamp = 0.0;
  NavState state;  // in the map frame
};

struct LaserModel {
  int channels = 16;
  double min_elevation_deg = -15.0;
  double max_elevation_deg = 15.0;
  double azimuth_step_deg = 1.0;
  double max_range = 50.0;
  double range_sigma = 0.02;
};

struct SensorRig {
  CameraModel camera;  // left camera
  double baseline = 0.12;
  ImuNoiseModel imu;
  LaserModel laser;
  Pose body_T_laser;
  double body_height = 0.4;
  double pixel_sigma = 0.5;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);

  /// Default rig: forward-looking stereo pair, laser 0.3 m above the camera.
  static SensorRig make_default();

  CameraModel right_camera() const;
  /// Laser pose in the left camera frame.
  Pose camera_T_laser() const { return camera.body_T_camera.inverse() * body_T_laser; }
  double laser_height() const { return body_height + body_T_laser.t().z(); }
};

/// One recorded traversal. Ground truth is body-in-map at frame rate; states
/// (velocity, biases) are carried alongside for initialization and tests.
struct SessionData {
  int session_id = 0;
  SensorRig rig;
  std::vector<ImuSample> imu;
  std::vector<CameraFrame> frames;
  std::vector<LaserScan> scans;
  std::vector<TimedPose> ground_truth;
  std::vector<TimedState> ground_truth_states;
};

/// Directory layout: imu.txt, frames.txt + frames/NNNN.obs, scans.txt +
/// scans/NNNN.txt, gt.txt, gt_state.txt, rig.cfg.
void save_session(const SessionData& session, const std::string& dir);
SessionData load_session(const std::string& dir);

void save_rig(const SensorRig& rig, const std::string& path);
SensorRig load_rig(const std::string& path);

/// Trajectory file: `t tx ty tz qx qy qz qw` per line.
void save_trajectory(const std::vector<TimedPose>& traj, const std::string& path);
std::vector<TimedPose> load_trajectory(const std::string& path);

/// Nearest entry within `tolerance` seconds, or -1.
int nearest_index(const std::vector<TimedPose>& traj, double t, double tolerance);

}  // namespace crossloc
