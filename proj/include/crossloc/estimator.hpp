#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crossloc/laser_map.hpp"
#include "crossloc/nls_solver.hpp"
#include "crossloc/session.hpp"

namespace crossloc {

/// What a single estimator step runs.
enum class BaMode { NonRigid, Rigid, Staged };

const char* to_string(BaMode m);

struct BaSchedule {
  enum class Kind { NonRigidOnly, RigidOnly, Hybrid, Staged };
  Kind kind = Kind::Hybrid;
  int m = 1;  // non-rigid solves per cycle
  int n = 3;  // rigid solves per cycle

  static BaSchedule non_rigid_only() { return {Kind::NonRigidOnly, 1, 0}; }
  static BaSchedule rigid_only() { return {Kind::RigidOnly, 0, 1}; }
  static BaSchedule hybrid(int m, int n);
  static BaSchedule staged() { return {Kind::Staged, 0, 0}; }

  /// Accepts "non_rigid", "rigid", "staged", "m:n" or "hybrid:m:n".
  static BaSchedule parse(const std::string& text);
  std::string to_string() const;

  /// Non-rigid when counter mod (m+n) < m.
  BaMode mode_for(long counter) const;
};

struct KeyframePolicy {
  double translation = 0.5;   // m
  double rotation_deg = 10.0;
  double min_overlap = 0.6;   // fraction of the last keyframe's landmarks still seen
};

bool needs_keyframe(const KeyframePolicy& policy, const Pose& last_keyframe, const Pose& current,
                    double overlap);

struct AssociationParams {
  int k = 5;
  double gate = 1.5;                 // m
  double normal_angle_deg = 20.0;
  double map_sigma = 0.05;           // m; information is I / sigma^2
};

struct EstimatorParams {
  int window_capacity = 7;
  KeyframePolicy keyframe;
  AssociationParams association;
  int min_tracked = 15;
  double min_disparity = 1.0;        // px
  double max_disparity = 300.0;      // px
  double epipolar_gate = 3.0;        // px
  double max_depth = 40.0;           // m
  double outlier_threshold = 4.0;    // px, per camera after each solve
  double cauchy_pixel = 2.0;
  double cauchy_metric = 3.0;
  double prior_rotation_sigma = 0.01;     // rad
  double prior_translation_sigma = 0.1;   // m
  int icp_max_iterations = 20;
  double icp_tolerance = 1e-6;
  SolverOptions solver = default_solver();
  int divergence_steps = 5;
  double divergence_factor = 3.0;
  double divergence_floor = 0.05;    // m

  static SolverOptions default_solver() {
    SolverOptions o;
    o.max_iter = 15;
    return o;
  }
};

struct KeyframeObservation {
  int landmark_id = -1;
  Vec2 left = Vec2::Zero();
  Vec2 right = Vec2::Zero();
};

struct Keyframe {
  int id = -1;
  double timestamp = 0.0;
  NavState state;  // local frame
  std::vector<KeyframeObservation> observations;  // sorted by landmark id
  std::optional<PreintegratedImu> preint;         // from the previous keyframe
};

struct WindowLandmark {
  int id = -1;
  Vec3 position = Vec3::Zero();  // local frame
};

class SlidingWindow {
 public:
  explicit SlidingWindow(int capacity = 7);

  int capacity() const { return capacity_; }
  std::size_t size() const { return keyframes_.size(); }
  bool empty() const { return keyframes_.empty(); }
  std::deque<Keyframe>& keyframes() { return keyframes_; }
  const std::deque<Keyframe>& keyframes() const { return keyframes_; }
  std::map<int, WindowLandmark>& landmarks() { return landmarks_; }
  const std::map<int, WindowLandmark>& landmarks() const { return landmarks_; }

  /// Number of window keyframes observing the landmark.
  int observation_count(int landmark_id) const;
  /// Landmarks seen by >= 2 window keyframes, ascending id.
  std::vector<int> active_landmarks() const;

  /// Appends, evicts the oldest keyframe beyond capacity, retires landmarks
  /// with no remaining observation. Returns the number of evicted keyframes.
  int push(Keyframe kf);
  /// Drops landmarks no keyframe observes.
  void retire_unobserved();

 private:
  int capacity_;
  std::deque<Keyframe> keyframes_;
  std::map<int, WindowLandmark> landmarks_;
};

/// Fixed data shared by all estimator operations.
struct EstimatorContext {
  SensorRig rig;
  CameraModel right;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);  // local frame
  EstimatorParams params;

  EstimatorContext(const SensorRig& r, const Vec3& g, const EstimatorParams& p)
      : rig(r), right(r.right_camera()), gravity(g), params(p) {}
};

/// Left-camera point from a stereo pair, or nullopt when the pair fails the
/// disparity, epipolar or depth gates.
std::optional<Vec3> triangulate_stereo(const KeyframeObservation& o, const EstimatorContext& ctx);

/// Appends a keyframe; landmarks first seen here are triangulated from this
/// keyframe. Throws Error(TooFewObservations) below the tracking minimum.
void insert_keyframe(SlidingWindow& window, int id, double timestamp, const NavState& state,
                     const std::vector<StereoObservation>& observations,
                     std::optional<PreintegratedImu> preint, const EstimatorContext& ctx);

/// One constraint per active landmark against its nearest map point; metric by
/// normal consistency of the k nearest points. Gated by distance.
std::vector<MapConstraint> associate_constraints(const SlidingWindow& window,
                                                 const AnchorTransform& anchor,
                                                 const PointCloudMap& map,
                                                 const AssociationParams& params);

/// Mean metric residual (m) of the constraints at the current anchor.
double mean_constraint_residual(const SlidingWindow& window, const AnchorTransform& anchor,
                                const std::vector<MapConstraint>& constraints);

/// Visual-inertial bundle adjustment without map terms.
SolverReport vio_ba(SlidingWindow& window, const EstimatorContext& ctx);

/// Joint solve of states, landmarks and anchor with map and prior terms.
/// Without constraints the anchor is left out and this equals vio_ba.
SolverReport non_rigid_ba(SlidingWindow& window, AnchorTransform& anchor, const Pose& prior_mean,
                          const std::vector<MapConstraint>& constraints,
                          const EstimatorContext& ctx);

struct RigidReport {
  SolverReport vio;
  SolverReport anchor;  // last anchor-only solve
  int icp_iterations = 0;
  double last_update = 0.0;
  std::size_t constraints = 0;
};

/// VIO solve, then ICP-style anchor-only alignment with the window held fixed.
RigidReport rigid_ba(SlidingWindow& window, AnchorTransform& anchor, const Pose& prior_mean,
                     const PointCloudMap& map, const EstimatorContext& ctx);

/// Anchor-only ICP stage on its own (landmarks and states untouched).
RigidReport align_anchor(const SlidingWindow& window, AnchorTransform& anchor,
                         const Pose& prior_mean, const PointCloudMap& map,
                         const EstimatorContext& ctx);

/// Removes observations whose reprojection error exceeds the threshold in
/// either camera; landmarks left with one observation are re-triangulated
/// from their newest one. Returns the number removed.
int reject_outliers(SlidingWindow& window, const EstimatorContext& ctx);

struct StepReport {
  long counter = 0;
  BaMode mode = BaMode::NonRigid;
  double timestamp = 0.0;
  SolverReport report;  // last solve
  int icp_iterations = 0;
  std::size_t constraints = 0;
  std::size_t plane_constraints = 0;
  std::size_t active_landmarks = 0;
  int rejected = 0;
  double mean_residual = 0.0;  // after the step
  Pose anchor;
};

StepReport step(SlidingWindow& window, AnchorTransform& anchor, const Pose& prior_mean,
                const PointCloudMap& map, const BaSchedule& schedule, long counter,
                const EstimatorContext& ctx);

/// Online localization driver: feeds IMU and frames, manages keyframes,
/// runs the scheduled bundle adjustment and tracks divergence.
class Estimator {
 public:
  Estimator(const PointCloudMap& map, const SensorRig& rig, const Vec3& gravity_local,
            const EstimatorParams& params, const BaSchedule& schedule);

  /// Seeds the window with the first keyframe. Throws Error(InsufficientParallax)
  /// when too few stereo pairs triangulate.
  void initialize(const Pose& anchor_guess, const NavState& initial_state,
                  const CameraFrame& first_frame);

  void add_imu(const ImuSample& s);
  /// Returns a report when the frame became a keyframe and a step ran.
  std::optional<StepReport> add_frame(const CameraFrame& frame);

  bool diverged() const { return diverged_; }
  const AnchorTransform& anchor() const { return anchor_; }
  const Pose& prior_mean() const { return prior_mean_; }
  const SlidingWindow& window() const { return window_; }
  /// Newest keyframe in the map frame after each step.
  const std::vector<TimedPose>& trajectory() const { return trajectory_; }
  /// (last keyframe pose, predicted pose, overlap, inserted) per frame.
  struct PolicyRecord {
    Pose last_keyframe;
    Pose current;
    double overlap = 0.0;
    bool inserted = false;
  };
  const std::vector<PolicyRecord>& policy_log() const { return policy_log_; }
  int keyframe_count() const { return next_keyframe_id_; }

 private:
  PreintegratedImu preintegrate(double t0, double t1, const ImuBias& bias) const;

  const PointCloudMap& map_;
  EstimatorContext ctx_;
  BaSchedule schedule_;
  SlidingWindow window_;
  AnchorTransform anchor_;
  Pose prior_mean_;
  std::vector<ImuSample> imu_;
  std::vector<TimedPose> trajectory_;
  std::vector<PolicyRecord> policy_log_;
  long counter_ = 0;
  int next_keyframe_id_ = 0;
  bool initialized_ = false;
  bool diverged_ = false;
  std::optional<double> initial_residual_;
  int bad_steps_ = 0;
};

}  // namespace crossloc
