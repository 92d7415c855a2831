#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crossloc/session.hpp"

namespace crossloc {

enum class Shape { Ground, Box, Cylinder, Sphere };
enum class Presence { Static, SemiStatic, Dynamic };

struct WorldElement {
  int id = -1;
  std::string name;
  Shape shape = Shape::Box;
  Presence presence = Presence::Static;
  std::vector<int> sessions;  // semi-static: sessions in which it exists
  Vec3 lo = Vec3::Zero(), hi = Vec3::Zero();  // box corners
  Vec3 center = Vec3::Zero();  // cylinder base centre / sphere centre
  double radius = 0.0;
  double height = 0.0;  // cylinder
  // Dynamic boxes oscillate: offset(t) = motion_amplitude * sin(2 pi t / motion_period).
  Vec3 motion_amplitude = Vec3::Zero();
  double motion_period = 1.0;

  bool present_in(int session) const;
  Vec3 offset_at(double t) const;
};

/// A visual feature point on a feature-dense surface.
struct FeaturePoint {
  int id = -1;
  int element = -1;
  Vec3 position = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
};

struct WorldModel {
  std::vector<WorldElement> elements;  // elements[i].id == i
  std::vector<FeaturePoint> features;  // features[i].id == i
  double ground_feature_visibility = 0.4;

  const WorldElement& element(int id) const { return elements.at(id); }
};

struct RayHit {
  double distance = 0.0;
  int element = -1;
};

/// Nearest intersection along origin + s * dir (unit dir), s in (0, max_range].
std::optional<RayHit> cast_ray(const WorldModel& world, const Vec3& origin, const Vec3& dir,
                               double max_range, int session, double time,
                               bool include_dynamic);

struct TrajectorySpec {
  std::vector<Vec3> waypoints;  // map frame
  double speed = 1.8;           // m/s
  bool reverse = false;
  bool closed = true;
};

/// C2 cubic spline through the waypoints, timed by chord length / speed.
/// Heading follows the velocity; roll and pitch are zero.
class Trajectory {
 public:
  explicit Trajectory(const TrajectorySpec& spec);

  double period() const { return times_.back(); }
  bool closed() const { return closed_; }

  Vec3 position(double t) const;
  Vec3 velocity(double t) const;
  Vec3 acceleration(double t) const;
  double yaw(double t) const;
  double yaw_rate(double t) const;
  Pose pose(double t) const;

 private:
  struct Axis {
    std::vector<double> y, m;  // values and second derivatives at knots
  };
  double wrap(double t, int& seg) const;
  double eval(const Axis& a, double t, int deriv) const;

  bool closed_ = true;
  std::vector<double> times_;
  Axis axes_[3];
};

/// Rounded-rectangle loop (40 m x 20 m, corner radius 5 m) at body height.
TrajectorySpec make_default_loop(double body_height = 0.4, double speed = 1.8);

/// The default scene: eight facades, twelve poles, ground, two semi-static cars,
/// one moving box and three bushes. `seed` draws the feature points.
WorldModel make_default_world(std::uint64_t seed = 7);

struct SimulationOptions {
  double duration = 60.0;
  double imu_rate = 200.0;
  double frame_rate = 10.0;
  double scan_rate = 2.0;
  double outlier_fraction = 0.02;
  double max_feature_range = 40.0;
  double initial_gyro_bias_sigma = 1e-3;
  double initial_accel_bias_sigma = 2e-2;
  bool noise_free = false;  // no pixel, IMU, laser noise, no outliers, no bias walk
  bool with_laser = true;
};

/// Ideal IMU readings plus the states reached by integrating them with the
/// same midpoint recursion the preintegrator uses. Treating the integrated
/// states as ground truth makes noise-free IMU factors exactly consistent.
struct ImuTruth {
  std::vector<ImuSample> ideal;
  std::vector<NavState> states;  // body in map, biases zero
};

ImuTruth synthesize_ideal_imu(const Trajectory& traj, const SensorRig& rig, double imu_rate,
                              double duration);

/// Pixels of `feature` in both cameras if visible from `body` (frustum,
/// range, back-face and occlusion checks), without noise.
std::optional<StereoObservation> observe_feature(const WorldModel& world, const FeaturePoint& f,
                                                 const Pose& body, const SensorRig& rig,
                                                 int session, double max_range);

/// Noise-free scan from `body`, points in the laser frame.
LaserScan simulate_scan(const WorldModel& world, const Pose& body, const SensorRig& rig,
                        int session, double time);

/// Deterministic per (world, spec, rig, session_id, seed, options).
SessionData generate_session(const WorldModel& world, const TrajectorySpec& spec,
                             const SensorRig& rig, int session_id, std::uint64_t seed,
                             const SimulationOptions& options = {});

/// Ground features visible in a session (deterministic per seed and session).
std::vector<char> ground_feature_mask(const WorldModel& world, int session, std::uint64_t seed);

}  // namespace crossloc
