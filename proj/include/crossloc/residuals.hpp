#pragma once

#include <optional>

#include "crossloc/imu_preintegration.hpp"

namespace crossloc {

struct Landmark {
  int id = -1;
  Vec3 position = Vec3::Zero();  // local frame
};

struct Observation {
  int keyframe_id = -1;
  int landmark_id = -1;
  Vec2 pixel = Vec2::Zero();
  Mat2 information = Mat2::Identity();
};

struct CameraModel {
  double fx = 400.0, fy = 400.0;
  double cx = 320.0, cy = 240.0;
  int width = 640, height = 480;
  Pose body_T_camera;  // camera pose in the body frame

  bool valid() const {
    return fx > 0 && fy > 0 && cx >= 0 && cx <= width && cy >= 0 && cy <= height;
  }
  Vec2 project(const Vec3& p_cam) const {
    return Vec2(fx * p_cam.x() / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy);
  }
  bool in_image(const Vec2& px) const {
    return px.x() >= 0.0 && px.y() >= 0.0 && px.x() < width && px.y() < height;
  }
};

enum class KernelKind { None, Cauchy };

struct RobustKernel {
  KernelKind kind = KernelKind::None;
  double scale = 1.0;

  static RobustKernel none() { return {}; }
  static RobustKernel cauchy(double c) { return {KernelKind::Cauchy, c}; }
};

struct RobustValue {
  double loss = 0.0;
  double derivative = 1.0;
};

/// rho(s) and rho'(s) for squared error s.
RobustValue robust_weight(const RobustKernel& kernel, double squared_error);

enum class MatchMetric { PointToPlane, PointToPoint };

struct MapConstraint {
  int landmark_id = -1;
  Vec3 map_point = Vec3::Zero();  // map frame
  std::optional<Vec3> normal;
  Mat3 information = Mat3::Identity();
  MatchMetric metric = MatchMetric::PointToPoint;
};

/// Local odometry frame expressed in the map frame.
struct AnchorTransform {
  Pose pose;
};

struct ReprojectionResult {
  Vec2 residual = Vec2::Zero();
  Mat26 d_pose = Mat26::Zero();
  Mat23 d_landmark = Mat23::Zero();
};

/// Throws Error(BehindCamera) for non-positive depth.
ReprojectionResult reprojection_residual(const Pose& body_in_local, const Vec3& landmark,
                                         const Vec2& pixel, const CameraModel& cam);
inline ReprojectionResult reprojection_residual(const NavState& state, const Landmark& lm,
                                                const Observation& obs, const CameraModel& cam) {
  return reprojection_residual(state.pose, lm.position, obs.pixel, cam);
}

/// Motion residual (e_R, e_p, e_v) and bias residual e_b with their Jacobian
/// blocks. The motion residual does not depend on the biases of keyframe k;
/// e_b is linear with +I / -I blocks.
struct PreintegrationResult {
  Vec9 residual = Vec9::Zero();
  Vec6 bias_residual = Vec6::Zero();  // (b_a_i - b_a_k, b_g_i - b_g_k)
  Eigen::Matrix<double, 9, 6> d_pose_i = Eigen::Matrix<double, 9, 6>::Zero();
  Eigen::Matrix<double, 9, 6> d_pose_k = Eigen::Matrix<double, 9, 6>::Zero();
  Eigen::Matrix<double, 9, 3> d_vel_i = Eigen::Matrix<double, 9, 3>::Zero();
  Eigen::Matrix<double, 9, 3> d_vel_k = Eigen::Matrix<double, 9, 3>::Zero();
  Eigen::Matrix<double, 9, 3> d_ba_i = Eigen::Matrix<double, 9, 3>::Zero();
  Eigen::Matrix<double, 9, 3> d_bg_i = Eigen::Matrix<double, 9, 3>::Zero();
};

PreintegrationResult preintegration_residual(const NavState& s_i, const NavState& s_k,
                                             const PreintegratedImu& pre, const Vec3& gravity);

struct PointToPlaneResult {
  double residual = 0.0;
  Eigen::Matrix<double, 1, 6> d_anchor;
  Eigen::Matrix<double, 1, 3> d_landmark;
};

PointToPlaneResult point_to_plane_residual(const AnchorTransform& anchor, const Landmark& lm,
                                           const MapConstraint& c);

struct PointToPointResult {
  Vec3 residual = Vec3::Zero();
  Mat36 d_anchor = Mat36::Zero();
  Mat3 d_landmark = Mat3::Zero();
};

PointToPointResult point_to_point_residual(const AnchorTransform& anchor, const Landmark& lm,
                                           const MapConstraint& c);

struct AnchorPriorResult {
  Vec6 residual = Vec6::Zero();
  Mat6 d_anchor = Mat6::Identity();
};

AnchorPriorResult anchor_prior_residual(const AnchorTransform& anchor, const Pose& prior_mean);

}  // namespace crossloc
