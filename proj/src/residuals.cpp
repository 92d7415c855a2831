#include "crossloc/residuals.hpp"

#include <cmath>

namespace crossloc {

RobustValue robust_weight(const RobustKernel& kernel, double s) {
  if (kernel.kind == KernelKind::None) return {s, 1.0};
  const double c2 = kernel.scale * kernel.scale;
  return {c2 * std::log1p(s / c2), 1.0 / (1.0 + s / c2)};
}

ReprojectionResult reprojection_residual(const Pose& body_in_local, const Vec3& landmark,
                                         const Vec2& pixel, const CameraModel& cam) {
  const Mat3& R = body_in_local.R();
  const Mat3& Rc = cam.body_T_camera.R();
  const Vec3 p_body = R.transpose() * (landmark - body_in_local.t());
  const Vec3 p_cam = Rc.transpose() * (p_body - cam.body_T_camera.t());
  if (!(p_cam.z() > 1e-9)) {
    throw Error(ErrorCode::BehindCamera, "landmark has non-positive depth");
  }
  const double iz = 1.0 / p_cam.z();
  Mat23 d_proj;
  d_proj << cam.fx * iz, 0.0, -cam.fx * p_cam.x() * iz * iz,
            0.0, cam.fy * iz, -cam.fy * p_cam.y() * iz * iz;

  ReprojectionResult out;
  out.residual = cam.project(p_cam) - pixel;
  const Mat23 d_body = d_proj * Rc.transpose();
  out.d_pose.leftCols<3>() = d_body * skew(p_body);
  out.d_pose.rightCols<3>() = -d_body;
  out.d_landmark = d_body * R.transpose();
  return out;
}

PreintegrationResult preintegration_residual(const NavState& s_i, const NavState& s_k,
                                             const PreintegratedImu& pre, const Vec3& gravity) {
  const double dt = pre.dt_total;
  const Mat3& Ri = s_i.pose.R();
  const Mat3& Rk = s_k.pose.R();
  const Mat3 RiT = Ri.transpose();
  const CorrectedDelta d = bias_corrected_delta(pre, s_i.bias());
  const Vec3 dbg = s_i.gyro_bias - pre.linearization_bias.gyro;

  const Mat3 E = d.delta_R.matrix().transpose() * RiT * Rk;
  const Vec3 e_R = so3_log(E);
  const Vec3 p_raw =
      RiT * (s_k.pose.t() - s_i.pose.t() - s_i.velocity * dt - 0.5 * gravity * dt * dt);
  const Vec3 v_raw = RiT * (s_k.velocity - s_i.velocity - gravity * dt);

  PreintegrationResult out;
  out.residual << e_R, p_raw - d.delta_p, v_raw - d.delta_v;
  out.bias_residual << s_i.accel_bias - s_k.accel_bias, s_i.gyro_bias - s_k.gyro_bias;

  const Mat3 Jr_inv = so3_right_jacobian_inverse(e_R);
  out.d_pose_i.block<3, 3>(0, 0) = -Jr_inv * Rk.transpose() * Ri;
  out.d_pose_k.block<3, 3>(0, 0) = Jr_inv;
  out.d_bg_i.block<3, 3>(0, 0) =
      -Jr_inv * E.transpose() * so3_right_jacobian(pre.J_g_dR * dbg) * pre.J_g_dR;

  out.d_pose_i.block<3, 3>(3, 0) = skew(p_raw);
  out.d_pose_i.block<3, 3>(3, 3) = -Mat3::Identity();
  out.d_pose_k.block<3, 3>(3, 3) = RiT * Rk;
  out.d_vel_i.block<3, 3>(3, 0) = -RiT * dt;
  out.d_ba_i.block<3, 3>(3, 0) = -pre.J_a_dp;
  out.d_bg_i.block<3, 3>(3, 0) = -pre.J_g_dp;

  out.d_pose_i.block<3, 3>(6, 0) = skew(v_raw);
  out.d_vel_i.block<3, 3>(6, 0) = -RiT;
  out.d_vel_k.block<3, 3>(6, 0) = RiT;
  out.d_ba_i.block<3, 3>(6, 0) = -pre.J_a_dv;
  out.d_bg_i.block<3, 3>(6, 0) = -pre.J_g_dv;
  return out;
}

PointToPlaneResult point_to_plane_residual(const AnchorTransform& anchor, const Landmark& lm,
                                           const MapConstraint& c) {
  if (c.metric != MatchMetric::PointToPlane || !c.normal) {
    throw Error(ErrorCode::MetricMismatch, "point-to-plane residual needs a plane constraint");
  }
  const Vec3& n = *c.normal;
  const Mat3& R = anchor.pose.R();
  PointToPlaneResult out;
  out.residual = (c.map_point - anchor.pose * lm.position).dot(n);
  const Eigen::Matrix<double, 1, 3> nR = n.transpose() * R;
  out.d_anchor.leftCols<3>() = nR * skew(lm.position);
  out.d_anchor.rightCols<3>() = -nR;
  out.d_landmark = -nR;
  return out;
}

PointToPointResult point_to_point_residual(const AnchorTransform& anchor, const Landmark& lm,
                                           const MapConstraint& c) {
  if (c.metric != MatchMetric::PointToPoint) {
    throw Error(ErrorCode::MetricMismatch, "point-to-point residual needs a point constraint");
  }
  const Mat3& R = anchor.pose.R();
  PointToPointResult out;
  out.residual = c.map_point - anchor.pose * lm.position;
  out.d_anchor.leftCols<3>() = R * skew(lm.position);
  out.d_anchor.rightCols<3>() = -R;
  out.d_landmark = -R;
  return out;
}

AnchorPriorResult anchor_prior_residual(const AnchorTransform& anchor, const Pose& prior_mean) {
  AnchorPriorResult out;
  out.residual = log(prior_mean.inverse() * anchor.pose).vector();
  out.d_anchor = se3_right_jacobian_inverse(out.residual);
  return out;
}

}  // namespace crossloc
