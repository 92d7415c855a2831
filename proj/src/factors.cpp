#include "crossloc/factors.hpp"

namespace crossloc {

namespace {

NavState state_from(const Problem& p, BlockId pose, BlockId vel, BlockId ba, BlockId bg) {
  NavState s;
  s.pose = p.pose(pose);
  s.velocity = p.vector(vel);
  s.accel_bias = p.vector(ba);
  s.gyro_bias = p.vector(bg);
  return s;
}

}  // namespace

ReprojectionFactor::ReprojectionFactor(BlockId pose, BlockId landmark, const Vec2& pixel,
                                       const CameraModel& cam)
    : Factor({pose, landmark}, 2), pixel_(pixel), cam_(cam) {}

bool ReprojectionFactor::evaluate(const Problem& p, VecX& r, std::vector<MatX>* J) const {
  const Vec3 lm = p.vector(blocks()[1]);
  const Pose& body = p.pose(blocks()[0]);
  // Depth check first so the common skip path does not throw.
  const Vec3 p_cam = cam_.body_T_camera.inverse() * (body.inverse() * lm);
  if (!(p_cam.z() > 1e-3)) return false;
  const ReprojectionResult res = reprojection_residual(body, lm, pixel_, cam_);
  r = res.residual;
  if (J) {
    (*J)[0] = res.d_pose;
    (*J)[1] = res.d_landmark;
  }
  return true;
}

PreintegrationFactor::PreintegrationFactor(BlockId pose_i, BlockId vel_i, BlockId ba_i,
                                           BlockId bg_i, BlockId pose_k, BlockId vel_k,
                                           PreintegratedImu pre, const Vec3& gravity)
    : Factor({pose_i, vel_i, ba_i, bg_i, pose_k, vel_k}, 9), pre_(std::move(pre)),
      gravity_(gravity) {
  set_information(pre_.information());
}

bool PreintegrationFactor::evaluate(const Problem& p, VecX& r, std::vector<MatX>* J) const {
  const auto& b = blocks();
  const NavState si = state_from(p, b[0], b[1], b[2], b[3]);
  NavState sk = si;
  sk.pose = p.pose(b[4]);
  sk.velocity = p.vector(b[5]);
  const PreintegrationResult res = preintegration_residual(si, sk, pre_, gravity_);
  r = res.residual;
  if (J) {
    (*J)[0] = res.d_pose_i;
    (*J)[1] = res.d_vel_i;
    (*J)[2] = res.d_ba_i;
    (*J)[3] = res.d_bg_i;
    (*J)[4] = res.d_pose_k;
    (*J)[5] = res.d_vel_k;
  }
  return true;
}

BiasWalkFactor::BiasWalkFactor(BlockId ba_i, BlockId bg_i, BlockId ba_k, BlockId bg_k)
    : Factor({ba_i, bg_i, ba_k, bg_k}, 6) {}

bool BiasWalkFactor::evaluate(const Problem& p, VecX& r, std::vector<MatX>* J) const {
  const auto& b = blocks();
  r.resize(6);
  r << p.vector(b[0]) - p.vector(b[2]), p.vector(b[1]) - p.vector(b[3]);
  if (J) {
    MatX top = MatX::Zero(6, 3), bottom = MatX::Zero(6, 3);
    top.topRows(3).setIdentity();
    bottom.bottomRows(3).setIdentity();
    (*J)[0] = top;
    (*J)[1] = bottom;
    (*J)[2] = -top;
    (*J)[3] = -bottom;
  }
  return true;
}

PointToPlaneFactor::PointToPlaneFactor(BlockId anchor, BlockId landmark, MapConstraint c)
    : Factor({anchor, landmark}, 1), c_(std::move(c)) {
  if (c_.metric != MatchMetric::PointToPlane || !c_.normal) {
    throw Error(ErrorCode::MetricMismatch, "point-to-plane factor needs a normal");
  }
  MatX info(1, 1);
  info(0, 0) = c_.normal->dot(c_.information * *c_.normal);
  set_information(info);
}

bool PointToPlaneFactor::evaluate(const Problem& p, VecX& r, std::vector<MatX>* J) const {
  const Landmark lm{c_.landmark_id, p.vector(blocks()[1])};
  const PointToPlaneResult res = point_to_plane_residual(AnchorTransform{p.pose(blocks()[0])}, lm, c_);
  r.resize(1);
  r[0] = res.residual;
  if (J) {
    (*J)[0] = res.d_anchor;
    (*J)[1] = res.d_landmark;
  }
  return true;
}

PointToPointFactor::PointToPointFactor(BlockId anchor, BlockId landmark, MapConstraint c)
    : Factor({anchor, landmark}, 3), c_(std::move(c)) {
  if (c_.metric != MatchMetric::PointToPoint) {
    throw Error(ErrorCode::MetricMismatch, "point-to-point factor needs a point constraint");
  }
  set_information(c_.information);
}

bool PointToPointFactor::evaluate(const Problem& p, VecX& r, std::vector<MatX>* J) const {
  const Landmark lm{c_.landmark_id, p.vector(blocks()[1])};
  const PointToPointResult res = point_to_point_residual(AnchorTransform{p.pose(blocks()[0])}, lm, c_);
  r = res.residual;
  if (J) {
    (*J)[0] = res.d_anchor;
    (*J)[1] = res.d_landmark;
  }
  return true;
}

AnchorPriorFactor::AnchorPriorFactor(BlockId anchor, const Pose& mean)
    : Factor({anchor}, 6), mean_(mean) {}

bool AnchorPriorFactor::evaluate(const Problem& p, VecX& r, std::vector<MatX>* J) const {
  const AnchorPriorResult res = anchor_prior_residual(AnchorTransform{p.pose(blocks()[0])}, mean_);
  r = res.residual;
  if (J) (*J)[0] = res.d_anchor;
  return true;
}

std::unique_ptr<Factor> make_map_factor(BlockId anchor, BlockId landmark, const MapConstraint& c,
                                        const RobustKernel& kernel) {
  std::unique_ptr<Factor> f;
  if (c.metric == MatchMetric::PointToPlane) {
    f = std::make_unique<PointToPlaneFactor>(anchor, landmark, c);
  } else {
    f = std::make_unique<PointToPointFactor>(anchor, landmark, c);
  }
  f->set_kernel(kernel);
  return f;
}

}  // namespace crossloc
