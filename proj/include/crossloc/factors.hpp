#pragma once

#include "crossloc/nls_solver.hpp"

// Solver factors wrapping the residuals. Block layouts are listed per class;
// pose blocks use the right-perturbation tangent (phi, rho).

namespace crossloc {

/// Blocks: {body pose, landmark(3)}.
class ReprojectionFactor : public Factor {
 public:
  ReprojectionFactor(BlockId pose, BlockId landmark, const Vec2& pixel, const CameraModel& cam);
  bool evaluate(const Problem& p, VecX& r, std::vector<MatX>* J) const override;

 private:
  Vec2 pixel_;
  CameraModel cam_;
};

/// Blocks: {pose_i, vel_i, accel_bias_i, gyro_bias_i, pose_k, vel_k}. Motion part only.
class PreintegrationFactor : public Factor {
 public:
  PreintegrationFactor(BlockId pose_i, BlockId vel_i, BlockId ba_i, BlockId bg_i, BlockId pose_k,
                       BlockId vel_k, PreintegratedImu pre, const Vec3& gravity);
  bool evaluate(const Problem& p, VecX& r, std::vector<MatX>* J) const override;

 private:
  PreintegratedImu pre_;
  Vec3 gravity_;
};

/// Blocks: {accel_bias_i, gyro_bias_i, accel_bias_k, gyro_bias_k}.
class BiasWalkFactor : public Factor {
 public:
  BiasWalkFactor(BlockId ba_i, BlockId bg_i, BlockId ba_k, BlockId bg_k);
  bool evaluate(const Problem& p, VecX& r, std::vector<MatX>* J) const override;
};

/// Blocks: {anchor pose, landmark(3)}. Scalar signed distance; the information
/// passed in is the 3x3 Omega, reduced to n^T Omega n.
class PointToPlaneFactor : public Factor {
 public:
  PointToPlaneFactor(BlockId anchor, BlockId landmark, MapConstraint c);
  bool evaluate(const Problem& p, VecX& r, std::vector<MatX>* J) const override;

 private:
  MapConstraint c_;
};

/// Blocks: {anchor pose, landmark(3)}.
class PointToPointFactor : public Factor {
 public:
  PointToPointFactor(BlockId anchor, BlockId landmark, MapConstraint c);
  bool evaluate(const Problem& p, VecX& r, std::vector<MatX>* J) const override;

 private:
  MapConstraint c_;
};

/// Blocks: {anchor pose}.
class AnchorPriorFactor : public Factor {
 public:
  AnchorPriorFactor(BlockId anchor, const Pose& mean);
  bool evaluate(const Problem& p, VecX& r, std::vector<MatX>* J) const override;

 private:
  Pose mean_;
};

/// Point-to-plane or point-to-point factor depending on the constraint metric.
std::unique_ptr<Factor> make_map_factor(BlockId anchor, BlockId landmark, const MapConstraint& c,
                                        const RobustKernel& kernel);

}  // namespace crossloc
