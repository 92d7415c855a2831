#pragma once

#include <Eigen/Geometry>

#include "crossloc/common.hpp"

// SO(3)/SE(3) helpers. Tangent vectors of SE(3) are ordered (phi, rho):
// rotation first, translation second. All on-manifold updates use the right
// perturbation P * Exp(delta).

namespace crossloc {

constexpr double kSmallAngle = 1e-6;

Mat3 skew(const Vec3& v);

/// Orthonormal 3x3 rotation. Every composition re-projects onto SO(3).
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}
  /// Projects `m` onto the closest rotation.
  explicit Rotation(const Mat3& m);
  explicit Rotation(const Eigen::Quaterniond& q);

  static Rotation identity() { return Rotation(); }
  static Rotation exp(const Vec3& phi);
  static Rotation about_z(double angle);

  Vec3 log() const;
  const Mat3& matrix() const { return m_; }
  Eigen::Quaterniond quaternion() const;
  Rotation inverse() const;
  Rotation operator*(const Rotation& other) const;
  Vec3 operator*(const Vec3& p) const { return m_ * p; }
  double angle() const;
  double yaw() const;

 private:
  struct Raw {};
  Rotation(const Mat3& m, Raw) : m_(m) {}
  Mat3 m_;
};

struct Twist {
  Vec3 phi = Vec3::Zero();
  Vec3 rho = Vec3::Zero();

  Twist() = default;
  Twist(const Vec3& phi_, const Vec3& rho_) : phi(phi_), rho(rho_) {}
  explicit Twist(const Vec6& v) : phi(v.head<3>()), rho(v.tail<3>()) {}
  Vec6 vector() const {
    Vec6 v;
    v << phi, rho;
    return v;
  }
};

class Pose {
 public:
  Pose() : translation_(Vec3::Zero()) {}
  Pose(const Rotation& r, const Vec3& t) : rotation_(r), translation_(t) {}

  static Pose identity() { return Pose(); }

  const Rotation& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  const Mat3& R() const { return rotation_.matrix(); }
  const Vec3& t() const { return translation_; }

  Pose operator*(const Pose& other) const;
  Vec3 operator*(const Vec3& p) const { return rotation_.matrix() * p + translation_; }
  Pose inverse() const;
  /// Right retraction: this * Exp(delta).
  Pose retract(const Vec6& delta) const;
  /// 6x6 adjoint in (phi, rho) ordering: Exp(Adj * xi) = P Exp(xi) P^-1.
  Mat6 adjoint() const;

 private:
  Rotation rotation_;
  Vec3 translation_;
};

Pose exp(const Twist& xi);
/// Throws Error(AngleNearPi) when the rotation angle is >= pi - 1e-6.
Twist log(const Pose& p);

Vec3 so3_log(const Mat3& R);
Mat3 so3_exp(const Vec3& phi);
Mat3 so3_left_jacobian(const Vec3& phi);
Mat3 so3_left_jacobian_inverse(const Vec3& phi);
Mat3 so3_right_jacobian(const Vec3& phi);
Mat3 so3_right_jacobian_inverse(const Vec3& phi);

/// Left Jacobian of SE(3) in (phi, rho) ordering.
Mat6 se3_left_jacobian(const Vec6& xi);
Mat6 se3_right_jacobian_inverse(const Vec6& xi);

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

}  // namespace crossloc
