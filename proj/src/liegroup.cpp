#include "crossloc/liegroup.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/SVD>

namespace crossloc {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::AngleNearPi: return "AngleNearPi";
    case ErrorCode::EmptyStream: return "EmptyStream";
    case ErrorCode::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::MetricMismatch: return "MetricMismatch";
    case ErrorCode::NormalEquationsSingular: return "NormalEquationsSingular";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::EmptyMap: return "EmptyMap";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::TooFewObservations: return "TooFewObservations";
    case ErrorCode::InsufficientParallax: return "InsufficientParallax";
    case ErrorCode::MissingPose: return "MissingPose";
    case ErrorCode::MismatchedSupport: return "MismatchedSupport";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

namespace {

Vec3 vee(const Mat3& m) { return Vec3(m(2, 1), m(0, 2), m(1, 0)); }

// One Bjorck step; keeps composition chains on SO(3).
Mat3 reorthonormalize(const Mat3& r) {
  return 0.5 * r * (3.0 * Mat3::Identity() - r.transpose() * r);
}

}  // namespace

Mat3 so3_exp(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 K = skew(phi);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + (1.0 - theta2 / 6.0) * K + (0.5 - theta2 / 24.0) * K * K;
  }
  return Mat3::Identity() + (std::sin(theta) / theta) * K +
         ((1.0 - std::cos(theta)) / theta2) * K * K;
}

Vec3 so3_log(const Mat3& R) {
  const double cos_theta = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  const Vec3 w = 0.5 * vee(R - R.transpose());  // sin(theta) * axis
  const double sin_theta = w.norm();
  const double theta = std::atan2(sin_theta, cos_theta);
  if (theta < kSmallAngle) {
    // theta / sin(theta) ~ 1 + theta^2 / 6
    return (1.0 + theta * theta / 6.0) * w;
  }
  if (std::numbers::pi - theta < 1e-3) {
    // Near pi the antisymmetric part vanishes; recover the axis from the
    // symmetric part and take the sign from w.
    const Mat3 B = 0.5 * (R + R.transpose()) - cos_theta * Mat3::Identity();
    int col = 0;
    B.diagonal().maxCoeff(&col);
    Vec3 axis = B.col(col).normalized();
    if (axis.dot(w) < 0.0) axis = -axis;
    return theta * axis;
  }
  return (theta / sin_theta) * w;
}

Mat3 so3_left_jacobian(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 K = skew(phi);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + (0.5 - theta2 / 24.0) * K + (1.0 / 6.0 - theta2 / 120.0) * K * K;
  }
  return Mat3::Identity() + ((1.0 - std::cos(theta)) / theta2) * K +
         ((theta - std::sin(theta)) / (theta2 * theta)) * K * K;
}

Mat3 so3_left_jacobian_inverse(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 K = skew(phi);
  if (theta < kSmallAngle) {
    return Mat3::Identity() - 0.5 * K + (1.0 / 12.0 + theta2 / 720.0) * K * K;
  }
  const double c = 1.0 / theta2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() - 0.5 * K + c * K * K;
}

Mat3 so3_right_jacobian(const Vec3& phi) { return so3_left_jacobian(-phi); }

Mat3 so3_right_jacobian_inverse(const Vec3& phi) { return so3_left_jacobian_inverse(-phi); }

namespace {

// Coupling block of the SE(3) left Jacobian.
Mat3 se3_q_block(const Vec3& phi, const Vec3& rho) {
  const double theta2 = phi.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 P = skew(phi);
  const Mat3 Rh = skew(rho);
  double c1, c2, c3;
  if (theta < 1e-4) {
    c1 = 1.0 / 6.0 - theta2 / 120.0;
    c2 = 1.0 / 24.0 - theta2 / 720.0;
    c3 = 1.0 / 120.0 - theta2 / 2520.0;
  } else {
    const double s = std::sin(theta), c = std::cos(theta);
    c1 = (theta - s) / (theta2 * theta);
    c2 = (theta2 + 2.0 * c - 2.0) / (2.0 * theta2 * theta2);
    c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * theta2 * theta2 * theta);
  }
  const Mat3 PR = P * Rh;
  const Mat3 RP = Rh * P;
  const Mat3 PRP = PR * P;
  return 0.5 * Rh + c1 * (PR + RP + PRP) + c2 * (P * PR + RP * P - 3.0 * PRP) +
         c3 * (PRP * P + P * PRP);
}

}  // namespace

Mat6 se3_left_jacobian(const Vec6& xi) {
  const Vec3 phi = xi.head<3>();
  const Vec3 rho = xi.tail<3>();
  const Mat3 J = so3_left_jacobian(phi);
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = J;
  out.bottomRightCorner<3, 3>() = J;
  out.bottomLeftCorner<3, 3>() = se3_q_block(phi, rho);
  return out;
}

Mat6 se3_right_jacobian_inverse(const Vec6& xi) {
  const Vec6 neg = -xi;
  const Mat3 Jinv = so3_left_jacobian_inverse(neg.head<3>());
  const Mat3 Q = se3_q_block(neg.head<3>(), neg.tail<3>());
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = Jinv;
  out.bottomRightCorner<3, 3>() = Jinv;
  out.bottomLeftCorner<3, 3>() = -Jinv * Q * Jinv;
  return out;
}

Rotation::Rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  m_ = r;
}

Rotation::Rotation(const Eigen::Quaterniond& q) : m_(q.normalized().toRotationMatrix()) {}

Rotation Rotation::exp(const Vec3& phi) { return Rotation(so3_exp(phi), Raw{}); }

Rotation Rotation::about_z(double angle) { return exp(Vec3(0.0, 0.0, angle)); }

Vec3 Rotation::log() const { return so3_log(m_); }

Eigen::Quaterniond Rotation::quaternion() const {
  Eigen::Quaterniond q(m_);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return q;
}

Rotation Rotation::inverse() const { return Rotation(m_.transpose(), Raw{}); }

Rotation Rotation::operator*(const Rotation& other) const {
  return Rotation(reorthonormalize(m_ * other.m_), Raw{});
}

double Rotation::angle() const { return so3_log(m_).norm(); }

double Rotation::yaw() const { return std::atan2(m_(1, 0), m_(0, 0)); }

Pose Pose::operator*(const Pose& other) const {
  return Pose(rotation_ * other.rotation_, rotation_.matrix() * other.translation_ + translation_);
}

Pose Pose::inverse() const {
  const Rotation rinv = rotation_.inverse();
  return Pose(rinv, -(rinv.matrix() * translation_));
}

Pose Pose::retract(const Vec6& delta) const { return *this * crossloc::exp(Twist(delta)); }

Mat6 Pose::adjoint() const {
  Mat6 a = Mat6::Zero();
  a.topLeftCorner<3, 3>() = R();
  a.bottomRightCorner<3, 3>() = R();
  a.bottomLeftCorner<3, 3>() = skew(translation_) * R();
  return a;
}

Pose exp(const Twist& xi) {
  return Pose(Rotation::exp(xi.phi), so3_left_jacobian(xi.phi) * xi.rho);
}

Twist log(const Pose& p) {
  const Vec3 phi = so3_log(p.R());
  if (phi.norm() >= std::numbers::pi - 1e-6) {
    throw Error(ErrorCode::AngleNearPi, "rotation angle too close to pi for Log");
  }
  return Twist(phi, so3_left_jacobian_inverse(phi) * p.t());
}

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a <= 0.0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

}  // namespace crossloc
