#pragma once

#include <span>
#include <string>
#include <vector>

#include "crossloc/liegroup.hpp"

namespace crossloc {

struct ImuSample {
  double timestamp = 0.0;
  Vec3 angular_velocity = Vec3::Zero();
  Vec3 linear_acceleration = Vec3::Zero();
};

struct ImuNoiseModel {
  double gyro_noise_density = 1.7e-4;   // rad/s/sqrt(Hz)
  double accel_noise_density = 6.0e-4;  // m/s^2/sqrt(Hz)
  double gyro_bias_walk = 2.0e-5;       // rad/s^2/sqrt(Hz)
  double accel_bias_walk = 2.0e-4;      // m/s^3/sqrt(Hz)

  bool valid() const {
    return gyro_noise_density > 0 && accel_noise_density > 0 && gyro_bias_walk > 0 &&
           accel_bias_walk > 0;
  }
};

struct ImuBias {
  Vec3 gyro = Vec3::Zero();
  Vec3 accel = Vec3::Zero();
};

/// Body state at a keyframe, expressed in the local odometry frame.
struct NavState {
  Pose pose;  // body in local
  Vec3 velocity = Vec3::Zero();
  Vec3 accel_bias = Vec3::Zero();
  Vec3 gyro_bias = Vec3::Zero();

  ImuBias bias() const { return ImuBias{gyro_bias, accel_bias}; }
};

struct CorrectedDelta {
  Rotation delta_R;
  Vec3 delta_p;
  Vec3 delta_v;
};

/// Relative-motion pseudo-measurement between two keyframes.
struct PreintegratedImu {
  Rotation delta_R;
  Vec3 delta_p = Vec3::Zero();
  Vec3 delta_v = Vec3::Zero();
  double dt_total = 0.0;
  Mat3 J_g_dR = Mat3::Zero();
  Mat3 J_g_dv = Mat3::Zero();
  Mat3 J_a_dv = Mat3::Zero();
  Mat3 J_g_dp = Mat3::Zero();
  Mat3 J_a_dp = Mat3::Zero();
  Mat9 covariance = Mat9::Zero();  // order: R, p, v
  ImuBias linearization_bias;
  ImuNoiseModel noise;

  /// Inverse of the propagated covariance.
  Mat9 information() const;
  /// Inverse of (bias_walk^2 * dt) per axis; order (accel, gyro).
  Mat6 bias_information() const;
};

/// Incremental midpoint integrator; `integrate` is a fold over this.
class ImuPreintegrator {
 public:
  ImuPreintegrator(const ImuBias& bias, const ImuNoiseModel& noise);

  /// Integrates the interval between the previous sample and `sample`.
  void add(const ImuSample& sample);
  const PreintegratedImu& result() const { return pre_; }
  std::size_t sample_count() const { return count_; }

 private:
  PreintegratedImu pre_;
  ImuSample last_;
  std::size_t count_ = 0;
};

PreintegratedImu integrate(std::span<const ImuSample> samples, const ImuBias& bias,
                           const ImuNoiseModel& noise);

CorrectedDelta bias_corrected_delta(const PreintegratedImu& pre, const ImuBias& new_bias);

NavState predict_state(const NavState& s_i, const PreintegratedImu& pre, const Vec3& gravity);

/// Reads `t wx wy wz ax ay az` lines; '#' starts a comment.
std::vector<ImuSample> load_imu_stream(const std::string& path);
void save_imu_stream(const std::string& path, std::span<const ImuSample> samples);

}  // namespace crossloc
