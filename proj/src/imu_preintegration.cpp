#include "crossloc/imu_preintegration.hpp"

#include <fstream>
#include <sstream>

#include <Eigen/Cholesky>

#include "crossloc/text_io.hpp"

namespace crossloc {

Mat9 PreintegratedImu::information() const {
  // Regularize the first few samples where covariance is nearly singular.
  const Mat9 cov = covariance + 1e-12 * Mat9::Identity();
  return cov.ldlt().solve(Mat9::Identity());
}

Mat6 PreintegratedImu::bias_information() const {
  const double dt = std::max(dt_total, 1e-6);
  Mat6 info = Mat6::Zero();
  info.diagonal().head<3>().setConstant(1.0 / (noise.accel_bias_walk * noise.accel_bias_walk * dt));
  info.diagonal().tail<3>().setConstant(1.0 / (noise.gyro_bias_walk * noise.gyro_bias_walk * dt));
  return info;
}

ImuPreintegrator::ImuPreintegrator(const ImuBias& bias, const ImuNoiseModel& noise) {
  pre_.linearization_bias = bias;
  pre_.noise = noise;
}

void ImuPreintegrator::add(const ImuSample& sample) {
  if (count_ == 0) {
    last_ = sample;
    ++count_;
    return;
  }
  const double dt = sample.timestamp - last_.timestamp;
  if (!(dt > 0.0)) {
    throw Error(ErrorCode::NonMonotonicTimestamps,
                "sample at t=" + std::to_string(sample.timestamp) + " does not follow t=" +
                    std::to_string(last_.timestamp));
  }
  const ImuBias& b = pre_.linearization_bias;

  const Vec3 omega = 0.5 * (last_.angular_velocity + sample.angular_velocity) - b.gyro;
  const Vec3 acc0 = last_.linear_acceleration - b.accel;
  const Vec3 acc1 = sample.linear_acceleration - b.accel;

  const Mat3 R0 = pre_.delta_R.matrix();
  const Mat3 dR = so3_exp(omega * dt);
  const Mat3 R1 = R0 * dR;
  const Mat3 Jr = so3_right_jacobian(omega * dt);

  // Bias Jacobians: exact derivatives of the midpoint recursion below.
  const Mat3 J_g_dR1 = dR.transpose() * pre_.J_g_dR - Jr * dt;
  const Mat3 da_dbg =
      -0.5 * (R0 * skew(acc0) * pre_.J_g_dR + R1 * skew(acc1) * J_g_dR1);
  const Mat3 da_dba = -0.5 * (R0 + R1);

  const Vec3 acc_mid = 0.5 * (R0 * acc0 + R1 * acc1);

  // Error-state covariance propagation, order (R, p, v).
  const Vec3 acc_body = 0.5 * (acc0 + dR * acc1);
  Mat9 A = Mat9::Identity();
  A.block<3, 3>(0, 0) = dR.transpose();
  A.block<3, 3>(3, 0) = -0.5 * R0 * skew(acc_body) * dt * dt;
  A.block<3, 3>(3, 6) = Mat3::Identity() * dt;
  A.block<3, 3>(6, 0) = -R0 * skew(acc_body) * dt;
  Eigen::Matrix<double, 9, 6> B = Eigen::Matrix<double, 9, 6>::Zero();
  B.block<3, 3>(0, 0) = Jr * dt;
  B.block<3, 3>(3, 3) = 0.5 * R0 * dt * dt;
  B.block<3, 3>(6, 3) = R0 * dt;
  Mat6 Q = Mat6::Zero();
  const double sg = pre_.noise.gyro_noise_density, sa = pre_.noise.accel_noise_density;
  Q.diagonal().head<3>().setConstant(sg * sg / dt);
  Q.diagonal().tail<3>().setConstant(sa * sa / dt);
  pre_.covariance = A * pre_.covariance * A.transpose() + B * Q * B.transpose();
  pre_.covariance = (0.5 * (pre_.covariance + pre_.covariance.transpose())).eval();

  pre_.delta_p += pre_.delta_v * dt + 0.5 * acc_mid * dt * dt;
  pre_.J_g_dp += pre_.J_g_dv * dt + 0.5 * da_dbg * dt * dt;
  pre_.J_a_dp += pre_.J_a_dv * dt + 0.5 * da_dba * dt * dt;
  pre_.delta_v += acc_mid * dt;
  pre_.J_g_dv += da_dbg * dt;
  pre_.J_a_dv += da_dba * dt;
  pre_.delta_R = pre_.delta_R * Rotation::exp(omega * dt);
  pre_.J_g_dR = J_g_dR1;
  pre_.dt_total += dt;

  last_ = sample;
  ++count_;
}

PreintegratedImu integrate(std::span<const ImuSample> samples, const ImuBias& bias,
                           const ImuNoiseModel& noise) {
  if (samples.size() < 2) {
    throw Error(ErrorCode::EmptyStream, "need at least one sample interval");
  }
  ImuPreintegrator integrator(bias, noise);
  for (const ImuSample& s : samples) integrator.add(s);
  return integrator.result();
}

CorrectedDelta bias_corrected_delta(const PreintegratedImu& pre, const ImuBias& new_bias) {
  const Vec3 dbg = new_bias.gyro - pre.linearization_bias.gyro;
  const Vec3 dba = new_bias.accel - pre.linearization_bias.accel;
  return CorrectedDelta{
      pre.delta_R * Rotation::exp(pre.J_g_dR * dbg),
      pre.delta_p + pre.J_g_dp * dbg + pre.J_a_dp * dba,
      pre.delta_v + pre.J_g_dv * dbg + pre.J_a_dv * dba,
  };
}

NavState predict_state(const NavState& s_i, const PreintegratedImu& pre, const Vec3& gravity) {
  const CorrectedDelta d = bias_corrected_delta(pre, s_i.bias());
  const double dt = pre.dt_total;
  const Mat3& Ri = s_i.pose.R();
  NavState out = s_i;
  out.pose = Pose(s_i.pose.rotation() * d.delta_R,
                  s_i.pose.t() + s_i.velocity * dt + 0.5 * gravity * dt * dt + Ri * d.delta_p);
  out.velocity = s_i.velocity + gravity * dt + Ri * d.delta_v;
  return out;
}

std::vector<ImuSample> load_imu_stream(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::vector<ImuSample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split_tokens(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 7) throw ParseError(path, line_no, "expected 7 columns");
    ImuSample s;
    s.timestamp = parse_double(tokens[0], path, line_no);
    for (int k = 0; k < 3; ++k) {
      s.angular_velocity[k] = parse_double(tokens[1 + k], path, line_no);
      s.linear_acceleration[k] = parse_double(tokens[4 + k], path, line_no);
    }
    if (!out.empty() && !(s.timestamp > out.back().timestamp)) {
      throw ParseError(path, line_no, "timestamps must be strictly increasing");
    }
    out.push_back(s);
  }
  return out;
}

void save_imu_stream(const std::string& path, std::span<const ImuSample> samples) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "# t wx wy wz ax ay az\n";
  for (const ImuSample& s : samples) {
    out << format_double(s.timestamp);
    for (int k = 0; k < 3; ++k) out << ' ' << format_double(s.angular_velocity[k]);
    for (int k = 0; k < 3; ++k) out << ' ' << format_double(s.linear_acceleration[k]);
    out << '\n';
  }
}

}  // namespace crossloc
