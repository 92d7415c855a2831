#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>

#include <Eigen/Eigenvalues>

#include "crossloc/imu_preintegration.hpp"
#include "oracles.hpp"

using namespace crossloc;

namespace {

using Signal = std::function<Vec3(double)>;

std::vector<ImuSample> sample_stream(const Signal& gyro, const Signal& acc, double t0, double T,
                                     int intervals) {
  std::vector<ImuSample> out;
  for (int i = 0; i <= intervals; ++i) {
    const double t = t0 + T * i / intervals;
    out.push_back(ImuSample{t, gyro(t), acc(t)});
  }
  return out;
}

Signal constant(const Vec3& v) {
  return [v](double) { return v; };
}

Signal wobble(oracle::Rng& rng, double amp) {
  const Vec3 a = rng.vec3(amp), f = rng.vec3(3.0), ph = rng.vec3(3.0), c = rng.vec3(amp);
  return [=](double t) {
    Vec3 v;
    for (int k = 0; k < 3; ++k) v[k] = c[k] + a[k] * std::sin(f[k] * t + ph[k]);
    return v;
  };
}

ImuNoiseModel noise() { return ImuNoiseModel{}; }

}  // namespace

TEST_SUITE("imu") {

TEST_CASE("null motion") {
  const auto s = sample_stream(constant(Vec3::Zero()), constant(Vec3::Zero()), 0.0, 0.7, 35);
  const PreintegratedImu p = integrate(s, ImuBias{}, noise());
  CHECK((p.delta_R.matrix() - Mat3::Identity()).norm() == 0.0);
  CHECK(p.delta_v.norm() == 0.0);
  CHECK(p.delta_p.norm() == 0.0);
}

TEST_CASE("constant acceleration closed form") {
  const auto s = sample_stream(constant(Vec3::Zero()), constant(Vec3(1, 0, 0)), 0.0, 1.0, 100);
  const PreintegratedImu p = integrate(s, ImuBias{}, noise());
  CHECK((p.delta_v - Vec3(1, 0, 0)).norm() < 1e-9);
  CHECK((p.delta_p - Vec3(0.5, 0, 0)).norm() < 1e-3);
  CHECK(std::abs(p.dt_total - 1.0) < 1e-12);
}

TEST_CASE("constant rate closed form") {
  const auto s = sample_stream(constant(Vec3(0, 0, 0.5)), constant(Vec3::Zero()), 0.0, 2.0, 200);
  const PreintegratedImu p = integrate(s, ImuBias{}, noise());
  CHECK((p.delta_R.matrix() - oracle::rot_exp(Vec3(0, 0, 1.0))).norm() < 1e-6);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(integrate(std::vector<ImuSample>{}, ImuBias{}, noise()), Error);
  CHECK_THROWS_AS(integrate(std::vector<ImuSample>{ImuSample{}}, ImuBias{}, noise()), Error);
  std::vector<ImuSample> bad{ImuSample{0.0}, ImuSample{0.1}, ImuSample{0.1}};
  try {
    integrate(bad, ImuBias{}, noise());
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonMonotonicTimestamps);
  }
}

TEST_CASE("bias correction with zero change leaves deltas alone") {
  oracle::Rng rng(1);
  const auto s = sample_stream(wobble(rng, 0.5), wobble(rng, 2.0), 0.0, 1.0, 200);
  ImuBias b;
  b.gyro = Vec3(0.01, -0.02, 0.003);
  b.accel = Vec3(0.1, 0.05, -0.2);
  const PreintegratedImu p = integrate(s, b, noise());
  const CorrectedDelta d = bias_corrected_delta(p, b);
  // Rotation products re-orthonormalize, so only rounding separates the two.
  CHECK((d.delta_R.matrix() - p.delta_R.matrix()).norm() < 1e-15);
  CHECK(d.delta_p == p.delta_p);
  CHECK(d.delta_v == p.delta_v);
}

TEST_CASE("gyro bias correction matches re-integration") {
  oracle::Rng rng(2);
  const auto s = sample_stream(wobble(rng, 0.5), wobble(rng, 2.0), 0.0, 1.0, 200);
  const PreintegratedImu p = integrate(s, ImuBias{}, noise());
  ImuBias nb;
  nb.gyro = Vec3(1e-3, 0, 0);
  const PreintegratedImu re = integrate(s, nb, noise());
  const CorrectedDelta d = bias_corrected_delta(p, nb);
  CHECK((d.delta_R.matrix() - re.delta_R.matrix()).norm() < 1e-5);
  CHECK((d.delta_p - re.delta_p).norm() < 1e-5);
  CHECK((d.delta_v - re.delta_v).norm() < 1e-5);
}

TEST_CASE("accel bias correction on a rotation-free stream") {
  oracle::Rng rng(3);
  const auto s = sample_stream(constant(Vec3::Zero()), wobble(rng, 2.0), 0.0, 1.0, 200);
  const PreintegratedImu p = integrate(s, ImuBias{}, noise());
  ImuBias nb;
  nb.accel = Vec3(0, 1e-2, 0);
  const CorrectedDelta d = bias_corrected_delta(p, nb);
  CHECK(d.delta_p == p.delta_p + p.J_a_dp * nb.accel);
  const PreintegratedImu re = integrate(s, nb, noise());
  CHECK((d.delta_p - re.delta_p).norm() < 1e-7);
  CHECK((d.delta_v - re.delta_v).norm() < 1e-7);
}

TEST_CASE("free fall and hover") {
  const Vec3 g(0, 0, -9.81);
  const auto fall = sample_stream(constant(Vec3::Zero()), constant(Vec3::Zero()), 0.0, 1.0, 100);
  const NavState a = predict_state(NavState{}, integrate(fall, ImuBias{}, noise()), g);
  CHECK((a.pose.t() - Vec3(0, 0, -4.905)).norm() < 1e-9);
  CHECK((a.velocity - Vec3(0, 0, -9.81)).norm() < 1e-9);

  const auto hover = sample_stream(constant(Vec3::Zero()), constant(-g), 0.0, 1.0, 100);
  const NavState b = predict_state(NavState{}, integrate(hover, ImuBias{}, noise()), g);
  CHECK(b.pose.t().norm() < 1e-9);
  CHECK(b.velocity.norm() < 1e-9);
}

TEST_CASE("prediction matches an oversampled direct integration") {
  const Vec3 g(0, 0, -9.81);
  for (std::uint64_t seed : {4u, 5u, 6u}) {
    oracle::Rng rng(seed);
    const Signal gyro = wobble(rng, 0.6), acc = wobble(rng, 3.0);
    NavState s0;
    s0.pose = rng.pose(1.0, 5.0);
    s0.velocity = rng.vec3(2.0);
    const double T = 0.5;
    const auto samples = sample_stream(gyro, acc, 0.0, T, 100);
    const NavState pred = predict_state(s0, integrate(samples, ImuBias{}, noise()), g);

    // RK4 on (R, v, p) with 10x finer steps.
    Mat3 R = s0.pose.R();
    Vec3 v = s0.velocity, p = s0.pose.t();
    const int n = 1000;
    const double h = T / n;
    for (int i = 0; i < n; ++i) {
      const double t = i * h;
      auto f = [&](const Mat3& Rk, const Vec3& vk, double tk) {
        return std::tuple<Mat3, Vec3, Vec3>{Rk * oracle::hat3(gyro(tk)), Rk * acc(tk) + g, vk};
      };
      auto [dR1, dv1, dp1] = f(R, v, t);
      auto [dR2, dv2, dp2] = f(R + 0.5 * h * dR1, v + 0.5 * h * dv1, t + 0.5 * h);
      auto [dR3, dv3, dp3] = f(R + 0.5 * h * dR2, v + 0.5 * h * dv2, t + 0.5 * h);
      auto [dR4, dv4, dp4] = f(R + h * dR3, v + h * dv3, t + h);
      R += h / 6 * (dR1 + 2 * dR2 + 2 * dR3 + dR4);
      v += h / 6 * (dv1 + 2 * dv2 + 2 * dv3 + dv4);
      p += h / 6 * (dp1 + 2 * dp2 + 2 * dp3 + dp4);
    }
    CHECK((pred.pose.t() - p).norm() < 1e-4);
    CHECK((pred.velocity - v).norm() < 1e-3);
    CHECK((pred.pose.R() - R).norm() < 1e-4);
  }
}

TEST_CASE("dt_total and covariance invariants") {
  oracle::Rng rng(7);
  const auto s = sample_stream(wobble(rng, 0.5), wobble(rng, 2.0), 3.0, 1.3, 260);
  ImuPreintegrator integ(ImuBias{}, noise());
  double sum = 0.0, last_trace = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    integ.add(s[i]);
    if (i > 0) sum += s[i].timestamp - s[i - 1].timestamp;
    const Mat9& c = integ.result().covariance;
    CHECK(c.trace() >= last_trace);
    last_trace = c.trace();
    CHECK((c - c.transpose()).norm() == 0.0);
    CHECK(Eigen::SelfAdjointEigenSolver<Mat9>(c).eigenvalues().minCoeff() > -1e-12);
  }
  CHECK(std::abs(integ.result().dt_total - sum) < 1e-12);
  CHECK(integ.sample_count() == s.size());
}

TEST_CASE("chained halves equal one integration") {
  const Vec3 g(0, 0, -9.81);
  oracle::Rng rng(8);
  const Signal gyro = wobble(rng, 0.5), acc = wobble(rng, 2.0);
  const auto all = sample_stream(gyro, acc, 0.0, 2.0, 400);
  const std::vector<ImuSample> first(all.begin(), all.begin() + 201), second(all.begin() + 200, all.end());
  NavState s0;
  s0.pose = rng.pose(1.0, 3.0);
  s0.velocity = rng.vec3(1.0);
  const NavState direct = predict_state(s0, integrate(all, ImuBias{}, noise()), g);
  const NavState mid = predict_state(s0, integrate(first, ImuBias{}, noise()), g);
  const NavState chained = predict_state(mid, integrate(second, ImuBias{}, noise()), g);
  CHECK((direct.pose.t() - chained.pose.t()).norm() < 1e-6);
  CHECK((direct.velocity - chained.velocity).norm() < 1e-6);
  CHECK(so3_log(direct.pose.R().transpose() * chained.pose.R()).norm() < 1e-6);
}

TEST_CASE("bias Jacobians match finite differences of re-integration") {
  oracle::Rng rng(9);
  const auto s = sample_stream(wobble(rng, 0.5), wobble(rng, 2.0), 0.0, 1.0, 200);
  ImuBias b0;
  b0.gyro = rng.vec3(0.01);
  b0.accel = rng.vec3(0.1);
  const PreintegratedImu p = integrate(s, b0, noise());
  const double h = 1e-5;
  Mat3 gR, gv, gp, av, ap;
  for (int k = 0; k < 3; ++k) {
    ImuBias plus = b0, minus = b0;
    plus.gyro[k] += h;
    minus.gyro[k] -= h;
    const PreintegratedImu a = integrate(s, plus, noise()), c = integrate(s, minus, noise());
    gR.col(k) = (so3_log(p.delta_R.matrix().transpose() * a.delta_R.matrix()) -
                 so3_log(p.delta_R.matrix().transpose() * c.delta_R.matrix())) /
                (2 * h);
    gv.col(k) = (a.delta_v - c.delta_v) / (2 * h);
    gp.col(k) = (a.delta_p - c.delta_p) / (2 * h);
    plus = minus = b0;
    plus.accel[k] += h;
    minus.accel[k] -= h;
    const PreintegratedImu d = integrate(s, plus, noise()), e = integrate(s, minus, noise());
    av.col(k) = (d.delta_v - e.delta_v) / (2 * h);
    ap.col(k) = (d.delta_p - e.delta_p) / (2 * h);
  }
  auto rel = [](const Mat3& a, const Mat3& b) { return (a - b).norm() / b.norm(); };
  CHECK(rel(p.J_g_dR, gR) < 1e-4);
  CHECK(rel(p.J_g_dv, gv) < 1e-4);
  CHECK(rel(p.J_g_dp, gp) < 1e-4);
  CHECK(rel(p.J_a_dv, av) < 1e-4);
  CHECK(rel(p.J_a_dp, ap) < 1e-4);
}

TEST_CASE("information matrices") {
  oracle::Rng rng(10);
  const auto s = sample_stream(wobble(rng, 0.5), wobble(rng, 2.0), 0.0, 0.5, 100);
  const PreintegratedImu p = integrate(s, ImuBias{}, noise());
  const Mat9 info = p.information();
  CHECK((info * (p.covariance + 1e-12 * Mat9::Identity()) - Mat9::Identity()).norm() < 1e-6);
  const Mat6 bi = p.bias_information();
  const ImuNoiseModel n = noise();
  CHECK(bi(0, 0) == doctest::Approx(1.0 / (n.accel_bias_walk * n.accel_bias_walk * 0.5)));
  CHECK(bi(5, 5) == doctest::Approx(1.0 / (n.gyro_bias_walk * n.gyro_bias_walk * 0.5)));
  CHECK(bi(0, 1) == 0.0);
}

TEST_CASE("stream file round trip and errors") {
  const auto dir = std::filesystem::temp_directory_path() / "crossloc_imu_test";
  std::filesystem::create_directories(dir);
  oracle::Rng rng(11);
  const auto s = sample_stream(wobble(rng, 0.5), wobble(rng, 2.0), 0.0, 0.1, 20);
  const std::string path = (dir / "imu.txt").string();
  save_imu_stream(path, s);
  const auto back = load_imu_stream(path);
  REQUIRE(back.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(back[i].timestamp == s[i].timestamp);
    CHECK(back[i].angular_velocity == s[i].angular_velocity);
    CHECK(back[i].linear_acceleration == s[i].linear_acceleration);
  }
  {
    std::ofstream f(path);
    f << "# comment\n0 0 0 0 0 0 0\n\n0.1 1 2 3 4 5 6 # trailing\n0.1 1 2 3 4 5 6\n";
  }
  try {
    load_imu_stream(path);
    CHECK(false);
  } catch (const ParseError& e) {
    CHECK(e.line() == 5);
  }
  {
    std::ofstream f(path);
    f << "0 0 0 0 0 0\n";
  }
  CHECK_THROWS_AS(load_imu_stream(path), ParseError);
  std::filesystem::remove_all(dir);
}

}
