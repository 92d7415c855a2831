#include "crossloc/jacobian_check.hpp"

#include <algorithm>
#include <functional>
#include <random>

#include "crossloc/factors.hpp"

namespace crossloc {

std::vector<MatX> numeric_jacobians(Problem& problem, const Factor& factor, double delta) {
  std::vector<MatX> out;
  VecX r0;
  factor.evaluate(problem, r0, nullptr);
  for (BlockId id : factor.blocks()) {
    const int dim = problem.tangent_dim(id);
    MatX J(r0.size(), dim);
    const bool is_pose = problem.kind(id) == BlockKind::Pose;
    const Pose pose = is_pose ? problem.pose(id) : Pose();
    const VecX vec = is_pose ? VecX() : problem.vector(id);
    auto restore = [&] {
      if (is_pose) problem.set_pose(id, pose);
      else problem.set_vector(id, vec);
    };
    for (int j = 0; j < dim; ++j) {
      VecX d = VecX::Zero(dim);
      VecX rp, rm;
      d[j] = delta;
      problem.retract(id, d);
      factor.evaluate(problem, rp, nullptr);
      restore();
      d[j] = -delta;
      problem.retract(id, d);
      factor.evaluate(problem, rm, nullptr);
      restore();
      J.col(j) = (rp - rm) / (2.0 * delta);
    }
    out.push_back(J);
  }
  return out;
}

double jacobian_error(Problem& problem, const Factor& factor, double delta, double floor) {
  VecX r;
  std::vector<MatX> J(factor.blocks().size());
  if (!factor.evaluate(problem, r, &J)) return -1.0;
  const std::vector<MatX> N = numeric_jacobians(problem, factor, delta);
  double worst = 0.0;
  for (std::size_t b = 0; b < J.size(); ++b)
    worst = std::max(worst, (J[b] - N[b]).norm() / std::max(N[b].norm(), floor));
  return worst;
}

namespace {

struct Rand {
  std::mt19937_64 rng;
  explicit Rand(std::uint64_t seed) : rng(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  Vec3 vec(double s) { return Vec3(uniform(-s, s), uniform(-s, s), uniform(-s, s)); }
  Rotation rotation(double max_angle) {
    Vec3 axis = vec(1.0);
    while (axis.norm() < 1e-3) axis = vec(1.0);
    return Rotation::exp(axis.normalized() * uniform(0.0, max_angle));
  }
  Pose pose(double t) { return Pose(rotation(2.5), vec(t)); }
  Mat3 spd() {
    Mat3 a;
    a << vec(1.0), vec(1.0), vec(1.0);
    return a * a.transpose() + Mat3::Identity();
  }
};

PreintegratedImu random_preint(Rand& r, const ImuBias& lin) {
  std::vector<ImuSample> samples;
  const Vec3 w = r.vec(1.0), a = r.vec(4.0) + Vec3(0, 0, 9.81);
  for (int i = 0; i < 21; ++i) {
    ImuSample s;
    s.timestamp = 0.005 * i;
    s.angular_velocity = w + r.vec(0.3);
    s.linear_acceleration = a + r.vec(1.0);
    samples.push_back(s);
  }
  return integrate(samples, lin, ImuNoiseModel{});
}

using Builder = std::function<std::unique_ptr<Factor>(Problem&, Rand&)>;

struct Suite {
  const char* name;
  Builder build;
};

std::vector<Suite> suites() {
  std::vector<Suite> s;
  s.push_back({"reprojection", [](Problem& p, Rand& r) -> std::unique_ptr<Factor> {
    CameraModel cam;
    cam.body_T_camera = Pose(r.rotation(0.3), r.vec(0.5));
    const Pose body = r.pose(5.0);
    const double z = r.uniform(1.0, 20.0);
    const Vec3 pc(r.uniform(-0.8, 0.8) * z, r.uniform(-0.6, 0.6) * z, z);
    const Vec3 lm = body * cam.body_T_camera * pc;
    const BlockId a = p.add_pose_block(body);
    const BlockId b = p.add_vector_block(lm);
    const Vec2 px(r.uniform(0, 640), r.uniform(0, 480));
    return std::make_unique<ReprojectionFactor>(a, b, px, cam);
  }});
  s.push_back({"preintegration", [](Problem& p, Rand& r) -> std::unique_ptr<Factor> {
    ImuBias lin{r.vec(0.01), r.vec(0.05)};
    const PreintegratedImu pre = random_preint(r, lin);
    const BlockId pi = p.add_pose_block(r.pose(5.0));
    const BlockId vi = p.add_vector_block(r.vec(2.0));
    const BlockId ba = p.add_vector_block(lin.accel + r.vec(1e-2));
    const BlockId bg = p.add_vector_block(lin.gyro + r.vec(1e-3));
    const BlockId pk = p.add_pose_block(r.pose(5.0));
    const BlockId vk = p.add_vector_block(r.vec(2.0));
    return std::make_unique<PreintegrationFactor>(pi, vi, ba, bg, pk, vk, pre, Vec3(0, 0, -9.81));
  }});
  s.push_back({"bias_walk", [](Problem& p, Rand& r) -> std::unique_ptr<Factor> {
    const BlockId a = p.add_vector_block(r.vec(0.1)), b = p.add_vector_block(r.vec(0.1));
    const BlockId c = p.add_vector_block(r.vec(0.1)), d = p.add_vector_block(r.vec(0.1));
    return std::make_unique<BiasWalkFactor>(a, b, c, d);
  }});
  s.push_back({"point_to_plane", [](Problem& p, Rand& r) -> std::unique_ptr<Factor> {
    MapConstraint c;
    c.map_point = r.vec(20.0);
    c.normal = r.vec(1.0).normalized();
    c.information = r.spd();
    c.metric = MatchMetric::PointToPlane;
    const BlockId a = p.add_pose_block(r.pose(20.0));
    const BlockId l = p.add_vector_block(r.vec(20.0));
    return std::make_unique<PointToPlaneFactor>(a, l, c);
  }});
  s.push_back({"point_to_point", [](Problem& p, Rand& r) -> std::unique_ptr<Factor> {
    MapConstraint c;
    c.map_point = r.vec(20.0);
    c.information = r.spd();
    const BlockId a = p.add_pose_block(r.pose(20.0));
    const BlockId l = p.add_vector_block(r.vec(20.0));
    return std::make_unique<PointToPointFactor>(a, l, c);
  }});
  s.push_back({"anchor_prior", [](Problem& p, Rand& r) -> std::unique_ptr<Factor> {
    const Pose mean = r.pose(20.0);
    const Pose x = mean * Pose(r.rotation(2.0), r.vec(3.0));
    const BlockId a = p.add_pose_block(x);
    return std::make_unique<AnchorPriorFactor>(a, mean);
  }});
  return s;
}

}  // namespace

std::vector<JacobianSuiteResult> run_jacobian_suites(std::uint64_t seed, int trials,
                                                     double tolerance) {
  std::vector<JacobianSuiteResult> out;
  std::uint64_t stream = 0;
  for (const Suite& suite : suites()) {
    Rand rng(seed * 1000003ULL + (++stream));
    JacobianSuiteResult res;
    res.factor = suite.name;
    while (res.trials < trials) {
      Problem p;
      auto f = suite.build(p, rng);
      const double e = jacobian_error(p, *f);
      if (e < 0.0) continue;
      res.max_error = std::max(res.max_error, e);
      ++res.trials;
    }
    res.pass = res.max_error < tolerance;
    out.push_back(res);
  }
  return out;
}

}  // namespace crossloc
