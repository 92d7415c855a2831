#include "crossloc/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "crossloc/factors.hpp"
#include "crossloc/text_io.hpp"

namespace crossloc {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

const char* to_string(BaMode m) {
  switch (m) {
    case BaMode::NonRigid: return "non_rigid";
    case BaMode::Rigid: return "rigid";
    case BaMode::Staged: return "staged";
  }
  return "?";
}

BaSchedule BaSchedule::hybrid(int m, int n) {
  if (m < 1 || n < 1) throw Error(ErrorCode::InvalidArgument, "hybrid schedule needs m, n >= 1");
  return {Kind::Hybrid, m, n};
}

BaSchedule BaSchedule::parse(const std::string& text) {
  if (text == "non_rigid" || text == "non_rigid_only") return non_rigid_only();
  if (text == "rigid" || text == "rigid_only") return rigid_only();
  if (text == "staged") return staged();
  std::string body = text;
  if (body.rfind("hybrid:", 0) == 0) body = body.substr(7);
  const auto colon = body.find(':');
  if (colon == std::string::npos)
    throw Error(ErrorCode::InvalidArgument, "unknown schedule '" + text + "'");
  long m = 0, n = 0;
  try {
    m = parse_long(std::string_view(body).substr(0, colon), "schedule", 1);
    n = parse_long(std::string_view(body).substr(colon + 1), "schedule", 1);
  } catch (const ParseError&) {
    throw Error(ErrorCode::InvalidArgument, "bad hybrid ratio '" + text + "'");
  }
  return hybrid(static_cast<int>(m), static_cast<int>(n));
}

std::string BaSchedule::to_string() const {
  switch (kind) {
    case Kind::NonRigidOnly: return "non_rigid";
    case Kind::RigidOnly: return "rigid";
    case Kind::Staged: return "staged";
    case Kind::Hybrid: return std::to_string(m) + ":" + std::to_string(n);
  }
  return "?";
}

BaMode BaSchedule::mode_for(long counter) const {
  switch (kind) {
    case Kind::NonRigidOnly: return BaMode::NonRigid;
    case Kind::RigidOnly: return BaMode::Rigid;
    case Kind::Staged: return BaMode::Staged;
    case Kind::Hybrid: break;
  }
  const long cycle = m + n;
  const long r = ((counter % cycle) + cycle) % cycle;
  return r < m ? BaMode::NonRigid : BaMode::Rigid;
}

bool needs_keyframe(const KeyframePolicy& policy, const Pose& last_keyframe, const Pose& current,
                    double overlap) {
  const Pose rel = last_keyframe.inverse() * current;
  if (rel.t().norm() > policy.translation) return true;
  if (rel.rotation().angle() > policy.rotation_deg * kDegToRad) return true;
  return overlap < policy.min_overlap;
}

// ---- window ----

SlidingWindow::SlidingWindow(int capacity) : capacity_(capacity) {
  if (capacity < 2) throw Error(ErrorCode::InvalidArgument, "window capacity must be >= 2");
}

int SlidingWindow::observation_count(int landmark_id) const {
  int n = 0;
  for (const Keyframe& kf : keyframes_) {
    const auto it = std::lower_bound(
        kf.observations.begin(), kf.observations.end(), landmark_id,
        [](const KeyframeObservation& o, int id) { return o.landmark_id < id; });
    if (it != kf.observations.end() && it->landmark_id == landmark_id) ++n;
  }
  return n;
}

std::vector<int> SlidingWindow::active_landmarks() const {
  std::map<int, int> counts;
  for (const Keyframe& kf : keyframes_)
    for (const auto& o : kf.observations) ++counts[o.landmark_id];
  std::vector<int> out;
  for (const auto& [id, n] : counts)
    if (n >= 2 && landmarks_.count(id)) out.push_back(id);
  return out;
}

int SlidingWindow::push(Keyframe kf) {
  keyframes_.push_back(std::move(kf));
  int evicted = 0;
  while (static_cast<int>(keyframes_.size()) > capacity_) {
    keyframes_.pop_front();
    keyframes_.front().preint.reset();
    ++evicted;
  }
  if (evicted) retire_unobserved();
  return evicted;
}

void SlidingWindow::retire_unobserved() {
  std::set<int> seen;
  for (const Keyframe& kf : keyframes_)
    for (const auto& o : kf.observations) seen.insert(o.landmark_id);
  for (auto it = landmarks_.begin(); it != landmarks_.end();) {
    if (seen.count(it->first)) ++it;
    else it = landmarks_.erase(it);
  }
}

// ---- front end ----

std::optional<Vec3> triangulate_stereo(const KeyframeObservation& o, const EstimatorContext& ctx) {
  const CameraModel& cam = ctx.rig.camera;
  const EstimatorParams& p = ctx.params;
  if (std::abs(o.left.y() - o.right.y()) > p.epipolar_gate) return std::nullopt;
  const double disparity = o.left.x() - o.right.x();
  if (disparity < p.min_disparity || disparity > p.max_disparity) return std::nullopt;
  const double z = cam.fx * ctx.rig.baseline / disparity;
  if (z > p.max_depth) return std::nullopt;
  return Vec3((o.left.x() - cam.cx) * z / cam.fx, (o.left.y() - cam.cy) * z / cam.fy, z);
}

void insert_keyframe(SlidingWindow& window, int id, double timestamp, const NavState& state,
                     const std::vector<StereoObservation>& observations,
                     std::optional<PreintegratedImu> preint, const EstimatorContext& ctx) {
  Keyframe kf;
  kf.id = id;
  kf.timestamp = timestamp;
  kf.state = state;
  kf.preint = std::move(preint);

  std::map<int, std::pair<KeyframeObservation, Vec3>> valid;
  for (const auto& s : observations) {
    if (valid.count(s.landmark_id)) continue;
    KeyframeObservation o{s.landmark_id, s.left, s.right};
    if (auto p = triangulate_stereo(o, ctx)) valid.emplace(s.landmark_id, std::make_pair(o, *p));
  }
  if (static_cast<int>(valid.size()) < ctx.params.min_tracked)
    throw Error(ErrorCode::TooFewObservations,
                std::to_string(valid.size()) + " tracked landmarks, need " +
                    std::to_string(ctx.params.min_tracked));

  const Pose local_T_cam = state.pose * ctx.rig.camera.body_T_camera;
  for (const auto& [lid, entry] : valid) {
    kf.observations.push_back(entry.first);
    if (!window.landmarks().count(lid))
      window.landmarks().emplace(lid, WindowLandmark{lid, local_T_cam * entry.second});
  }
  window.push(std::move(kf));
}

std::vector<MapConstraint> associate_constraints(const SlidingWindow& window,
                                                 const AnchorTransform& anchor,
                                                 const PointCloudMap& map,
                                                 const AssociationParams& params) {
  std::vector<MapConstraint> out;
  if (map.empty()) return out;
  const std::vector<int> ids = window.active_landmarks();
  std::vector<Vec3> queries;
  queries.reserve(ids.size());
  for (int id : ids) queries.push_back(anchor.pose * window.landmarks().at(id).position);
  const auto neighbors = knn_batch(map, queries, params.k);

  const Mat3 info = Mat3::Identity() / (params.map_sigma * params.map_sigma);
  const double angle = params.normal_angle_deg * kDegToRad;
  std::vector<MapPoint> hood;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& nb = neighbors[i];
    if (nb.empty() || nb.front().distance > params.gate) continue;
    const MapPoint& nearest = map[nb.front().index];
    hood.clear();
    for (const Neighbor& n : nb) hood.push_back(map[n.index]);
    MapConstraint c;
    c.landmark_id = ids[i];
    c.map_point = nearest.position;
    c.information = info;
    if (hood.size() >= 2 && normal_consistency(hood, angle)) {
      c.metric = MatchMetric::PointToPlane;
      c.normal = nearest.normal;
    } else {
      c.metric = MatchMetric::PointToPoint;
    }
    out.push_back(c);
  }
  return out;
}

double mean_constraint_residual(const SlidingWindow& window, const AnchorTransform& anchor,
                                const std::vector<MapConstraint>& constraints) {
  if (constraints.empty()) return 0.0;
  double sum = 0.0;
  for (const MapConstraint& c : constraints) {
    const Vec3 d = anchor.pose * window.landmarks().at(c.landmark_id).position - c.map_point;
    sum += (c.metric == MatchMetric::PointToPlane) ? std::abs(c.normal->dot(d)) : d.norm();
  }
  return sum / static_cast<double>(constraints.size());
}

// ---- problem assembly ----

namespace {

struct WindowBlocks {
  std::vector<BlockId> pose, vel, ba, bg;
  std::map<int, BlockId> landmark;
};

WindowBlocks add_window(Problem& problem, const SlidingWindow& window, const EstimatorContext& ctx,
                        bool freeze_all) {
  WindowBlocks b;
  const auto& kfs = window.keyframes();
  for (std::size_t i = 0; i < kfs.size(); ++i) {
    const NavState& s = kfs[i].state;
    b.pose.push_back(problem.add_pose_block(s.pose, freeze_all || i == 0));
    b.vel.push_back(problem.add_vector_block(s.velocity, freeze_all));
    b.ba.push_back(problem.add_vector_block(s.accel_bias, freeze_all));
    b.bg.push_back(problem.add_vector_block(s.gyro_bias, freeze_all));
  }
  for (int id : window.active_landmarks())
    b.landmark[id] =
        problem.add_vector_block(window.landmarks().at(id).position, freeze_all, !freeze_all);
  if (freeze_all) return b;

  const double w = 1.0 / (ctx.rig.pixel_sigma * ctx.rig.pixel_sigma);
  const MatX pixel_info = Mat2::Identity() * w;
  const RobustKernel kernel = RobustKernel::cauchy(ctx.params.cauchy_pixel);
  for (std::size_t i = 0; i < kfs.size(); ++i) {
    for (const auto& o : kfs[i].observations) {
      const auto it = b.landmark.find(o.landmark_id);
      if (it == b.landmark.end()) continue;
      auto left = std::make_unique<ReprojectionFactor>(b.pose[i], it->second, o.left, ctx.rig.camera);
      left->set_information(pixel_info);
      left->set_kernel(kernel);
      problem.add_factor(std::move(left));
      auto right = std::make_unique<ReprojectionFactor>(b.pose[i], it->second, o.right, ctx.right);
      right->set_information(pixel_info);
      right->set_kernel(kernel);
      problem.add_factor(std::move(right));
    }
    if (i == 0 || !kfs[i].preint) continue;
    const PreintegratedImu& pre = *kfs[i].preint;
    problem.add_factor(std::make_unique<PreintegrationFactor>(
        b.pose[i - 1], b.vel[i - 1], b.ba[i - 1], b.bg[i - 1], b.pose[i], b.vel[i], pre,
        ctx.gravity));
    auto walk = std::make_unique<BiasWalkFactor>(b.ba[i - 1], b.bg[i - 1], b.ba[i], b.bg[i]);
    walk->set_information(pre.bias_information());
    problem.add_factor(std::move(walk));
  }
  return b;
}

void read_back(const Problem& problem, const WindowBlocks& b, SlidingWindow& window) {
  auto& kfs = window.keyframes();
  for (std::size_t i = 0; i < kfs.size(); ++i) {
    kfs[i].state.pose = problem.pose(b.pose[i]);
    kfs[i].state.velocity = problem.vector(b.vel[i]);
    kfs[i].state.accel_bias = problem.vector(b.ba[i]);
    kfs[i].state.gyro_bias = problem.vector(b.bg[i]);
  }
  for (const auto& [id, block] : b.landmark)
    window.landmarks().at(id).position = problem.vector(block);
}

Mat6 prior_information(const EstimatorParams& p) {
  Vec6 d;
  const double r = 1.0 / (p.prior_rotation_sigma * p.prior_rotation_sigma);
  const double t = 1.0 / (p.prior_translation_sigma * p.prior_translation_sigma);
  d << r, r, r, t, t, t;
  return d.asDiagonal();
}

BlockId add_anchor_terms(Problem& problem, const WindowBlocks& b, const AnchorTransform& anchor,
                         const Pose& prior_mean, const std::vector<MapConstraint>& constraints,
                         const EstimatorContext& ctx) {
  const BlockId a = problem.add_pose_block(anchor.pose);
  const RobustKernel kernel = RobustKernel::cauchy(ctx.params.cauchy_metric);
  for (const MapConstraint& c : constraints) {
    const auto it = b.landmark.find(c.landmark_id);
    if (it == b.landmark.end()) continue;
    problem.add_factor(make_map_factor(a, it->second, c, kernel));
  }
  auto prior = std::make_unique<AnchorPriorFactor>(a, prior_mean);
  prior->set_information(prior_information(ctx.params));
  problem.add_factor(std::move(prior));
  return a;
}

void require_window(const SlidingWindow& window) {
  if (window.size() < 2)
    throw Error(ErrorCode::InvalidArgument, "bundle adjustment needs at least two keyframes");
}

}  // namespace

SolverReport vio_ba(SlidingWindow& window, const EstimatorContext& ctx) {
  require_window(window);
  Problem problem;
  const WindowBlocks b = add_window(problem, window, ctx, false);
  const SolverReport report = solve(problem, ctx.params.solver);
  if (report.termination == Termination::Failure)
    throw Error(ErrorCode::SolverFailure, "visual-inertial solve failed");
  read_back(problem, b, window);
  return report;
}

SolverReport non_rigid_ba(SlidingWindow& window, AnchorTransform& anchor, const Pose& prior_mean,
                          const std::vector<MapConstraint>& constraints,
                          const EstimatorContext& ctx) {
  if (constraints.empty()) return vio_ba(window, ctx);
  require_window(window);
  Problem problem;
  const WindowBlocks b = add_window(problem, window, ctx, false);
  const BlockId a = add_anchor_terms(problem, b, anchor, prior_mean, constraints, ctx);
  const SolverReport report = solve(problem, ctx.params.solver);
  if (report.termination == Termination::Failure)
    throw Error(ErrorCode::SolverFailure, "non-rigid solve failed");
  read_back(problem, b, window);
  anchor.pose = problem.pose(a);
  return report;
}

RigidReport align_anchor(const SlidingWindow& window, AnchorTransform& anchor,
                         const Pose& prior_mean, const PointCloudMap& map,
                         const EstimatorContext& ctx) {
  RigidReport out;
  for (int it = 0; it < ctx.params.icp_max_iterations; ++it) {
    const auto constraints = associate_constraints(window, anchor, map, ctx.params.association);
    out.constraints = constraints.size();
    if (constraints.empty()) break;
    Problem problem;
    const WindowBlocks b = add_window(problem, window, ctx, true);
    const BlockId a = add_anchor_terms(problem, b, anchor, prior_mean, constraints, ctx);
    out.anchor = solve(problem, ctx.params.solver);
    if (out.anchor.termination == Termination::Failure)
      throw Error(ErrorCode::SolverFailure, "anchor alignment failed");
    const Pose updated = problem.pose(a);
    out.last_update = log(anchor.pose.inverse() * updated).vector().norm();
    anchor.pose = updated;
    out.icp_iterations = it + 1;
    if (out.last_update < ctx.params.icp_tolerance) break;
  }
  return out;
}

RigidReport rigid_ba(SlidingWindow& window, AnchorTransform& anchor, const Pose& prior_mean,
                     const PointCloudMap& map, const EstimatorContext& ctx) {
  const SolverReport vio = vio_ba(window, ctx);
  RigidReport out = align_anchor(window, anchor, prior_mean, map, ctx);
  out.vio = vio;
  return out;
}

int reject_outliers(SlidingWindow& window, const EstimatorContext& ctx) {
  const double limit = ctx.params.outlier_threshold;
  int removed = 0;
  std::set<int> touched;
  auto bad = [&](const Pose& body, const Vec3& lm, const Vec2& px, const CameraModel& cam) {
    const Vec3 pc = (body * cam.body_T_camera).inverse() * lm;
    if (pc.z() <= 1e-3) return true;
    return (cam.project(pc) - px).norm() > limit;
  };
  for (Keyframe& kf : window.keyframes()) {
    auto& obs = kf.observations;
    const auto keep_end = std::remove_if(obs.begin(), obs.end(), [&](const KeyframeObservation& o) {
      const auto it = window.landmarks().find(o.landmark_id);
      if (it == window.landmarks().end()) return false;
      const Vec3& lm = it->second.position;
      if (bad(kf.state.pose, lm, o.left, ctx.rig.camera) || bad(kf.state.pose, lm, o.right, ctx.right)) {
        touched.insert(o.landmark_id);
        return true;
      }
      return false;
    });
    removed += static_cast<int>(obs.end() - keep_end);
    obs.erase(keep_end, obs.end());
  }
  // Landmarks down to one observation restart from that keyframe's stereo pair.
  for (int id : touched) {
    if (window.observation_count(id) != 1) continue;
    for (auto kf = window.keyframes().rbegin(); kf != window.keyframes().rend(); ++kf) {
      const auto it = std::find_if(kf->observations.begin(), kf->observations.end(),
                                   [id](const KeyframeObservation& o) { return o.landmark_id == id; });
      if (it == kf->observations.end()) continue;
      if (auto p = triangulate_stereo(*it, ctx))
        window.landmarks().at(id).position = kf->state.pose * ctx.rig.camera.body_T_camera * *p;
      break;
    }
  }
  window.retire_unobserved();
  return removed;
}

StepReport step(SlidingWindow& window, AnchorTransform& anchor, const Pose& prior_mean,
                const PointCloudMap& map, const BaSchedule& schedule, long counter,
                const EstimatorContext& ctx) {
  StepReport out;
  out.counter = counter;
  out.mode = schedule.mode_for(counter);
  out.timestamp = window.empty() ? 0.0 : window.keyframes().back().timestamp;
  const auto& assoc = ctx.params.association;

  if (out.mode == BaMode::Rigid || out.mode == BaMode::Staged) {
    const RigidReport r = rigid_ba(window, anchor, prior_mean, map, ctx);
    out.report = r.icp_iterations > 0 ? r.anchor : r.vio;
    out.icp_iterations = r.icp_iterations;
  }
  if (out.mode == BaMode::NonRigid || out.mode == BaMode::Staged) {
    const auto constraints = associate_constraints(window, anchor, map, assoc);
    out.report = non_rigid_ba(window, anchor, prior_mean, constraints, ctx);
  }
  out.rejected = reject_outliers(window, ctx);

  const auto after = associate_constraints(window, anchor, map, assoc);
  out.constraints = after.size();
  out.plane_constraints = static_cast<std::size_t>(
      std::count_if(after.begin(), after.end(),
                    [](const MapConstraint& c) { return c.metric == MatchMetric::PointToPlane; }));
  out.active_landmarks = window.active_landmarks().size();
  out.mean_residual = mean_constraint_residual(window, anchor, after);
  out.anchor = anchor.pose;
  return out;
}

// ---- driver ----

Estimator::Estimator(const PointCloudMap& map, const SensorRig& rig, const Vec3& gravity_local,
                     const EstimatorParams& params, const BaSchedule& schedule)
    : map_(map),
      ctx_(rig, gravity_local, params),
      schedule_(schedule),
      window_(params.window_capacity) {}

void Estimator::initialize(const Pose& anchor_guess, const NavState& initial_state,
                           const CameraFrame& first_frame) {
  try {
    insert_keyframe(window_, next_keyframe_id_, first_frame.timestamp, initial_state,
                    first_frame.observations, std::nullopt, ctx_);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TooFewObservations) throw;
    throw Error(ErrorCode::InsufficientParallax, "first frame: too few triangulable stereo pairs");
  }
  ++next_keyframe_id_;
  anchor_.pose = anchor_guess;
  prior_mean_ = anchor_guess;
  initialized_ = true;
}

void Estimator::add_imu(const ImuSample& s) {
  if (!imu_.empty() && s.timestamp <= imu_.back().timestamp)
    throw Error(ErrorCode::NonMonotonicTimestamps, "imu sample out of order");
  imu_.push_back(s);
}

PreintegratedImu Estimator::preintegrate(double t0, double t1, const ImuBias& bias) const {
  constexpr double eps = 1e-9;
  const auto first = std::lower_bound(imu_.begin(), imu_.end(), t0 - eps,
                                      [](const ImuSample& s, double t) { return s.timestamp < t; });
  const auto last = std::upper_bound(imu_.begin(), imu_.end(), t1 + eps,
                                     [](double t, const ImuSample& s) { return t < s.timestamp; });
  if (last - first < 2) throw Error(ErrorCode::EmptyStream, "no imu samples between frames");
  return integrate(std::span<const ImuSample>(&*first, static_cast<std::size_t>(last - first)),
                   bias, ctx_.rig.imu);
}

std::optional<StepReport> Estimator::add_frame(const CameraFrame& frame) {
  if (!initialized_) throw Error(ErrorCode::InvalidArgument, "estimator not initialized");
  if (diverged_) return std::nullopt;
  const Keyframe& last = window_.keyframes().back();
  if (frame.timestamp <= last.timestamp) return std::nullopt;

  PreintegratedImu pre = preintegrate(last.timestamp, frame.timestamp, last.state.bias());
  const NavState predicted = predict_state(last.state, pre, ctx_.gravity);

  std::set<int> seen;
  for (const auto& o : frame.observations) seen.insert(o.landmark_id);
  std::size_t kept = 0;
  for (const auto& o : last.observations) kept += seen.count(o.landmark_id);
  const double overlap =
      last.observations.empty() ? 0.0 : double(kept) / double(last.observations.size());

  PolicyRecord rec{last.state.pose, predicted.pose, overlap, false};
  if (!needs_keyframe(ctx_.params.keyframe, last.state.pose, predicted.pose, overlap)) {
    policy_log_.push_back(rec);
    return std::nullopt;
  }
  try {
    insert_keyframe(window_, next_keyframe_id_, frame.timestamp, predicted, frame.observations,
                    std::move(pre), ctx_);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TooFewObservations) throw;
    policy_log_.push_back(rec);
    return std::nullopt;
  }
  rec.inserted = true;
  policy_log_.push_back(rec);
  ++next_keyframe_id_;

  StepReport r = step(window_, anchor_, prior_mean_, map_, schedule_, counter_++, ctx_);
  prior_mean_ = anchor_.pose;
  const Keyframe& newest = window_.keyframes().back();
  trajectory_.push_back(TimedPose{newest.timestamp, anchor_.pose * newest.state.pose});

  // Drop IMU samples no future preintegration can reach.
  const double keep_from = newest.timestamp - 1.0;
  const auto cut = std::lower_bound(imu_.begin(), imu_.end(), keep_from,
                                    [](const ImuSample& s, double t) { return s.timestamp < t; });
  imu_.erase(imu_.begin(), cut);

  bool bad = false;
  if (r.constraints == 0) {
    bad = true;
  } else {
    if (!initial_residual_) initial_residual_ = r.mean_residual;
    const double limit =
        ctx_.params.divergence_factor * std::max(*initial_residual_, ctx_.params.divergence_floor);
    bad = r.mean_residual > limit;
  }
  bad_steps_ = bad ? bad_steps_ + 1 : 0;
  if (bad_steps_ >= ctx_.params.divergence_steps) diverged_ = true;
  return r;
}

}  // namespace crossloc
