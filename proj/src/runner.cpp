#include "crossloc/runner.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>

#include "crossloc/text_io.hpp"

namespace crossloc {

Pose local_frame_of(const Pose& first_truth) {
  return Pose(Rotation::about_z(first_truth.rotation().yaw()), first_truth.t());
}

Pose perturb_anchor(const Pose& anchor_true, const InitOffset& offset) {
  const double yaw = offset.yaw_deg * std::numbers::pi / 180.0;
  return Pose(Rotation::about_z(yaw) * anchor_true.rotation(), anchor_true.t() + offset.translation);
}

LocalizationResult run_localization(const PointCloudMap& map, const SessionData& session,
                                    const RunConfig& config, const BaSchedule& schedule) {
  if (session.frames.empty() || session.ground_truth_states.empty())
    throw Error(ErrorCode::EmptyStream, "session has no frames or truth states");
  LocalizationResult out;

  const CameraFrame& first = session.frames.front();
  const int gi = nearest_index(session.ground_truth, first.timestamp, config.eval.tolerance);
  if (gi < 0) throw Error(ErrorCode::MissingPose, "no truth pose for the first frame");
  const TimedState& truth0 = session.ground_truth_states[static_cast<std::size_t>(gi)];

  const Pose local = local_frame_of(truth0.state.pose);
  out.anchor_true = local;
  out.anchor_guess = perturb_anchor(local, config.init);

  NavState init;
  init.pose = local.inverse() * truth0.state.pose;
  init.velocity = local.R().transpose() * truth0.state.velocity;
  const Vec3 gravity_local = local.R().transpose() * session.rig.gravity;

  EstimatorParams params = config.est;
  params.solver.execution = config.execution();
  Estimator est(map, session.rig, gravity_local, params, schedule);
  est.initialize(out.anchor_guess, init, first);

  std::size_t imu = 0;
  while (imu < session.imu.size() && session.imu[imu].timestamp <= first.timestamp + 1e-9)
    ++imu;
  if (imu > 0) --imu;  // the sample at the first frame starts the next interval
  for (std::size_t f = 1; f < session.frames.size(); ++f) {
    const CameraFrame& frame = session.frames[f];
    while (imu < session.imu.size() && session.imu[imu].timestamp <= frame.timestamp + 1e-9)
      est.add_imu(session.imu[imu++]);
    if (auto r = est.add_frame(frame)) out.steps.push_back(*r);
    if (est.diverged()) break;
  }
  out.trajectory = est.trajectory();
  out.diverged = est.diverged();
  out.keyframes = est.keyframe_count();
  out.anchor_final = est.anchor().pose;
  return out;
}

void save_step_log(const std::vector<StepReport>& steps, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "counter,t,mode,constraints,plane,active_landmarks,rejected,iterations,icp_iterations,"
         "initial_cost,final_cost,mean_residual,anchor_x,anchor_y,anchor_z,anchor_yaw\n";
  for (const StepReport& s : steps) {
    out << s.counter << ',' << format_double(s.timestamp) << ',' << to_string(s.mode) << ','
        << s.constraints << ',' << s.plane_constraints << ',' << s.active_landmarks << ','
        << s.rejected << ',' << s.report.iterations << ',' << s.icp_iterations << ','
        << format_double(s.report.initial_cost) << ',' << format_double(s.report.final_cost) << ','
        << format_double(s.mean_residual) << ',' << format_double(s.anchor.t().x()) << ','
        << format_double(s.anchor.t().y()) << ',' << format_double(s.anchor.t().z()) << ','
        << format_double(s.anchor.rotation().yaw()) << '\n';
  }
}

std::vector<SessionData> simulate_map_sessions(const RunConfig& config, std::uint64_t seed) {
  const WorldModel world = make_default_world(config.world_seed);
  const TrajectorySpec loop = make_default_loop();
  std::vector<SessionData> out;
  for (int s = 0; s < config.map_sessions; ++s)
    out.push_back(generate_session(world, loop, config.rig, s, seed, config.sim));
  return out;
}

SessionData simulate_query_session(const RunConfig& config, int session_id, std::uint64_t seed) {
  const WorldModel world = make_default_world(config.world_seed);
  return generate_session(world, make_default_loop(), config.rig, session_id, seed, config.sim);
}

std::vector<SweepRow> run_sweep(const std::vector<NamedMap>& maps,
                                const std::vector<std::string>& schedules,
                                const std::vector<std::uint64_t>& seeds, const RunConfig& config) {
  std::vector<BaSchedule> parsed;
  for (const auto& s : schedules) parsed.push_back(BaSchedule::parse(s));
  std::vector<SessionData> sessions(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i)
    sessions[i] = simulate_query_session(config, kQuerySessionBase + static_cast<int>(i), seeds[i]);

  const std::size_t per_seed = maps.size() * schedules.size();
  const long total = static_cast<long>(seeds.size() * per_seed);
  std::vector<SweepRow> rows(static_cast<std::size_t>(total));
  std::vector<std::exception_ptr> errors(rows.size());
  RunConfig inner = config;
  inner.parallel = false;  // parallelism lives at the run level here
#pragma omp parallel for schedule(dynamic) if (config.parallel)
  for (long idx = 0; idx < total; ++idx) {
    const std::size_t i = static_cast<std::size_t>(idx);
    const std::size_t si = i / per_seed;
    const std::size_t mi = (i % per_seed) / schedules.size();
    const std::size_t ci = i % schedules.size();
    SweepRow& row = rows[i];
    row.schedule = schedules[ci];
    row.map = maps[mi].name;
    row.seed = seeds[si];
    try {
      const LocalizationResult r = run_localization(*maps[mi].map, sessions[si], inner, parsed[ci]);
      row.keyframes = r.keyframes;
      row.diverged = r.diverged;
      row.ate_mean = row.ate_median = row.ate_max = std::numeric_limits<double>::infinity();
      if (!r.trajectory.empty()) {
        const auto e = ate(r.trajectory, sessions[si].ground_truth, config.eval);
        row.ate_mean = e.mean;
        row.ate_median = e.median;
        row.ate_max = e.max;
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

AssociationStats association_diagnostics(const PointCloudMap& map, const SessionData& session,
                                         const LocalizationResult& result,
                                         const RunConfig& config, double max_depth) {
  AssociationStats out;
  if (map.empty()) return out;
  const CameraModel& cam = session.rig.camera;
  std::map<double, const CameraFrame*> frames;
  for (const CameraFrame& f : session.frames) frames.emplace(f.timestamp, &f);
  double sum = 0.0;
  for (const TimedPose& tp : result.trajectory) {
    const auto it = frames.find(tp.timestamp);
    const int gi = nearest_index(session.ground_truth, tp.timestamp, config.eval.tolerance);
    if (it == frames.end() || gi < 0) continue;
    const Pose xi = (tp.pose * cam.body_T_camera).inverse();
    const Pose xi_true = (session.ground_truth[static_cast<std::size_t>(gi)].pose * cam.body_T_camera).inverse();
    for (const StereoObservation& o : it->second->observations) {
      const double disparity = o.left.x() - o.right.x();
      if (disparity < config.est.min_disparity) continue;
      const double z = cam.fx * session.rig.baseline / disparity;
      if (z > max_depth) continue;
      const Vec3 p_v((o.left.x() - cam.cx) * z / cam.fx, (o.left.y() - cam.cy) * z / cam.fy, z);
      const AssociationDistribution post =
          association_posterior(p_v, map, xi, config.map.likelihood_sigma);
      const AssociationDistribution ref =
          reference_distribution(p_v, map, post.candidates, xi_true, config.map.gt_sigma);
      const KldValue k = association_kld(post, ref);
      if (k.infinite) {
        ++out.infinite;
      } else {
        sum += k.value;
        ++out.samples;
      }
    }
  }
  if (out.samples > 0) out.mean_kld = sum / static_cast<double>(out.samples);
  return out;
}

void save_sweep(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "schedule,map,seed,keyframes,diverged,ate_mean,ate_median,ate_max\n";
  for (const SweepRow& r : rows)
    out << r.schedule << ',' << r.map << ',' << r.seed << ',' << r.keyframes << ','
        << (r.diverged ? 1 : 0) << ',' << format_double(r.ate_mean) << ','
        << format_double(r.ate_median) << ',' << format_double(r.ate_max) << '\n';
}

}  // namespace crossloc
