#pragma once

// Shared scenes for the unit and acceptance tests. Built once per process.

#include "crossloc/estimator.hpp"
#include "crossloc/runner.hpp"

namespace fixture {

using namespace crossloc;

inline const MapBuildResult& default_map() {
  static const MapBuildResult r = [] {
    RunConfig cfg;
    const auto sessions = simulate_map_sessions(cfg, 1000);
    return build_map(sessions, cfg.map);
  }();
  return r;
}

// Noise-free session on the default world; the local frame is the map frame.
struct TruthScene {
  WorldModel world;
  SessionData session;
  PointCloudMap feature_map;  // world features with their surface normals
  EstimatorParams params;
};

inline TruthScene make_truth_scene(WorldModel world) {
  TruthScene t;
  t.world = std::move(world);
  SimulationOptions opt;
  opt.duration = 12.0;
  opt.noise_free = true;
  opt.initial_gyro_bias_sigma = 0.0;
  opt.initial_accel_bias_sigma = 0.0;
  opt.with_laser = false;
  t.session = generate_session(t.world, make_default_loop(), SensorRig::make_default(), 100, 1, opt);
  std::vector<MapPoint> pts;
  for (const FeaturePoint& f : t.world.features) pts.push_back(MapPoint{f.position, f.normal});
  t.feature_map = PointCloudMap(std::move(pts));
  return t;
}

inline const TruthScene& truth_scene() {
  static const TruthScene s = make_truth_scene(make_default_world(7));
  return s;
}

// The default world with features thinned to at least 1 m apart, so nearest
// neighbours stay unambiguous under small anchor errors.
inline const TruthScene& sparse_truth_scene() {
  static const TruthScene s = [] {
    WorldModel w = make_default_world(7);
    std::vector<FeaturePoint> kept;
    for (const FeaturePoint& f : w.features) {
      bool clear = true;
      for (const FeaturePoint& k : kept) clear = clear && (k.position - f.position).norm() >= 1.0;
      if (!clear) continue;
      kept.push_back(f);
      kept.back().id = static_cast<int>(kept.size()) - 1;
    }
    w.features = std::move(kept);
    return make_truth_scene(std::move(w));
  }();
  return s;
}

inline EstimatorContext truth_context(const EstimatorParams& params = {}) {
  const TruthScene& s = truth_scene();
  return EstimatorContext(s.session.rig, s.session.rig.gravity, params);
}

// Window of `count` keyframes at truth states, `stride` frames apart, with
// landmarks triangulated from the noise-free stereo pairs.
inline SlidingWindow truth_window(int count, int stride = 3, const EstimatorParams& params = {},
                                  const TruthScene& s = truth_scene()) {
  const EstimatorContext ctx = truth_context(params);
  SlidingWindow w(std::max(count, 2));
  for (int k = 0; k < count; ++k) {
    const std::size_t f = static_cast<std::size_t>(k * stride);
    const TimedState& ts = s.session.ground_truth_states.at(f);
    std::optional<PreintegratedImu> pre;
    if (k > 0) {
      const double t0 = w.keyframes().back().timestamp, t1 = ts.timestamp;
      std::vector<ImuSample> seg;
      for (const ImuSample& m : s.session.imu)
        if (m.timestamp >= t0 - 1e-9 && m.timestamp <= t1 + 1e-9) seg.push_back(m);
      pre = integrate(seg, w.keyframes().back().state.bias(), s.session.rig.imu);
    }
    insert_keyframe(w, k, ts.timestamp, ts.state, s.session.frames.at(f).observations, pre, ctx);
  }
  return w;
}

}  // namespace fixture
