#include "crossloc/map_pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>

namespace crossloc {

MapFilterParams MapFilterParams::resolved(int n) const {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "need at least one session");
  MapFilterParams p = *this;
  auto frac = [&](double f) { return static_cast<int>(std::ceil(f * n - 1e-9)); };
  if (p.static_threshold < 0) p.static_threshold = frac(0.5);
  if (p.erosion_count < 0) p.erosion_count = frac(0.7);
  if (p.expansion_count < 0) p.expansion_count = frac(0.6);
  return p;
}

namespace {

Pose pose_at(const SessionData& s, double t, double tol) {
  const int i = nearest_index(s.ground_truth, t, tol);
  if (i < 0) throw Error(ErrorCode::MissingPose, "no ground-truth pose near t=" + std::to_string(t));
  return s.ground_truth[i].pose;
}

int frame_at(const SessionData& s, double t, double tol) {
  auto it = std::lower_bound(s.frames.begin(), s.frames.end(), t,
                             [](const CameraFrame& f, double v) { return f.timestamp < v; });
  int best = -1;
  double best_dt = tol;
  for (auto c : {it == s.frames.begin() ? s.frames.end() : std::prev(it), it}) {
    if (c == s.frames.end()) continue;
    const double dt = std::abs(c->timestamp - t);
    if (dt < best_dt || (dt == best_dt && best < 0)) {
      best = static_cast<int>(c - s.frames.begin());
      best_dt = dt;
    }
  }
  return best;
}

std::vector<MapPoint> transform_scan(const SessionData& s, const LaserScan& scan,
                                     const MapFilterParams& params) {
  const Pose body = pose_at(s, scan.timestamp, params.pose_tolerance);
  const int fi = frame_at(s, scan.timestamp, params.pose_tolerance);
  std::vector<MapPoint> kept;
  if (fi < 0 || s.frames[fi].observations.empty()) return kept;

  std::vector<Vec2> pixels;
  pixels.reserve(s.frames[fi].observations.size());
  for (const StereoObservation& o : s.frames[fi].observations) pixels.push_back(o.left);
  const KdTree<2> features(pixels);

  const CameraModel& cam = s.rig.camera;
  const Pose cam_T_laser = s.rig.camera_T_laser();
  const Pose map_T_laser = body * s.rig.body_T_laser;
  for (std::size_t k = 0; k < scan.points.size(); ++k) {
    const Vec3 pc = cam_T_laser * scan.points[k];
    if (pc.z() <= 1e-6) continue;
    const Vec2 px = cam.project(pc);
    if (!cam.in_image(px)) continue;
    if (features.nearest(px).distance > params.pixel_gate) continue;
    MapPoint p;
    p.position = map_T_laser * scan.points[k];
    p.label = scan.labels.empty() ? -1 : scan.labels[k];
    kept.push_back(p);
  }
  return kept;
}

std::array<long, 3> voxel_key(const Vec3& p, double voxel) {
  return {static_cast<long>(std::floor(p.x() / voxel)), static_cast<long>(std::floor(p.y() / voxel)),
          static_cast<long>(std::floor(p.z() / voxel))};
}

std::vector<Vec3> positions(std::span<const MapPoint> pts) {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const MapPoint& p : pts) out.push_back(p.position);
  return out;
}

// Per-point flags computed in parallel or serially; identical either way.
template <typename Pred>
std::vector<char> flag_points(std::size_t n, Execution exec, Pred pred) {
  std::vector<char> flags(n, 0);
  const long count = static_cast<long>(n);
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < count; ++i) flags[i] = pred(i) ? 1 : 0;
  } else {
    for (long i = 0; i < count; ++i) flags[i] = pred(i) ? 1 : 0;
  }
  return flags;
}

}  // namespace

PointCloudMap vision_transform_session(const SessionData& session, const MapFilterParams& params,
                                       Execution exec) {
  std::vector<std::vector<MapPoint>> per_scan(session.scans.size());
  const long n = static_cast<long>(session.scans.size());
  if (exec == Execution::Parallel) {
    // Exceptions cannot cross the OpenMP region; collect and rethrow.
    std::vector<std::exception_ptr> errors(session.scans.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < n; ++i) {
      try {
        per_scan[i] = transform_scan(session, session.scans[i], params);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  } else {
    for (long i = 0; i < n; ++i) per_scan[i] = transform_scan(session, session.scans[i], params);
  }
  std::vector<MapPoint> all;
  for (auto& v : per_scan) all.insert(all.end(), v.begin(), v.end());
  return PointCloudMap(std::move(all), FrameTag::Map);
}

PointCloudMap merge_sessions(std::span<const PointCloudMap> sessions, const MapFilterParams& params) {
  if (sessions.empty()) throw Error(ErrorCode::InvalidArgument, "merge needs at least one session");
  std::vector<MapPoint> base = sessions[0].points();
  for (MapPoint& p : base) p.observation_count = 1;
  for (std::size_t s = 1; s < sessions.size(); ++s) {
    const std::size_t snapshot_size = base.size();
    const std::vector<Vec3> pos = positions(std::span<const MapPoint>(base.data(), snapshot_size));
    const KdTree<3> index(pos);
    std::vector<char> bumped(snapshot_size, 0);
    for (const MapPoint& q : sessions[s].points()) {
      const Neighbor nn = index.nearest(q.position);
      if (nn.index < 0 || nn.distance > params.newness_radius) {
        MapPoint fresh = q;
        fresh.observation_count = 1;
        base.push_back(fresh);
      } else {
        for (int j : index.within(q.position, params.newness_radius)) bumped[j] = 1;
      }
    }
    for (std::size_t j = 0; j < snapshot_size; ++j) base[j].observation_count += bumped[j];
  }
  return PointCloudMap(std::move(base), FrameTag::Map);
}

Partition classify_static(const PointCloudMap& merged, int static_threshold) {
  Partition out;
  for (const MapPoint& p : merged.points()) {
    (p.observation_count >= static_threshold ? out.static_points : out.dynamic_points).push_back(p);
  }
  return out;
}

Partition erode_static(const Partition& in, const MapFilterParams& params, Execution exec) {
  if (in.dynamic_points.empty()) return in;
  const KdTree<3> dyn(positions(in.dynamic_points));
  const auto& s = in.static_points;
  const std::vector<char> remove = flag_points(s.size(), exec, [&](long i) {
    return s[i].observation_count < params.erosion_count &&
           dyn.nearest(s[i].position).distance < params.erosion_radius;
  });
  Partition out;
  out.dynamic_points = in.dynamic_points;
  for (std::size_t i = 0; i < s.size(); ++i) {
    (remove[i] ? out.dynamic_points : out.static_points).push_back(s[i]);
  }
  return out;
}

Partition expand_static(const Partition& in, const MapFilterParams& params, Execution exec) {
  if (in.static_points.empty()) return in;
  const KdTree<3> stat(positions(in.static_points));
  const auto& d = in.dynamic_points;
  const std::vector<char> move = flag_points(d.size(), exec, [&](long i) {
    return d[i].observation_count > params.expansion_count &&
           stat.nearest(d[i].position).distance < params.expansion_radius;
  });
  Partition out;
  out.static_points = in.static_points;
  for (std::size_t i = 0; i < d.size(); ++i) {
    (move[i] ? out.static_points : out.dynamic_points).push_back(d[i]);
  }
  return out;
}

std::vector<MapPoint> voxel_downsample(std::span<const MapPoint> points, double voxel) {
  if (!(voxel > 0.0)) throw Error(ErrorCode::InvalidArgument, "voxel size must be positive");
  struct Acc {
    Vec3 sum = Vec3::Zero();
    int n = 0;
    int count = 0;
    int label = -1;
  };
  std::map<std::array<long, 3>, Acc> cells;
  for (const MapPoint& p : points) {
    Acc& a = cells[voxel_key(p.position, voxel)];
    if (a.n == 0) a.label = p.label;
    a.sum += p.position;
    ++a.n;
    a.count = std::max(a.count, p.observation_count);
  }
  std::vector<MapPoint> out;
  out.reserve(cells.size());
  for (const auto& [key, a] : cells) {
    MapPoint p;
    p.position = a.sum / a.n;
    p.observation_count = a.count;
    p.label = a.label;
    out.push_back(p);
  }
  return out;
}

PointCloudMap extract_ground(std::span<const SessionData> sessions, const MapFilterParams& params) {
  std::vector<MapPoint> band;
  for (const SessionData& s : sessions) {
    const double h = s.rig.laser_height();
    for (const LaserScan& scan : s.scans) {
      const Pose map_T_laser = pose_at(s, scan.timestamp, params.pose_tolerance) * s.rig.body_T_laser;
      for (std::size_t k = 0; k < scan.points.size(); ++k) {
        if (std::abs(scan.points[k].z() + h) >= params.ground_band) continue;
        MapPoint p;
        p.position = map_T_laser * scan.points[k];
        p.label = scan.labels.empty() ? -1 : scan.labels[k];
        band.push_back(p);
      }
    }
  }
  std::vector<MapPoint> cells = voxel_downsample(band, params.voxel_size);
  for (MapPoint& p : cells) {
    p.is_ground = true;
    p.normal = Vec3::UnitZ();
    p.observation_count = 1;
  }
  return PointCloudMap(std::move(cells), FrameTag::Map);
}

PointCloudMap build_final_map(std::span<const MapPoint> static_points, const PointCloudMap& ground,
                              const MapFilterParams& params, Execution exec) {
  std::vector<MapPoint> out;
  if (!static_points.empty()) {
    NormalParams np;
    np.neighborhood_k = params.normal_k;
    const PointCloudMap with_normals = estimate_normals(
        PointCloudMap(std::vector<MapPoint>(static_points.begin(), static_points.end())), np, exec);
    out = with_normals.points();
  }
  for (MapPoint p : ground.points()) {
    p.is_ground = true;
    p.normal = Vec3::UnitZ();
    out.push_back(p);
  }
  return PointCloudMap(std::move(out), FrameTag::Map);
}

PointCloudMap build_full_map(const SessionData& s, const MapFilterParams& params, Execution exec) {
  std::vector<MapPoint> all;
  for (const LaserScan& scan : s.scans) {
    const Pose map_T_laser = pose_at(s, scan.timestamp, params.pose_tolerance) * s.rig.body_T_laser;
    for (std::size_t k = 0; k < scan.points.size(); ++k) {
      MapPoint p;
      p.position = map_T_laser * scan.points[k];
      p.label = scan.labels.empty() ? -1 : scan.labels[k];
      all.push_back(p);
    }
  }
  NormalParams np;
  np.neighborhood_k = params.normal_k;
  return estimate_normals(PointCloudMap(voxel_downsample(all, params.full_map_voxel)), np, exec);
}

MapBuildResult build_map(std::span<const SessionData> sessions, const MapFilterParams& params_in,
                         Execution exec) {
  const MapFilterParams params = params_in.resolved(static_cast<int>(sessions.size()));
  MapBuildResult r;
  std::vector<PointCloudMap> transformed;
  std::size_t total = 0;
  for (const SessionData& s : sessions) {
    transformed.push_back(vision_transform_session(s, params, exec));
    total += transformed.back().size();
  }
  r.stages.push_back({"vision_transformed", total});
  r.merged = merge_sessions(transformed, params);
  r.stages.push_back({"merged", r.merged.size()});
  Partition p = classify_static(r.merged, params.static_threshold);
  r.stages.push_back({"static", p.static_points.size()});
  p = erode_static(p, params, exec);
  r.stages.push_back({"static_after_erosion", p.static_points.size()});
  p = expand_static(p, params, exec);
  r.stages.push_back({"static_after_expansion", p.static_points.size()});
  r.partition = std::move(p);
  r.ground = extract_ground(sessions, params);
  r.stages.push_back({"ground", r.ground.size()});
  r.final_map = build_final_map(r.partition.static_points, r.ground, params, exec);
  r.stages.push_back({"final", r.final_map.size()});
  return r;
}

void save_stage_counts(const std::vector<StageCount>& stages, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "stage,points\n";
  for (const StageCount& s : stages) out << s.stage << ',' << s.points << '\n';
}

// ------------------------------------------------------------- diagnostics

namespace {

double log_gaussian(const Vec3& x, const Vec3& mean, double sigma) {
  const double s2 = sigma * sigma;
  return -0.5 * (x - mean).squaredNorm() / s2 - 1.5 * std::log(2.0 * std::numbers::pi * s2);
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

AssociationDistribution normalized(std::vector<int> candidates, std::vector<double> logs) {
  AssociationDistribution d;
  const double lse = log_sum_exp(logs);
  d.candidates = std::move(candidates);
  d.log_probability.resize(logs.size());
  d.probability.resize(logs.size());
  for (std::size_t j = 0; j < logs.size(); ++j) {
    d.log_probability[j] = logs[j] - lse;
    d.probability[j] = std::exp(d.log_probability[j]);
  }
  return d;
}

}  // namespace

AssociationDistribution association_posterior(const Vec3& p_v, const PointCloudMap& map,
                                              const Pose& xi, double sigma, int k) {
  const auto nn = map.knn(xi.inverse() * p_v, k);
  std::vector<int> cand;
  std::vector<double> logs;
  for (const Neighbor& n : nn) {
    cand.push_back(n.index);
    logs.push_back(log_gaussian(p_v, xi * map[n.index].position, sigma));
  }
  return normalized(std::move(cand), std::move(logs));
}

AssociationDistribution reference_distribution(const Vec3& p_v, const PointCloudMap& map,
                                               std::span<const int> candidates,
                                               const Pose& xi_true, double eta) {
  if (candidates.empty()) throw Error(ErrorCode::InvalidArgument, "no candidates");
  std::vector<double> logs;
  for (int j : candidates) logs.push_back(log_gaussian(p_v, xi_true * map[j].position, eta));
  return normalized(std::vector<int>(candidates.begin(), candidates.end()), std::move(logs));
}

KldValue association_kld(const AssociationDistribution& posterior,
                         const AssociationDistribution& reference) {
  if (posterior.candidates != reference.candidates ||
      posterior.probability.size() != reference.probability.size()) {
    throw Error(ErrorCode::MismatchedSupport, "distributions are over different candidates");
  }
  KldValue out;
  const bool have_logs = posterior.log_probability.size() == posterior.probability.size() &&
                         reference.log_probability.size() == reference.probability.size();
  for (std::size_t j = 0; j < posterior.probability.size(); ++j) {
    const double p = posterior.probability[j], g = reference.probability[j];
    if (p < 1e-12 && g < 1e-12) continue;
    if (p == 0.0) continue;
    if (have_logs) {
      out.value += p * (posterior.log_probability[j] - reference.log_probability[j]);
    } else if (g == 0.0) {
      out.infinite = true;
    } else {
      out.value += p * std::log(p / g);
    }
  }
  if (out.infinite) out.value = std::numeric_limits<double>::infinity();
  return out;
}

double association_log_likelihood(const Vec3& p_v, const PointCloudMap& map,
                                  std::span<const int> candidates, const Pose& xi, double sigma) {
  std::vector<double> logs;
  const double prior = -std::log(static_cast<double>(candidates.size()));
  for (int j : candidates) logs.push_back(prior + log_gaussian(p_v, xi * map[j].position, sigma));
  return log_sum_exp(logs);
}

double jensen_lower_bound(const Vec3& p_v, const PointCloudMap& map,
                          std::span<const int> candidates, const Pose& xi, double sigma,
                          std::span<const double> q) {
  if (q.size() != candidates.size()) {
    throw Error(ErrorCode::MismatchedSupport, "Q must cover the candidate set");
  }
  const double prior = -std::log(static_cast<double>(candidates.size()));
  double bound = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    if (q[j] <= 0.0) continue;
    bound += q[j] * (prior + log_gaussian(p_v, xi * map[candidates[j]].position, sigma) -
                     std::log(q[j]));
  }
  return bound;
}

}  // namespace crossloc
