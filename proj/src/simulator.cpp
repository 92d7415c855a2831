#include "crossloc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/LU>

namespace crossloc {

bool WorldElement::present_in(int session) const {
  if (presence != Presence::SemiStatic) return true;
  return std::find(sessions.begin(), sessions.end(), session) != sessions.end();
}

Vec3 WorldElement::offset_at(double t) const {
  if (presence != Presence::Dynamic) return Vec3::Zero();
  return motion_amplitude * std::sin(2.0 * std::numbers::pi * t / motion_period);
}

namespace {

std::optional<double> hit_box(const Vec3& lo, const Vec3& hi, const Vec3& o, const Vec3& d) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a], tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  if (t0 <= 1e-9) return std::nullopt;  // origin inside or on the surface
  return t0;
}

std::optional<double> hit_cylinder(const WorldElement& e, const Vec3& o, const Vec3& d) {
  const double dx = o.x() - e.center.x(), dy = o.y() - e.center.y();
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a < 1e-15) return std::nullopt;
  const double b = 2.0 * (dx * d.x() + dy * d.y());
  const double c = dx * dx + dy * dy - e.radius * e.radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return std::nullopt;
  const double s = (-b - std::sqrt(disc)) / (2.0 * a);
  if (s <= 1e-9) return std::nullopt;
  const double z = o.z() + s * d.z();
  if (z < e.center.z() || z > e.center.z() + e.height) return std::nullopt;
  return s;
}

std::optional<double> hit_sphere(const WorldElement& e, const Vec3& o, const Vec3& d) {
  const Vec3 oc = o - e.center;
  const double b = oc.dot(d);
  const double c = oc.squaredNorm() - e.radius * e.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double s = -b - std::sqrt(disc);
  if (s <= 1e-9) return std::nullopt;
  return s;
}

std::mt19937_64 make_rng(std::uint64_t seed, int session, int stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(session), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

}  // namespace

std::optional<RayHit> cast_ray(const WorldModel& world, const Vec3& origin, const Vec3& dir,
                               double max_range, int session, double time,
                               bool include_dynamic) {
  std::optional<RayHit> best;
  double best_s = max_range;
  for (const WorldElement& e : world.elements) {
    if (!e.present_in(session)) continue;
    if (e.presence == Presence::Dynamic && !include_dynamic) continue;
    std::optional<double> s;
    switch (e.shape) {
      case Shape::Ground:
        if (dir.z() < -1e-12) {
          const double g = (e.center.z() - origin.z()) / dir.z();
          if (g > 1e-9) s = g;
        }
        break;
      case Shape::Box: {
        const Vec3 off = e.offset_at(time);
        s = hit_box(e.lo + off, e.hi + off, origin, dir);
        break;
      }
      case Shape::Cylinder: s = hit_cylinder(e, origin, dir); break;
      case Shape::Sphere: s = hit_sphere(e, origin, dir); break;
    }
    if (s && *s <= best_s) {
      // Strict improvement, or equal distance with a lower id (stable).
      if (!best || *s < best_s) {
        best = RayHit{*s, e.id};
        best_s = *s;
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------- trajectory

Trajectory::Trajectory(const TrajectorySpec& spec) : closed_(spec.closed) {
  std::vector<Vec3> pts = spec.waypoints;
  if (pts.size() < 2) throw Error(ErrorCode::InvalidArgument, "trajectory needs >= 2 waypoints");
  if (!(spec.speed > 0.0)) throw Error(ErrorCode::InvalidArgument, "speed must be positive");
  if (spec.reverse) std::reverse(pts.begin(), pts.end());
  if (closed_) pts.push_back(pts.front());

  const int n = static_cast<int>(pts.size()) - 1;  // segments
  times_.assign(n + 1, 0.0);
  for (int i = 0; i < n; ++i) {
    const double len = (pts[i + 1] - pts[i]).norm();
    if (len <= 0.0) throw Error(ErrorCode::InvalidArgument, "repeated waypoint");
    times_[i + 1] = times_[i] + len / spec.speed;
  }
  for (int a = 0; a < 3; ++a) {
    Axis& ax = axes_[a];
    ax.y.resize(n + 1);
    for (int i = 0; i <= n; ++i) ax.y[i] = pts[i][a];
    ax.m.assign(n + 1, 0.0);
    auto h = [&](int i) { return times_[i + 1] - times_[i]; };
    auto slope = [&](int i) { return (ax.y[i + 1] - ax.y[i]) / h(i); };
    if (closed_) {
      if (n < 3) throw Error(ErrorCode::InvalidArgument, "closed trajectory needs >= 3 waypoints");
      MatX A = MatX::Zero(n, n);
      VecX rhs(n);
      for (int i = 0; i < n; ++i) {
        const int prev = (i + n - 1) % n;
        A(i, prev) += h(prev);
        A(i, i) += 2.0 * (h(prev) + h(i));
        A(i, (i + 1) % n) += h(i);
        rhs[i] = 6.0 * (slope(i) - slope(prev));
      }
      const VecX m = A.partialPivLu().solve(rhs);
      for (int i = 0; i < n; ++i) ax.m[i] = m[i];
      ax.m[n] = ax.m[0];
    } else if (n >= 2) {
      const int k = n - 1;  // interior knots; natural ends
      MatX A = MatX::Zero(k, k);
      VecX rhs(k);
      for (int r = 0; r < k; ++r) {
        const int i = r + 1;
        if (r > 0) A(r, r - 1) = h(i - 1);
        A(r, r) = 2.0 * (h(i - 1) + h(i));
        if (r + 1 < k) A(r, r + 1) = h(i);
        rhs[r] = 6.0 * (slope(i) - slope(i - 1));
      }
      const VecX m = A.partialPivLu().solve(rhs);
      for (int r = 0; r < k; ++r) ax.m[r + 1] = m[r];
    }
  }
}

double Trajectory::wrap(double t, int& seg) const {
  const double T = period();
  if (closed_) {
    t = std::fmod(t, T);
    if (t < 0.0) t += T;
  } else {
    t = std::clamp(t, 0.0, T);
  }
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  seg = static_cast<int>(it - times_.begin()) - 1;
  seg = std::clamp(seg, 0, static_cast<int>(times_.size()) - 2);
  return t;
}

double Trajectory::eval(const Axis& a, double t, int deriv) const {
  int i = 0;
  t = wrap(t, i);
  const double h = times_[i + 1] - times_[i];
  const double A = (times_[i + 1] - t) / h, B = (t - times_[i]) / h;
  switch (deriv) {
    case 0:
      return A * a.y[i] + B * a.y[i + 1] +
             ((A * A * A - A) * a.m[i] + (B * B * B - B) * a.m[i + 1]) * h * h / 6.0;
    case 1:
      return (a.y[i + 1] - a.y[i]) / h - (3.0 * A * A - 1.0) / 6.0 * h * a.m[i] +
             (3.0 * B * B - 1.0) / 6.0 * h * a.m[i + 1];
    default:
      return A * a.m[i] + B * a.m[i + 1];
  }
}

Vec3 Trajectory::position(double t) const {
  return Vec3(eval(axes_[0], t, 0), eval(axes_[1], t, 0), eval(axes_[2], t, 0));
}
Vec3 Trajectory::velocity(double t) const {
  return Vec3(eval(axes_[0], t, 1), eval(axes_[1], t, 1), eval(axes_[2], t, 1));
}
Vec3 Trajectory::acceleration(double t) const {
  return Vec3(eval(axes_[0], t, 2), eval(axes_[1], t, 2), eval(axes_[2], t, 2));
}

double Trajectory::yaw(double t) const {
  const Vec3 v = velocity(t);
  return std::atan2(v.y(), v.x());
}

double Trajectory::yaw_rate(double t) const {
  const Vec3 v = velocity(t), a = acceleration(t);
  const double s2 = v.x() * v.x() + v.y() * v.y();
  if (s2 < 1e-12) return 0.0;
  return (v.x() * a.y() - v.y() * a.x()) / s2;
}

Pose Trajectory::pose(double t) const { return Pose(Rotation::about_z(yaw(t)), position(t)); }

TrajectorySpec make_default_loop(double body_height, double speed) {
  // Centre line: points at distance r from the inner rectangle [-15,15]x[-5,5],
  // traversed counter-clockwise from (0, -10).
  const double hx = 15.0, hy = 5.0, r = 5.0;
  const double pi = std::numbers::pi;
  const double straight_x = 2.0 * hx, straight_y = 2.0 * hy, arc = 0.5 * pi * r;
  const double total = 2.0 * straight_x + 2.0 * straight_y + 4.0 * arc;
  const int n = static_cast<int>(std::round(total));  // about 1 m spacing
  TrajectorySpec spec;
  spec.speed = speed;
  spec.closed = true;
  auto at = [&](double s) -> Vec2 {
    // Piecewise: bottom straight (from x=0), corners, sides.
    const double seg[] = {hx, arc, straight_y, arc, straight_x, arc, straight_y, arc, hx};
    if (s < seg[0]) return {s, -hy - r};
    s -= seg[0];
    if (s < seg[1]) {
      const double a = -0.5 * pi + s / r;
      return {hx + r * std::cos(a), -hy + r * std::sin(a)};
    }
    s -= seg[1];
    if (s < seg[2]) return {hx + r, -hy + s};
    s -= seg[2];
    if (s < seg[3]) {
      const double a = s / r;
      return {hx + r * std::cos(a), hy + r * std::sin(a)};
    }
    s -= seg[3];
    if (s < seg[4]) return {hx - s, hy + r};
    s -= seg[4];
    if (s < seg[5]) {
      const double a = 0.5 * pi + s / r;
      return {-hx + r * std::cos(a), hy + r * std::sin(a)};
    }
    s -= seg[5];
    if (s < seg[6]) return {-hx - r, hy - s};
    s -= seg[6];
    if (s < seg[7]) {
      const double a = pi + s / r;
      return {-hx + r * std::cos(a), -hy + r * std::sin(a)};
    }
    s -= seg[7];
    return {-hx + s, -hy - r};
  };
  for (int i = 0; i < n; ++i) {
    const Vec2 p = at(total * i / n);
    spec.waypoints.emplace_back(p.x(), p.y(), body_height);
  }
  return spec;
}

// --------------------------------------------------------------------- world

namespace {

WorldElement make_box(const std::string& name, const Vec3& lo, const Vec3& hi) {
  WorldElement e;
  e.name = name;
  e.shape = Shape::Box;
  e.lo = lo;
  e.hi = hi;
  return e;
}

void sample_box_faces(WorldModel& w, const WorldElement& e, double density, bool top,
                      std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double margin = 0.15;
  const Vec3 size = e.hi - e.lo;
  struct Face {
    int axis;
    double sign;
  };
  std::vector<Face> faces = {{0, -1}, {0, 1}, {1, -1}, {1, 1}};
  if (top) faces.push_back({2, 1});
  for (const Face& f : faces) {
    const int a1 = f.axis == 0 ? 1 : 0;
    const int a2 = f.axis == 2 ? 1 : 2;
    const double w1 = size[a1] - 2 * margin, w2 = size[a2] - 2 * margin;
    if (w1 <= 0 || w2 <= 0) continue;
    const int count = static_cast<int>(std::round(density * w1 * w2));
    for (int k = 0; k < count; ++k) {
      Vec3 p;
      p[f.axis] = f.sign > 0 ? e.hi[f.axis] : e.lo[f.axis];
      p[a1] = e.lo[a1] + margin + u(rng) * w1;
      p[a2] = e.lo[a2] + margin + u(rng) * w2;
      Vec3 n = Vec3::Zero();
      n[f.axis] = f.sign;
      w.features.push_back(FeaturePoint{static_cast<int>(w.features.size()), e.id, p, n});
    }
  }
}

double signed_distance_box2d(double x, double y, double hx, double hy) {
  const double dx = std::abs(x) - hx, dy = std::abs(y) - hy;
  const double outside = std::hypot(std::max(dx, 0.0), std::max(dy, 0.0));
  return outside + std::min(std::max(dx, dy), 0.0);
}

}  // namespace

WorldModel make_default_world(std::uint64_t seed) {
  WorldModel w;
  auto add = [&](WorldElement e) {
    e.id = static_cast<int>(w.elements.size());
    w.elements.push_back(e);
    return e.id;
  };

  WorldElement ground;
  ground.name = "ground";
  ground.shape = Shape::Ground;
  add(ground);

  // Street fronts about 5 m from the road centre line. Alternate buildings
  // are set back 1.5 m so their side walls constrain motion along the street.
  const double xs[] = {-17, -11, -6, -2, 2, 6, 11, 17};
  const double heights[] = {7, 5, 6, 0, 6, 8, 5};
  for (int side = 0; side < 2; ++side) {
    for (int i = 0; i < 7; ++i) {
      if (i == 3) continue;  // cross street
      const double front = (i % 2 == 0) == (i < 3) ? 15.0 : 16.5;
      const std::string name = std::string(side ? "front_n_" : "front_s_") + std::to_string(i);
      if (side) add(make_box(name, {xs[i], front, 0}, {xs[i + 1], 18, heights[i]}));
      else add(make_box(name, {xs[i], -18, 0}, {xs[i + 1], -front, heights[i]}));
    }
  }
  add(make_box("facade_e", {25, -8, 0}, {26, 8, 7}));
  add(make_box("facade_w", {-26, -8, 0}, {-25, 8, 6}));
  add(make_box("block_w", {-14, -5, 0}, {-2, 5, 7}));
  add(make_box("block_e", {2, -5, 0}, {14, 5, 6}));

  const Vec2 poles[] = {{-12, -12.5}, {-6, -12.5}, {0, -12.5}, {6, -12.5}, {12, -12.5},
                        {-12, 12.5},  {-6, 12.5},  {0, 12.5},  {12, 12.5},  {22.5, -4},
                        {22.5, 4},    {-22.5, 0}};
  for (const Vec2& p : poles) {
    WorldElement e;
    e.name = "pole";
    e.shape = Shape::Cylinder;
    e.center = Vec3(p.x(), p.y(), 0.0);
    e.radius = 0.15;
    e.height = 4.0;
    add(e);
  }

  // Parked cars, 0.6 m from the facade behind them.
  WorldElement car_a = make_box("car_a", {5.0, 12.6, 0.0}, {9.2, 14.4, 1.5});
  car_a.presence = Presence::SemiStatic;
  car_a.sessions = {1, 2};
  add(car_a);
  WorldElement car_b = make_box("car_b", {-9.0, 5.6, 0.0}, {-4.8, 7.4, 1.5});
  car_b.presence = Presence::SemiStatic;
  car_b.sessions = {0, 3};
  add(car_b);

  for (const Vec3& c : {Vec3(-9, -12.5, 0.7), Vec3(-9, 12.5, 0.7), Vec3(22.5, 0, 0.7)}) {
    WorldElement e;
    e.name = "bush";
    e.shape = Shape::Sphere;
    e.center = c;
    e.radius = 0.7;
    add(e);
  }

  WorldElement mover = make_box("moving_box", {7.25, 6.8, 0.0}, {8.75, 8.3, 1.5});
  mover.presence = Presence::Dynamic;
  mover.motion_amplitude = Vec3(4.0, 0.0, 0.0);
  mover.motion_period = 20.0;
  add(mover);

  std::mt19937_64 rng = make_rng(seed, -1, 0);
  for (const WorldElement& e : w.elements) {
    if (e.shape == Shape::Box && e.presence == Presence::Static) {
      sample_box_faces(w, e, 0.8, false, rng);
    } else if (e.shape == Shape::Box && e.presence == Presence::SemiStatic) {
      sample_box_faces(w, e, 3.0, true, rng);
    } else if (e.shape == Shape::Cylinder) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (int k = 0; k < 16; ++k) {
        const double a = 2.0 * std::numbers::pi * u(rng);
        const Vec3 n(std::cos(a), std::sin(a), 0.0);
        const Vec3 p = e.center + e.radius * n + Vec3(0, 0, 0.3 + u(rng) * (e.height - 0.6));
        w.features.push_back(FeaturePoint{static_cast<int>(w.features.size()), e.id, p, n});
      }
    }
  }
  // Ground texture near the road, outside buildings.
  std::uniform_real_distribution<double> ux(-27.0, 27.0), uy(-17.0, 17.0);
  const int target = 320;
  int placed = 0;
  while (placed < target) {
    const double x = ux(rng), y = uy(rng);
    if (std::abs(signed_distance_box2d(x, y, 15.0, 5.0) - 5.0) > 6.0) continue;
    bool inside = false;
    for (const WorldElement& e : w.elements) {
      if (e.shape == Shape::Box && x > e.lo.x() - 0.2 && x < e.hi.x() + 0.2 &&
          y > e.lo.y() - 0.2 && y < e.hi.y() + 0.2) {
        inside = true;
      }
    }
    if (inside) continue;
    w.features.push_back(
        FeaturePoint{static_cast<int>(w.features.size()), 0, Vec3(x, y, 0.0), Vec3::UnitZ()});
    ++placed;
  }
  return w;
}

std::vector<char> ground_feature_mask(const WorldModel& world, int session, std::uint64_t seed) {
  std::mt19937_64 rng = make_rng(seed, session, 4);
  std::bernoulli_distribution visible(world.ground_feature_visibility);
  std::vector<char> mask(world.features.size(), 1);
  for (const FeaturePoint& f : world.features) {
    if (world.element(f.element).shape == Shape::Ground) mask[f.id] = visible(rng) ? 1 : 0;
  }
  return mask;
}

// ------------------------------------------------------------------- sensors

ImuTruth synthesize_ideal_imu(const Trajectory& traj, const SensorRig& rig, double imu_rate,
                              double duration) {
  if (!(imu_rate > 0.0) || !(duration > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "rates and duration must be positive");
  }
  const int n = static_cast<int>(std::llround(duration * imu_rate));
  ImuTruth out;
  out.ideal.reserve(n);
  out.states.reserve(n);
  for (int j = 0; j < n; ++j) {
    const double t = j / imu_rate;
    const Pose p = traj.pose(t);
    ImuSample s;
    s.timestamp = t;
    s.angular_velocity = Vec3(0.0, 0.0, traj.yaw_rate(t));
    s.linear_acceleration = p.R().transpose() * (traj.acceleration(t) - rig.gravity);
    out.ideal.push_back(s);
  }
  NavState s0;
  s0.pose = traj.pose(0.0);
  s0.velocity = traj.velocity(0.0);
  ImuPreintegrator integ(ImuBias{}, rig.imu);
  for (int j = 0; j < n; ++j) {
    integ.add(out.ideal[j]);
    out.states.push_back(j == 0 ? s0 : predict_state(s0, integ.result(), rig.gravity));
  }
  return out;
}

std::optional<StereoObservation> observe_feature(const WorldModel& world, const FeaturePoint& f,
                                                 const Pose& body, const SensorRig& rig,
                                                 int session, double max_range) {
  const WorldElement& e = world.element(f.element);
  if (!e.present_in(session) || e.presence == Presence::Dynamic) return std::nullopt;
  const Pose cam_l = body * rig.camera.body_T_camera;
  const Vec3 to_cam = cam_l.t() - f.position;
  const double range = to_cam.norm();
  if (range > max_range || f.normal.dot(to_cam) <= 0.0) return std::nullopt;
  const Vec3 pl = cam_l.inverse() * f.position;
  if (pl.z() < 0.1) return std::nullopt;
  const CameraModel right = rig.right_camera();
  const Vec3 pr = (body * right.body_T_camera).inverse() * f.position;
  if (pr.z() < 0.1) return std::nullopt;
  StereoObservation o;
  o.landmark_id = f.id;
  o.left = rig.camera.project(pl);
  o.right = right.project(pr);
  if (!rig.camera.in_image(o.left) || !right.in_image(o.right)) return std::nullopt;
  const Vec3 dir = -to_cam / range;
  const auto hit = cast_ray(world, cam_l.t(), dir, range, session, 0.0, false);
  if (hit && hit->distance < range - 1e-4) return std::nullopt;
  return o;
}

LaserScan simulate_scan(const WorldModel& world, const Pose& body, const SensorRig& rig,
                        int session, double time) {
  const LaserModel& L = rig.laser;
  const Pose laser = body * rig.body_T_laser;
  LaserScan scan;
  scan.timestamp = time;
  const int n_az = static_cast<int>(std::round(360.0 / L.azimuth_step_deg));
  const double deg = std::numbers::pi / 180.0;
  for (int c = 0; c < L.channels; ++c) {
    const double el = L.channels == 1
                          ? L.min_elevation_deg
                          : L.min_elevation_deg +
                                (L.max_elevation_deg - L.min_elevation_deg) * c / (L.channels - 1);
    for (int a = 0; a < n_az; ++a) {
      const double az = a * L.azimuth_step_deg * deg;
      const Vec3 d(std::cos(el * deg) * std::cos(az), std::cos(el * deg) * std::sin(az),
                   std::sin(el * deg));
      const auto hit = cast_ray(world, laser.t(), laser.R() * d, L.max_range, session, time, true);
      if (!hit) continue;
      scan.points.push_back(d * hit->distance);
      scan.labels.push_back(hit->element);
    }
  }
  return scan;
}

SessionData generate_session(const WorldModel& world, const TrajectorySpec& spec,
                             const SensorRig& rig, int session_id, std::uint64_t seed,
                             const SimulationOptions& opt) {
  if (!(opt.frame_rate > 0.0) || !(opt.scan_rate > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "rates must be positive");
  }
  const Trajectory traj(spec);
  const ImuTruth truth = synthesize_ideal_imu(traj, rig, opt.imu_rate, opt.duration);
  const int n_imu = static_cast<int>(truth.ideal.size());

  SessionData s;
  s.session_id = session_id;
  s.rig = rig;

  // IMU: ideal + walking bias + white noise.
  std::mt19937_64 imu_rng = make_rng(seed, session_id, 1);
  std::normal_distribution<double> N(0.0, 1.0);
  const double dt = 1.0 / opt.imu_rate;
  ImuBias bias;
  for (int k = 0; k < 3; ++k) {
    bias.gyro[k] = opt.initial_gyro_bias_sigma * N(imu_rng);
    bias.accel[k] = opt.initial_accel_bias_sigma * N(imu_rng);
  }
  std::vector<ImuBias> bias_track(n_imu);
  const double noise = opt.noise_free ? 0.0 : 1.0;
  for (int j = 0; j < n_imu; ++j) {
    if (j > 0 && !opt.noise_free) {
      for (int k = 0; k < 3; ++k) {
        bias.gyro[k] += rig.imu.gyro_bias_walk * std::sqrt(dt) * N(imu_rng);
        bias.accel[k] += rig.imu.accel_bias_walk * std::sqrt(dt) * N(imu_rng);
      }
    }
    bias_track[j] = bias;
    ImuSample m = truth.ideal[j];
    for (int k = 0; k < 3; ++k) {
      m.angular_velocity[k] +=
          bias.gyro[k] + noise * rig.imu.gyro_noise_density / std::sqrt(dt) * N(imu_rng);
      m.linear_acceleration[k] +=
          bias.accel[k] + noise * rig.imu.accel_noise_density / std::sqrt(dt) * N(imu_rng);
    }
    s.imu.push_back(m);
  }

  auto imu_index = [&](double t) {
    return std::clamp(static_cast<int>(std::llround(t * opt.imu_rate)), 0, n_imu - 1);
  };

  // Camera frames.
  const std::vector<char> ground_mask = ground_feature_mask(world, session_id, seed);
  std::mt19937_64 cam_rng = make_rng(seed, session_id, 2);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double pixel_sigma = opt.noise_free ? 0.0 : rig.pixel_sigma;
  const double outliers = opt.noise_free ? 0.0 : opt.outlier_fraction;
  const int n_frames = static_cast<int>(std::floor(opt.duration * opt.frame_rate + 1e-9));
  const int n_features = static_cast<int>(world.features.size());
  for (int k = 0; k < n_frames; ++k) {
    const double t = k / opt.frame_rate;
    const int j = imu_index(t);
    const NavState& st = truth.states[j];
    CameraFrame frame;
    frame.timestamp = truth.ideal[j].timestamp;
    TimedState ts{frame.timestamp, st};
    ts.state.accel_bias = bias_track[j].accel;
    ts.state.gyro_bias = bias_track[j].gyro;
    s.ground_truth.push_back(TimedPose{frame.timestamp, st.pose});
    s.ground_truth_states.push_back(ts);

    for (const FeaturePoint& f : world.features) {
      if (!ground_mask[f.id]) continue;
      auto o = observe_feature(world, f, st.pose, rig, session_id, opt.max_feature_range);
      if (!o) continue;
      if (outliers > 0.0 && U(cam_rng) < outliers) {
        int wrong = static_cast<int>(U(cam_rng) * (n_features - 1));
        if (wrong >= f.id) ++wrong;
        o->landmark_id = wrong;
        o->left = Vec2(U(cam_rng) * rig.camera.width, U(cam_rng) * rig.camera.height);
        const double disparity = 2.0 + 28.0 * U(cam_rng);
        o->right = Vec2(std::max(0.0, o->left.x() - disparity), o->left.y());
      }
      if (pixel_sigma > 0.0) {
        o->left += pixel_sigma * Vec2(N(cam_rng), N(cam_rng));
        o->right += pixel_sigma * Vec2(N(cam_rng), N(cam_rng));
      }
      frame.observations.push_back(*o);
    }
    s.frames.push_back(std::move(frame));
  }

  // Laser scans.
  if (opt.with_laser) {
    std::mt19937_64 laser_rng = make_rng(seed, session_id, 3);
    const double range_sigma = opt.noise_free ? 0.0 : rig.laser.range_sigma;
    const int n_scans = static_cast<int>(std::floor(opt.duration * opt.scan_rate + 1e-9));
    for (int k = 0; k < n_scans; ++k) {
      const double t = k / opt.scan_rate;
      const int j = imu_index(t);
      LaserScan scan = simulate_scan(world, truth.states[j].pose, rig, session_id,
                                     truth.ideal[j].timestamp);
      if (range_sigma > 0.0) {
        for (Vec3& p : scan.points) {
          const double r = p.norm();
          p *= (r + range_sigma * N(laser_rng)) / r;
        }
      }
      s.scans.push_back(std::move(scan));
    }
  }
  return s;
}

}  // namespace crossloc
