#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "crossloc/session.hpp"
#include "crossloc/text_io.hpp"

namespace fs = std::filesystem;

namespace crossloc {

SensorRig SensorRig::make_default() {
  SensorRig rig;
  Mat3 R_bc;
  // Camera axes (x right, y down, z forward) expressed in the body frame.
  R_bc << 0.0, 0.0, 1.0,
          -1.0, 0.0, 0.0,
          0.0, -1.0, 0.0;
  rig.camera.body_T_camera = Pose(Rotation(R_bc), Vec3(0.2, 0.0, 0.5));
  rig.body_T_laser = Pose(Rotation(), Vec3(0.2, 0.0, 0.8));
  return rig;
}

CameraModel SensorRig::right_camera() const {
  CameraModel right = camera;
  right.body_T_camera = camera.body_T_camera * Pose(Rotation(), Vec3(baseline, 0.0, 0.0));
  return right;
}

int nearest_index(const std::vector<TimedPose>& traj, double t, double tolerance) {
  auto it = std::lower_bound(traj.begin(), traj.end(), t,
                             [](const TimedPose& p, double v) { return p.timestamp < v; });
  int best = -1;
  double best_dt = tolerance;
  auto consider = [&](std::vector<TimedPose>::const_iterator c) {
    const double dt = std::abs(c->timestamp - t);
    if (dt <= best_dt) {
      // Prefer the earlier pose on an exact tie.
      if (best < 0 || dt < best_dt) best = static_cast<int>(c - traj.begin());
      best_dt = dt;
    }
  };
  if (it != traj.begin()) consider(std::prev(it));
  if (it != traj.end()) consider(it);
  return best;
}

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  return out;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + p.string());
  return in;
}

std::string numbered(int i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d%s", i, ext);
  return buf;
}

void write_vec(std::ostream& out, const Vec3& v) {
  out << format_double(v.x()) << ' ' << format_double(v.y()) << ' ' << format_double(v.z());
}

std::string pose_text(const Pose& p) {
  const Eigen::Quaterniond q = p.rotation().quaternion();
  std::string s;
  for (double v : {p.t().x(), p.t().y(), p.t().z(), q.x(), q.y(), q.z(), q.w()}) {
    if (!s.empty()) s += ' ';
    s += format_double(v);
  }
  return s;
}

Pose parse_pose(const std::vector<std::string_view>& tok, std::size_t first, const std::string& path,
                int line) {
  double v[7];
  for (int k = 0; k < 7; ++k) v[k] = parse_double(tok[first + k], path, line);
  const Eigen::Quaterniond q(v[6], v[3], v[4], v[5]);
  if (std::abs(q.norm() - 1.0) > 1e-6) throw ParseError(path, line, "quaternion is not unit");
  return Pose(Rotation(q), Vec3(v[0], v[1], v[2]));
}

// Two-column index file: `index t`.
std::vector<double> load_index(const fs::path& p) {
  std::ifstream in = open_in(p);
  std::vector<double> times;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = split_tokens(line);
    if (tok.empty()) continue;
    if (tok.size() != 2) throw ParseError(p.string(), line_no, "expected 'index t'");
    if (parse_long(tok[0], p.string(), line_no) != static_cast<long>(times.size())) {
      throw ParseError(p.string(), line_no, "indices must be consecutive from 0");
    }
    times.push_back(parse_double(tok[1], p.string(), line_no));
  }
  return times;
}

}  // namespace

void save_trajectory(const std::vector<TimedPose>& traj, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "# t tx ty tz qx qy qz qw\n";
  for (const TimedPose& p : traj) out << format_double(p.timestamp) << ' ' << pose_text(p.pose) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

std::vector<TimedPose> load_trajectory(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<TimedPose> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = split_tokens(line);
    if (tok.empty()) continue;
    if (tok.size() != 8) throw ParseError(path, line_no, "expected 8 columns");
    TimedPose p{parse_double(tok[0], path, line_no), parse_pose(tok, 1, path, line_no)};
    if (!out.empty() && !(p.timestamp > out.back().timestamp)) {
      throw ParseError(path, line_no, "timestamps must be strictly increasing");
    }
    out.push_back(p);
  }
  return out;
}

void save_rig(const SensorRig& rig, const std::string& path) {
  std::ofstream out = open_out(path);
  const CameraModel& c = rig.camera;
  out << "fx = " << format_double(c.fx) << "\nfy = " << format_double(c.fy)
      << "\ncx = " << format_double(c.cx) << "\ncy = " << format_double(c.cy)
      << "\nwidth = " << c.width << "\nheight = " << c.height
      << "\nbody_T_camera = " << pose_text(c.body_T_camera)
      << "\nbaseline = " << format_double(rig.baseline)
      << "\ngyro_noise_density = " << format_double(rig.imu.gyro_noise_density)
      << "\naccel_noise_density = " << format_double(rig.imu.accel_noise_density)
      << "\ngyro_bias_walk = " << format_double(rig.imu.gyro_bias_walk)
      << "\naccel_bias_walk = " << format_double(rig.imu.accel_bias_walk)
      << "\nlaser_channels = " << rig.laser.channels
      << "\nlaser_min_elevation_deg = " << format_double(rig.laser.min_elevation_deg)
      << "\nlaser_max_elevation_deg = " << format_double(rig.laser.max_elevation_deg)
      << "\nlaser_azimuth_step_deg = " << format_double(rig.laser.azimuth_step_deg)
      << "\nlaser_max_range = " << format_double(rig.laser.max_range)
      << "\nlaser_range_sigma = " << format_double(rig.laser.range_sigma)
      << "\nbody_T_laser = " << pose_text(rig.body_T_laser)
      << "\nbody_height = " << format_double(rig.body_height)
      << "\npixel_sigma = " << format_double(rig.pixel_sigma)
      << "\ngravity = ";
  write_vec(out, rig.gravity);
  out << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

SensorRig load_rig(const std::string& path) {
  const auto kv = read_key_values(path);
  SensorRig rig;
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError(path, 0, std::string("missing key '") + key + "'");
    return it->second;
  };
  auto num = [&](const char* key) { return parse_double(get(key), path, 0); };
  auto pose = [&](const char* key) {
    const auto tok = split_tokens(get(key));
    if (tok.size() != 7) throw ParseError(path, 0, std::string("bad pose for ") + key);
    return parse_pose(tok, 0, path, 0);
  };
  rig.camera.fx = num("fx");
  rig.camera.fy = num("fy");
  rig.camera.cx = num("cx");
  rig.camera.cy = num("cy");
  rig.camera.width = static_cast<int>(parse_long(get("width"), path, 0));
  rig.camera.height = static_cast<int>(parse_long(get("height"), path, 0));
  rig.camera.body_T_camera = pose("body_T_camera");
  rig.baseline = num("baseline");
  rig.imu.gyro_noise_density = num("gyro_noise_density");
  rig.imu.accel_noise_density = num("accel_noise_density");
  rig.imu.gyro_bias_walk = num("gyro_bias_walk");
  rig.imu.accel_bias_walk = num("accel_bias_walk");
  rig.laser.channels = static_cast<int>(parse_long(get("laser_channels"), path, 0));
  rig.laser.min_elevation_deg = num("laser_min_elevation_deg");
  rig.laser.max_elevation_deg = num("laser_max_elevation_deg");
  rig.laser.azimuth_step_deg = num("laser_azimuth_step_deg");
  rig.laser.max_range = num("laser_max_range");
  rig.laser.range_sigma = num("laser_range_sigma");
  rig.body_T_laser = pose("body_T_laser");
  rig.body_height = num("body_height");
  rig.pixel_sigma = num("pixel_sigma");
  const auto g = split_tokens(get("gravity"));
  if (g.size() != 3) throw ParseError(path, 0, "gravity needs 3 values");
  for (int k = 0; k < 3; ++k) rig.gravity[k] = parse_double(g[k], path, 0);
  if (!rig.camera.valid() || !rig.imu.valid() || rig.baseline <= 0.0) {
    throw Error(ErrorCode::InvalidArgument, "rig parameters out of range in " + path);
  }
  return rig;
}

void save_session(const SessionData& s, const std::string& dir) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "frames", ec);
  fs::create_directories(root / "scans", ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir);

  save_imu_stream((root / "imu.txt").string(), s.imu);
  save_rig(s.rig, (root / "rig.cfg").string());
  save_trajectory(s.ground_truth, (root / "gt.txt").string());

  {
    std::ofstream out = open_out(root / "gt_state.txt");
    out << "# t vx vy vz bax bay baz bgx bgy bgz\n";
    for (const TimedState& ts : s.ground_truth_states) {
      out << format_double(ts.timestamp) << ' ';
      write_vec(out, ts.state.velocity);
      out << ' ';
      write_vec(out, ts.state.accel_bias);
      out << ' ';
      write_vec(out, ts.state.gyro_bias);
      out << '\n';
    }
  }
  {
    std::ofstream index = open_out(root / "frames.txt");
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
      index << i << ' ' << format_double(s.frames[i].timestamp) << '\n';
      std::ofstream out = open_out(root / "frames" / numbered(static_cast<int>(i), ".obs"));
      for (const StereoObservation& o : s.frames[i].observations) {
        out << o.landmark_id << ' ' << format_double(o.left.x()) << ' '
            << format_double(o.left.y()) << ' ' << format_double(o.right.x()) << ' '
            << format_double(o.right.y()) << '\n';
      }
    }
  }
  {
    std::ofstream index = open_out(root / "scans.txt");
    for (std::size_t i = 0; i < s.scans.size(); ++i) {
      index << i << ' ' << format_double(s.scans[i].timestamp) << '\n';
      std::ofstream out = open_out(root / "scans" / numbered(static_cast<int>(i), ".txt"));
      const LaserScan& scan = s.scans[i];
      for (std::size_t k = 0; k < scan.points.size(); ++k) {
        write_vec(out, scan.points[k]);
        out << ' ' << scan.labels[k] << '\n';
      }
    }
  }
}

SessionData load_session(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw Error(ErrorCode::IoError, "not a session directory: " + dir);
  SessionData s;
  s.rig = load_rig((root / "rig.cfg").string());
  s.imu = load_imu_stream((root / "imu.txt").string());
  s.ground_truth = load_trajectory((root / "gt.txt").string());

  if (fs::exists(root / "gt_state.txt")) {
    const std::string path = (root / "gt_state.txt").string();
    std::ifstream in = open_in(path);
    std::string line;
    int line_no = 0;
    std::size_t i = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto tok = split_tokens(line);
      if (tok.empty()) continue;
      if (tok.size() != 10) throw ParseError(path, line_no, "expected 10 columns");
      TimedState ts;
      ts.timestamp = parse_double(tok[0], path, line_no);
      for (int k = 0; k < 3; ++k) {
        ts.state.velocity[k] = parse_double(tok[1 + k], path, line_no);
        ts.state.accel_bias[k] = parse_double(tok[4 + k], path, line_no);
        ts.state.gyro_bias[k] = parse_double(tok[7 + k], path, line_no);
      }
      if (i < s.ground_truth.size()) ts.state.pose = s.ground_truth[i].pose;
      ++i;
      s.ground_truth_states.push_back(ts);
    }
  }

  const std::vector<double> frame_times = load_index(root / "frames.txt");
  for (std::size_t i = 0; i < frame_times.size(); ++i) {
    const fs::path p = root / "frames" / numbered(static_cast<int>(i), ".obs");
    const std::string path = p.string();
    std::ifstream in = open_in(p);
    CameraFrame f;
    f.timestamp = frame_times[i];
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto tok = split_tokens(line);
      if (tok.empty()) continue;
      if (tok.size() != 5) throw ParseError(path, line_no, "expected 'lm_id ul vl ur vr'");
      StereoObservation o;
      o.landmark_id = static_cast<int>(parse_long(tok[0], path, line_no));
      o.left = Vec2(parse_double(tok[1], path, line_no), parse_double(tok[2], path, line_no));
      o.right = Vec2(parse_double(tok[3], path, line_no), parse_double(tok[4], path, line_no));
      f.observations.push_back(o);
    }
    s.frames.push_back(std::move(f));
  }

  const std::vector<double> scan_times = load_index(root / "scans.txt");
  for (std::size_t i = 0; i < scan_times.size(); ++i) {
    const fs::path p = root / "scans" / numbered(static_cast<int>(i), ".txt");
    const std::string path = p.string();
    std::ifstream in = open_in(p);
    LaserScan scan;
    scan.timestamp = scan_times[i];
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto tok = split_tokens(line);
      if (tok.empty()) continue;
      if (tok.size() != 4) throw ParseError(path, line_no, "expected 'x y z label'");
      scan.points.emplace_back(parse_double(tok[0], path, line_no),
                               parse_double(tok[1], path, line_no),
                               parse_double(tok[2], path, line_no));
      scan.labels.push_back(static_cast<int>(parse_long(tok[3], path, line_no)));
    }
    s.scans.push_back(std::move(scan));
  }
  return s;
}

}  // namespace crossloc
