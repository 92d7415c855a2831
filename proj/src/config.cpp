#include "crossloc/config.hpp"

#include <fstream>
#include <variant>

#include "crossloc/text_io.hpp"

namespace crossloc {

std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view text = line;
    if (auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    if (split_tokens(text).empty()) continue;
    std::string key, value;
    if (!split_assignment(text, key, value) || key.empty())
      throw ParseError(path, lineno, "expected key = value");
    if (!out.emplace(key, value).second) throw ParseError(path, lineno, "duplicate key '" + key + "'");
  }
  return out;
}

bool split_assignment(std::string_view text, std::string& key, std::string& value) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) return false;
  auto trim = [](std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
  };
  key = trim(text.substr(0, eq));
  value = trim(text.substr(eq + 1));
  return true;
}

namespace {

using Ref = std::variant<double*, int*, bool*, std::string*, std::uint64_t*>;

struct Entry {
  const char* key;
  Ref (*ref)(RunConfig&);
};

// clang-format off
const Entry kTable[] = {
  {"sim.world_seed",            [](RunConfig& c) -> Ref { return &c.world_seed; }},
  {"sim.map_sessions",          [](RunConfig& c) -> Ref { return &c.map_sessions; }},
  {"sim.duration",              [](RunConfig& c) -> Ref { return &c.sim.duration; }},
  {"sim.imu_rate",              [](RunConfig& c) -> Ref { return &c.sim.imu_rate; }},
  {"sim.frame_rate",            [](RunConfig& c) -> Ref { return &c.sim.frame_rate; }},
  {"sim.scan_rate",             [](RunConfig& c) -> Ref { return &c.sim.scan_rate; }},
  {"sim.outlier_fraction",      [](RunConfig& c) -> Ref { return &c.sim.outlier_fraction; }},
  {"sim.max_feature_range",     [](RunConfig& c) -> Ref { return &c.sim.max_feature_range; }},
  {"sim.initial_gyro_bias_sigma",  [](RunConfig& c) -> Ref { return &c.sim.initial_gyro_bias_sigma; }},
  {"sim.initial_accel_bias_sigma", [](RunConfig& c) -> Ref { return &c.sim.initial_accel_bias_sigma; }},
  {"sim.noise_free",            [](RunConfig& c) -> Ref { return &c.sim.noise_free; }},
  {"sim.with_laser",            [](RunConfig& c) -> Ref { return &c.sim.with_laser; }},
  {"rig.baseline",              [](RunConfig& c) -> Ref { return &c.rig.baseline; }},
  {"rig.pixel_sigma",           [](RunConfig& c) -> Ref { return &c.rig.pixel_sigma; }},
  {"rig.gyro_noise_density",    [](RunConfig& c) -> Ref { return &c.rig.imu.gyro_noise_density; }},
  {"rig.accel_noise_density",   [](RunConfig& c) -> Ref { return &c.rig.imu.accel_noise_density; }},
  {"rig.gyro_bias_walk",        [](RunConfig& c) -> Ref { return &c.rig.imu.gyro_bias_walk; }},
  {"rig.accel_bias_walk",       [](RunConfig& c) -> Ref { return &c.rig.imu.accel_bias_walk; }},
  {"rig.laser_range_sigma",     [](RunConfig& c) -> Ref { return &c.rig.laser.range_sigma; }},
  {"map.pixel_gate",            [](RunConfig& c) -> Ref { return &c.map.pixel_gate; }},
  {"map.newness_radius",        [](RunConfig& c) -> Ref { return &c.map.newness_radius; }},
  {"map.static_threshold",      [](RunConfig& c) -> Ref { return &c.map.static_threshold; }},
  {"map.erosion_radius",        [](RunConfig& c) -> Ref { return &c.map.erosion_radius; }},
  {"map.erosion_count",         [](RunConfig& c) -> Ref { return &c.map.erosion_count; }},
  {"map.expansion_radius",      [](RunConfig& c) -> Ref { return &c.map.expansion_radius; }},
  {"map.expansion_count",       [](RunConfig& c) -> Ref { return &c.map.expansion_count; }},
  {"map.likelihood_sigma",      [](RunConfig& c) -> Ref { return &c.map.likelihood_sigma; }},
  {"map.gt_sigma",              [](RunConfig& c) -> Ref { return &c.map.gt_sigma; }},
  {"map.ground_band",           [](RunConfig& c) -> Ref { return &c.map.ground_band; }},
  {"map.voxel_size",            [](RunConfig& c) -> Ref { return &c.map.voxel_size; }},
  {"map.full_map_voxel",        [](RunConfig& c) -> Ref { return &c.map.full_map_voxel; }},
  {"map.normal_k",              [](RunConfig& c) -> Ref { return &c.map.normal_k; }},
  {"map.pose_tolerance",        [](RunConfig& c) -> Ref { return &c.map.pose_tolerance; }},
  {"est.window_capacity",       [](RunConfig& c) -> Ref { return &c.est.window_capacity; }},
  {"est.keyframe_translation",  [](RunConfig& c) -> Ref { return &c.est.keyframe.translation; }},
  {"est.keyframe_rotation_deg", [](RunConfig& c) -> Ref { return &c.est.keyframe.rotation_deg; }},
  {"est.keyframe_min_overlap",  [](RunConfig& c) -> Ref { return &c.est.keyframe.min_overlap; }},
  {"est.assoc_k",               [](RunConfig& c) -> Ref { return &c.est.association.k; }},
  {"est.assoc_gate",            [](RunConfig& c) -> Ref { return &c.est.association.gate; }},
  {"est.assoc_normal_angle_deg",[](RunConfig& c) -> Ref { return &c.est.association.normal_angle_deg; }},
  {"est.assoc_map_sigma",       [](RunConfig& c) -> Ref { return &c.est.association.map_sigma; }},
  {"est.min_tracked",           [](RunConfig& c) -> Ref { return &c.est.min_tracked; }},
  {"est.min_disparity",         [](RunConfig& c) -> Ref { return &c.est.min_disparity; }},
  {"est.max_disparity",         [](RunConfig& c) -> Ref { return &c.est.max_disparity; }},
  {"est.epipolar_gate",         [](RunConfig& c) -> Ref { return &c.est.epipolar_gate; }},
  {"est.max_depth",             [](RunConfig& c) -> Ref { return &c.est.max_depth; }},
  {"est.outlier_threshold",     [](RunConfig& c) -> Ref { return &c.est.outlier_threshold; }},
  {"est.cauchy_pixel",          [](RunConfig& c) -> Ref { return &c.est.cauchy_pixel; }},
  {"est.cauchy_metric",         [](RunConfig& c) -> Ref { return &c.est.cauchy_metric; }},
  {"est.prior_rotation_sigma",  [](RunConfig& c) -> Ref { return &c.est.prior_rotation_sigma; }},
  {"est.prior_translation_sigma", [](RunConfig& c) -> Ref { return &c.est.prior_translation_sigma; }},
  {"est.icp_max_iterations",    [](RunConfig& c) -> Ref { return &c.est.icp_max_iterations; }},
  {"est.icp_tolerance",         [](RunConfig& c) -> Ref { return &c.est.icp_tolerance; }},
  {"est.solver_max_iter",       [](RunConfig& c) -> Ref { return &c.est.solver.max_iter; }},
  {"est.solver_initial_lambda", [](RunConfig& c) -> Ref { return &c.est.solver.initial_lambda; }},
  {"est.divergence_steps",      [](RunConfig& c) -> Ref { return &c.est.divergence_steps; }},
  {"est.divergence_factor",     [](RunConfig& c) -> Ref { return &c.est.divergence_factor; }},
  {"est.divergence_floor",      [](RunConfig& c) -> Ref { return &c.est.divergence_floor; }},
  {"est.schedule",              [](RunConfig& c) -> Ref { return &c.schedule; }},
  {"init.dx",                   [](RunConfig& c) -> Ref { return &c.init.translation.x(); }},
  {"init.dy",                   [](RunConfig& c) -> Ref { return &c.init.translation.y(); }},
  {"init.dz",                   [](RunConfig& c) -> Ref { return &c.init.translation.z(); }},
  {"init.dyaw_deg",             [](RunConfig& c) -> Ref { return &c.init.yaw_deg; }},
  {"eval.tolerance",            [](RunConfig& c) -> Ref { return &c.eval.tolerance; }},
  {"eval.lateral_range",        [](RunConfig& c) -> Ref { return &c.eval.lateral_range; }},
  {"eval.lateral_bin",          [](RunConfig& c) -> Ref { return &c.eval.lateral_bin; }},
  {"eval.heading_range_deg",    [](RunConfig& c) -> Ref { return &c.eval.heading_range_deg; }},
  {"eval.heading_bin_deg",      [](RunConfig& c) -> Ref { return &c.eval.heading_bin_deg; }},
  {"exec.parallel",             [](RunConfig& c) -> Ref { return &c.parallel; }},
};
// clang-format on

const Entry& find(const std::string& key) {
  for (const Entry& e : kTable)
    if (key == e.key) return e;
  throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const Entry& e = find(key);
  const Ref ref = e.ref(*this);
  try {
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, double>) {
            *p = parse_double(value, key, 0);
          } else if constexpr (std::is_same_v<T, int>) {
            *p = static_cast<int>(parse_long(value, key, 0));
          } else if constexpr (std::is_same_v<T, bool>) {
            if (value == "true" || value == "1") *p = true;
            else if (value == "false" || value == "0") *p = false;
            else throw ParseError(key, 0, "expected true/false");
          } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            const long v = parse_long(value, key, 0);
            if (v < 0) throw ParseError(key, 0, "expected a non-negative integer");
            *p = static_cast<std::uint64_t>(v);
          } else {
            *p = value;
          }
        },
        ref);
  } catch (const ParseError& err) {
    throw Error(ErrorCode::InvalidArgument, "bad value '" + value + "' for " + key);
  }
  if (key == "est.schedule") BaSchedule::parse(schedule);
}

std::string RunConfig::get(const std::string& key) const {
  const Ref ref = find(key).ref(const_cast<RunConfig&>(*this));
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, double>) return format_double(*p);
        else if constexpr (std::is_same_v<T, bool>) return *p ? "true" : "false";
        else if constexpr (std::is_same_v<T, std::string>) return *p;
        else return std::to_string(*p);
      },
      ref);
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const Entry& e : kTable) out.emplace_back(e.key);
  return out;
}

void RunConfig::load(const std::string& path) {
  for (const auto& [k, v] : read_key_values(path)) set(k, v);
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  for (const Entry& e : kTable) out << e.key << " = " << get(e.key) << '\n';
}

}  // namespace crossloc
