#include "crossloc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "crossloc/text_io.hpp"

namespace crossloc {

Histogram::Histogram(double lo_, double hi, double width_) : lo(lo_), width(width_) {
  if (!(width_ > 0.0) || !(hi > lo_)) throw Error(ErrorCode::InvalidArgument, "bad histogram range");
  counts.assign(static_cast<std::size_t>(std::llround((hi - lo_) / width_)), 0);
}

void Histogram::add(double v) {
  const double f = std::floor((v - lo) / width);
  const double top = static_cast<double>(counts.size()) - 1.0;
  ++counts[static_cast<std::size_t>(std::clamp(f, 0.0, top))];
}

std::size_t Histogram::total() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

TrajectoryErrorReport ate(const std::vector<TimedPose>& estimate,
                          const std::vector<TimedPose>& truth, const EvaluationOptions& options) {
  constexpr double deg = 180.0 / std::numbers::pi;
  TrajectoryErrorReport r;
  r.lateral_histogram = Histogram(-options.lateral_range, options.lateral_range, options.lateral_bin);
  r.heading_histogram =
      Histogram(-options.heading_range_deg, options.heading_range_deg, options.heading_bin_deg);
  for (const TimedPose& e : estimate) {
    const int j = nearest_index(truth, e.timestamp, options.tolerance);
    if (j < 0) continue;
    const Pose& g = truth[static_cast<std::size_t>(j)].pose;
    const Vec3 d = e.pose.t() - g.t();
    PoseError pe;
    pe.timestamp = e.timestamp;
    pe.ate = d.norm();
    pe.lateral = (g.R().transpose() * d).y();
    pe.heading = wrap_angle(e.pose.rotation().yaw() - g.rotation().yaw());
    r.lateral_histogram.add(pe.lateral);
    r.heading_histogram.add(pe.heading * deg);
    r.poses.push_back(pe);
  }
  if (r.poses.empty()) throw Error(ErrorCode::NoOverlap, "no estimate pose matches the truth timestamps");

  std::vector<double> v;
  for (const auto& p : r.poses) v.push_back(p.ate);
  double sum = 0.0;
  for (double x : v) sum += x;
  r.mean = sum / static_cast<double>(v.size());
  r.max = *std::max_element(v.begin(), v.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  r.median = (n % 2) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return r;
}

void save_pose_errors(const TrajectoryErrorReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "t,ate,lateral,heading\n";
  for (const auto& p : r.poses)
    out << format_double(p.timestamp) << ',' << format_double(p.ate) << ','
        << format_double(p.lateral) << ',' << format_double(p.heading) << '\n';
}

void save_histograms(const TrajectoryErrorReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "kind,bin_start,bin_end,count\n";
  auto dump = [&](const char* kind, const Histogram& h) {
    for (std::size_t i = 0; i < h.counts.size(); ++i)
      out << kind << ',' << format_double(h.bin_start(i)) << ',' << format_double(h.bin_start(i + 1))
          << ',' << h.counts[i] << '\n';
  };
  dump("lateral_m", r.lateral_histogram);
  dump("heading_deg", r.heading_histogram);
}

}  // namespace crossloc
