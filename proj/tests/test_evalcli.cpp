#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>

#include "crossloc/cli.hpp"
#include "crossloc/config.hpp"
#include "crossloc/evaluation.hpp"
#include "crossloc/runner.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace crossloc;
namespace fs = std::filesystem;

namespace {

std::vector<TimedPose> wiggly_truth(int n) {
  std::vector<TimedPose> out;
  for (int i = 0; i < n; ++i) {
    const double t = 0.1 * i;
    out.push_back({t, Pose(Rotation::about_z(0.3 * std::sin(t)), Vec3(t, std::cos(t), 0.2))});
  }
  return out;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "crossloc");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string first_line(const fs::path& p) {
  std::ifstream f(p);
  std::string line;
  std::getline(f, line);
  return line;
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("crossloc_evalcli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_SUITE("evalcli") {

TEST_CASE("ate of identical trajectories is zero") {
  const auto t = wiggly_truth(50);
  const TrajectoryErrorReport r = ate(t, t);
  CHECK(r.poses.size() == 50);
  CHECK(r.mean == 0.0);
  CHECK(r.max == 0.0);
  for (const auto& p : r.poses) CHECK(p.heading == 0.0);
}

TEST_CASE("forward offset is not lateral") {
  const auto truth = wiggly_truth(40);
  std::vector<TimedPose> est;
  for (const auto& g : truth) est.push_back({g.timestamp, Pose(g.pose.rotation(), g.pose * Vec3(1, 0, 0))});
  const TrajectoryErrorReport r = ate(est, truth);
  CHECK(r.mean == doctest::Approx(1.0).epsilon(1e-12));
  double lateral = 0.0;
  for (const auto& p : r.poses) lateral += std::abs(p.lateral);
  CHECK(lateral / r.poses.size() < 1e-12);
}

TEST_CASE("ate matches brute-force recomputation") {
  oracle::Rng rng(21);
  const auto truth = wiggly_truth(200);
  std::vector<TimedPose> est;
  for (const auto& g : truth) {
    // Jitter the timestamp inside the association tolerance.
    est.push_back({g.timestamp + rng.uniform(-0.02, 0.02),
                   Pose(Rotation::about_z(rng.uniform(-0.1, 0.1)) * g.pose.rotation(), g.pose.t() + rng.vec3(0.3))});
  }
  const TrajectoryErrorReport r = ate(est, truth);
  REQUIRE(r.poses.size() == truth.size());
  double sum = 0.0, mx = 0.0;
  std::vector<double> v;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const Vec3 d = est[i].pose.t() - truth[i].pose.t();
    v.push_back(d.norm());
    sum += d.norm();
    mx = std::max(mx, d.norm());
    CHECK(r.poses[i].lateral == doctest::Approx(truth[i].pose.R().col(1).dot(d)));
    const double yaw_e = std::atan2(est[i].pose.R()(1, 0), est[i].pose.R()(0, 0));
    const double yaw_g = std::atan2(truth[i].pose.R()(1, 0), truth[i].pose.R()(0, 0));
    CHECK(r.poses[i].heading == doctest::Approx(std::remainder(yaw_e - yaw_g, 2 * std::numbers::pi)));
  }
  std::sort(v.begin(), v.end());
  CHECK(r.mean == doctest::Approx(sum / v.size()).epsilon(1e-12));
  CHECK(r.max == mx);
  CHECK(r.median == doctest::Approx(0.5 * (v[99] + v[100])));
  CHECK(r.mean <= r.max);
  CHECK(r.lateral_histogram.total() == r.poses.size());
  CHECK(r.heading_histogram.total() == r.poses.size());
  CHECK(r.lateral_histogram.counts.size() == 40);
  CHECK(r.heading_histogram.counts.size() == 40);
}

TEST_CASE("heading error is antisymmetric") {
  oracle::Rng rng(3);
  const auto truth = wiggly_truth(100);
  std::vector<TimedPose> est;
  for (const auto& g : truth)
    est.push_back({g.timestamp, Pose(Rotation::about_z(rng.uniform(-3.1, 3.1)) * g.pose.rotation(), g.pose.t())});
  const auto ab = ate(est, truth), ba = ate(truth, est);
  for (std::size_t i = 0; i < ab.poses.size(); ++i) {
    const double s = ab.poses[i].heading + ba.poses[i].heading;
    CHECK(std::abs(wrap_angle(s)) < 1e-12);
  }
}

TEST_CASE("histograms clamp outliers into the edge bins") {
  Histogram h(-1.0, 1.0, 0.05);
  for (double v : {-5.0, -1.0, 0.0, 0.999, 1.0, 7.0}) h.add(v);
  CHECK(h.total() == 6);
  CHECK(h.counts.front() == 2);
  CHECK(h.counts.back() == 3);
  CHECK(h.counts[20] == 1);
  CHECK_THROWS_AS(Histogram(1.0, 1.0, 0.1), Error);
}

TEST_CASE("ate without overlap throws") {
  auto a = wiggly_truth(5), b = wiggly_truth(5);
  for (auto& p : b) p.timestamp += 100.0;
  try {
    (void)ate(a, b);
    FAIL("expected NoOverlap");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoOverlap);
  }
}

TEST_CASE("csv headers are fixed") {
  const fs::path d = scratch("csv");
  const auto t = wiggly_truth(10);
  const auto r = ate(t, t);
  save_pose_errors(r, (d / "e.csv").string());
  save_histograms(r, (d / "h.csv").string());
  save_step_log({}, (d / "s.csv").string());
  save_sweep({}, (d / "w.csv").string());
  save_stage_counts({}, (d / "m.csv").string());
  CHECK(first_line(d / "e.csv") == "t,ate,lateral,heading");
  CHECK(first_line(d / "h.csv") == "kind,bin_start,bin_end,count");
  CHECK(first_line(d / "s.csv") ==
        "counter,t,mode,constraints,plane,active_landmarks,rejected,iterations,icp_iterations,"
        "initial_cost,final_cost,mean_residual,anchor_x,anchor_y,anchor_z,anchor_yaw");
  CHECK(first_line(d / "w.csv") == "schedule,map,seed,keyframes,diverged,ate_mean,ate_median,ate_max");
  CHECK(first_line(d / "m.csv") == "stage,points");
}

TEST_CASE("config rejects unknown keys and round-trips") {
  RunConfig c;
  CHECK_THROWS_AS(c.set("map.no_such_key", "1"), Error);
  CHECK_THROWS_AS(c.set("map.voxel_size", "abc"), Error);
  CHECK_THROWS_AS(c.set("sim.noise_free", "maybe"), Error);
  c.set("map.voxel_size", "0.25");
  c.set("sim.noise_free", "true");
  c.set("est.schedule", "1:5");
  const fs::path d = scratch("cfg");
  c.save((d / "c.cfg").string());
  RunConfig back;
  back.load((d / "c.cfg").string());
  for (const auto& k : RunConfig::keys()) CHECK_MESSAGE(back.get(k) == c.get(k), k);
  CHECK(back.map.voxel_size == 0.25);
  CHECK(back.sim.noise_free);

  const RunConfig defaults;
  for (const auto& k : RunConfig::keys()) CHECK(!defaults.get(k).empty());

  std::ofstream(d / "bad.cfg") << "map.voxel_size = 1\nbogus.key = 2\n";
  CHECK_THROWS(back.load((d / "bad.cfg").string()));
}

TEST_CASE("noise-free localization from the exact anchor") {
  const auto& scene = fixture::truth_scene();
  RunConfig cfg;
  cfg.rig = scene.session.rig;
  cfg.init.translation = Vec3::Zero();
  cfg.init.yaw_deg = 0.0;
  const LocalizationResult r =
      run_localization(scene.feature_map, scene.session, cfg, BaSchedule::parse("non_rigid"));
  REQUIRE(!r.diverged);
  const auto rep = ate(r.trajectory, scene.session.ground_truth);
  CHECK(rep.mean < 1e-3);
}

TEST_CASE("cli exit codes") {
  const fs::path d = scratch("cli");
  const auto t = wiggly_truth(30);
  save_trajectory(t, (d / "a.txt").string());

  CHECK(cli({}) == kExitUsage);
  CHECK(cli({"evaluate", "--est", (d / "a.txt").string(), "--gt", (d / "a.txt").string(), "--bogus"}) == kExitUsage);
  CHECK(cli({"simulate", "--out", (d / "s").string()}) == kExitUsage);  // --seed is mandatory
  CHECK(cli({"evaluate", "--est", (d / "a.txt").string(), "--gt", (d / "a.txt").string(),
             "--set", "nope=1"}) == kExitUsage);
  CHECK(cli({"evaluate", "--est", (d / "missing.txt").string(), "--gt", (d / "a.txt").string()}) == kExitIo);

  std::ofstream(d / "broken.txt") << "0 1 2\n";
  CHECK(cli({"evaluate", "--est", (d / "broken.txt").string(), "--gt", (d / "a.txt").string()}) == kExitIo);

  CHECK(cli({"evaluate", "--est", (d / "a.txt").string(), "--gt", (d / "a.txt").string(), "--out",
             (d / "e.csv").string(), "--hist", (d / "h.csv").string()}) == kExitOk);
  const auto r = ate(t, t);
  std::ifstream e(d / "e.csv");
  std::string line;
  int rows = -1;
  while (std::getline(e, line)) ++rows;
  CHECK(rows == 30);
  CHECK(r.mean == 0.0);

  // A map 50 m away from the query drives the divergence check.
  std::vector<MapPoint> far;
  for (int i = 0; i < 50; ++i) far.push_back({Vec3(500.0 + i, 500.0, 0.0), std::nullopt});
  save_map(PointCloudMap(far), (d / "far.txt").string());
  CHECK(cli({"simulate", "--seed", "3", "--sessions", "1", "--first-id", "100", "--out", (d / "q").string(),
             "--set", "sim.duration=4", "--set", "sim.with_laser=false"}) == kExitOk);
  CHECK(cli({"localize", "--map", (d / "far.txt").string(), "--session", (d / "q" / "session_100").string(),
             "--out", (d / "t.txt").string(), "--set", "init.dx=50"}) == kExitDiverged);
}

}
