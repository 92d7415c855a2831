#include "crossloc/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "crossloc/jacobian_check.hpp"
#include "crossloc/runner.hpp"
#include "crossloc/text_io.hpp"

namespace fs = std::filesystem;

namespace crossloc {

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config,--params", c.config, "flat key = value config file");
  app->add_option("--set", c.sets, "key=value override (repeatable)");
}

RunConfig make_config(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty()) cfg.load(c.config);
  for (const std::string& s : c.sets) {
    std::string k, v;
    if (!split_assignment(s, k, v)) throw Error(ErrorCode::InvalidArgument, "--set expects key=value");
    cfg.set(k, v);
  }
  return cfg;
}

std::string session_dir_name(int id) {
  std::string n = std::to_string(id);
  if (n.size() < 2) n = "0" + n;
  return "session_" + n;
}

// A directory holding session_* subdirectories expands to them, sorted.
std::vector<std::string> expand_sessions(const std::vector<std::string>& inputs) {
  std::vector<std::string> out;
  for (const auto& in : inputs) {
    if (fs::exists(fs::path(in) / "imu.txt")) {
      out.push_back(in);
      continue;
    }
    if (!fs::is_directory(in)) throw Error(ErrorCode::IoError, "no session at " + in);
    std::vector<std::string> found;
    for (const auto& e : fs::directory_iterator(in))
      if (e.is_directory() && fs::exists(e.path() / "imu.txt")) found.push_back(e.path().string());
    std::sort(found.begin(), found.end());
    out.insert(out.end(), found.begin(), found.end());
  }
  if (out.empty()) throw Error(ErrorCode::IoError, "no sessions found");
  return out;
}

void print_report(const TrajectoryErrorReport& r) {
  std::cout << "poses " << r.poses.size() << "\nate_mean " << format_double(r.mean)
            << "\nate_median " << format_double(r.median) << "\nate_max " << format_double(r.max)
            << '\n';
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"crossloc: visual-inertial localization in prior laser maps"};
  app.require_subcommand(1);

  Common sim_c, map_c, loc_c, eval_c, jac_c, sweep_c;

  auto* sim = app.add_subcommand("simulate", "generate synthetic sessions");
  std::uint64_t sim_seed = 0;
  std::string sim_out = "sessions";
  int sim_count = -1, sim_first = 0;
  sim->add_option("--seed", sim_seed, "noise seed")->required();
  sim->add_option("--out", sim_out, "output directory");
  sim->add_option("--sessions", sim_count, "number of sessions (default sim.map_sessions)");
  sim->add_option("--first-id", sim_first, "id of the first session");
  add_common(sim, sim_c);

  auto* bm = app.add_subcommand("build-map", "filter multi-session laser data into a map");
  std::vector<std::string> bm_sessions;
  std::string bm_out = "map.txt", bm_stats, bm_full;
  bm->add_option("--sessions", bm_sessions, "session directories or a parent directory")->required();
  bm->add_option("--out", bm_out, "filtered map file");
  bm->add_option("--stats", bm_stats, "stage count CSV");
  bm->add_option("--full-map", bm_full, "also write the unfiltered map of the first session");
  add_common(bm, map_c);

  auto* loc = app.add_subcommand("localize", "run the estimator on one session");
  std::string loc_map, loc_session, loc_out = "trajectory.txt", loc_steps, loc_schedule;
  loc->add_option("--map", loc_map, "map file")->required();
  loc->add_option("--session", loc_session, "session directory")->required();
  loc->add_option("--out", loc_out, "trajectory file");
  loc->add_option("--steps", loc_steps, "per-step solver CSV");
  loc->add_option("--schedule", loc_schedule, "non_rigid | rigid | staged | m:n");
  add_common(loc, loc_c);

  auto* ev = app.add_subcommand("evaluate", "absolute trajectory error");
  std::string ev_est, ev_gt, ev_out, ev_hist;
  ev->add_option("--est", ev_est, "estimated trajectory")->required();
  ev->add_option("--gt", ev_gt, "ground-truth trajectory")->required();
  ev->add_option("--out", ev_out, "per-pose CSV");
  ev->add_option("--hist", ev_hist, "histogram CSV");
  add_common(ev, eval_c);

  auto* jac = app.add_subcommand("check-jacobians", "finite-difference Jacobian suites");
  std::uint64_t jac_seed = 1;
  int jac_trials = 1000;
  std::string jac_out;
  jac->add_option("--seed", jac_seed, "random seed");
  jac->add_option("--trials", jac_trials, "configurations per factor");
  jac->add_option("--out", jac_out, "CSV of suite results");
  add_common(jac, jac_c);

  auto* sw = app.add_subcommand("sweep", "schedule x map x seed localization sweep");
  std::vector<std::string> sw_maps;
  std::string sw_schedules = "1:1,1:3,1:5,rigid,non_rigid", sw_out = "sweep.csv";
  int sw_seeds = 10;
  std::uint64_t sw_seed0 = 1;
  sw->add_option("--map", sw_maps, "name=path (repeatable)")->required();
  sw->add_option("--schedules", sw_schedules, "comma-separated schedules");
  sw->add_option("--seeds", sw_seeds, "number of seeds");
  sw->add_option("--seed", sw_seed0, "first seed");
  sw->add_option("--out", sw_out, "sweep CSV");
  add_common(sw, sweep_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim->parsed()) {
      const RunConfig cfg = make_config(sim_c);
      const int n = sim_count < 0 ? cfg.map_sessions : sim_count;
      const WorldModel world = make_default_world(cfg.world_seed);
      const TrajectorySpec loop = make_default_loop();
      fs::create_directories(sim_out);
      for (int i = 0; i < n; ++i) {
        const int id = sim_first + i;
        const SessionData s = generate_session(world, loop, cfg.rig, id, sim_seed, cfg.sim);
        save_session(s, (fs::path(sim_out) / session_dir_name(id)).string());
      }
      std::cout << "wrote " << n << " sessions to " << sim_out << '\n';
      return kExitOk;
    }
    if (bm->parsed()) {
      const RunConfig cfg = make_config(map_c);
      std::vector<SessionData> sessions;
      for (const auto& dir : expand_sessions(bm_sessions)) sessions.push_back(load_session(dir));
      const MapBuildResult r = build_map(sessions, cfg.map, cfg.execution());
      save_map(r.final_map, bm_out);
      if (!bm_stats.empty()) save_stage_counts(r.stages, bm_stats);
      if (!bm_full.empty()) save_map(build_full_map(sessions.front(), cfg.map, cfg.execution()), bm_full);
      for (const auto& s : r.stages) std::cout << s.stage << ' ' << s.points << '\n';
      return kExitOk;
    }
    if (loc->parsed()) {
      RunConfig cfg = make_config(loc_c);
      if (!loc_schedule.empty()) cfg.set("est.schedule", loc_schedule);
      const PointCloudMap map = load_map(loc_map);
      const SessionData session = load_session(loc_session);
      const LocalizationResult r = run_localization(map, session, cfg, BaSchedule::parse(cfg.schedule));
      save_trajectory(r.trajectory, loc_out);
      if (!loc_steps.empty()) save_step_log(r.steps, loc_steps);
      std::cout << "keyframes " << r.keyframes << "\nsteps " << r.steps.size() << '\n';
      if (r.diverged) {
        std::cerr << "divergence detected\n";
        return kExitDiverged;
      }
      return kExitOk;
    }
    if (ev->parsed()) {
      const RunConfig cfg = make_config(eval_c);
      const TrajectoryErrorReport r = ate(load_trajectory(ev_est), load_trajectory(ev_gt), cfg.eval);
      if (!ev_out.empty()) save_pose_errors(r, ev_out);
      if (!ev_hist.empty()) save_histograms(r, ev_hist);
      print_report(r);
      return kExitOk;
    }
    if (jac->parsed()) {
      make_config(jac_c);
      const auto results = run_jacobian_suites(jac_seed, jac_trials);
      bool ok = true;
      std::ofstream csv;
      if (!jac_out.empty()) {
        csv.open(jac_out);
        if (!csv) throw Error(ErrorCode::IoError, "cannot write " + jac_out);
        csv << "factor,trials,max_error,pass\n";
      }
      for (const auto& r : results) {
        std::cout << r.factor << " trials=" << r.trials << " max_rel_error=" << format_double(r.max_error)
                  << (r.pass ? " ok" : " FAILED") << '\n';
        if (csv.is_open())
          csv << r.factor << ',' << r.trials << ',' << format_double(r.max_error) << ','
              << (r.pass ? 1 : 0) << '\n';
        ok = ok && r.pass;
      }
      return ok ? kExitOk : kExitFailure;
    }
    if (sw->parsed()) {
      const RunConfig cfg = make_config(sweep_c);
      std::vector<PointCloudMap> maps;
      std::vector<std::string> names;
      for (const auto& m : sw_maps) {
        std::string name, path;
        if (!split_assignment(m, name, path)) {
          path = m;
          name = fs::path(m).stem().string();
        }
        names.push_back(name);
        maps.push_back(load_map(path));
      }
      std::vector<NamedMap> named;
      for (std::size_t i = 0; i < maps.size(); ++i) named.push_back({names[i], &maps[i]});
      std::vector<std::string> schedules;
      std::string cur;
      for (char ch : sw_schedules + ",") {
        if (ch != ',') { cur += ch; continue; }
        if (!cur.empty()) schedules.push_back(cur);
        cur.clear();
      }
      std::vector<std::uint64_t> seeds;
      for (int i = 0; i < sw_seeds; ++i) seeds.push_back(sw_seed0 + static_cast<std::uint64_t>(i));
      const auto rows = run_sweep(named, schedules, seeds, cfg);
      save_sweep(rows, sw_out);
      std::cout << "wrote " << rows.size() << " rows to " << sw_out << '\n';
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.code()) {
      case ErrorCode::IoError:
      case ErrorCode::ParseError: return kExitIo;
      case ErrorCode::InvalidArgument: return kExitUsage;
      case ErrorCode::DivergenceDetected: return kExitDiverged;
      default: return kExitFailure;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace crossloc
