// Serial reference vs OpenMP kernel for each parallel stage.
#include <benchmark/benchmark.h>

#include <random>

#include "crossloc/factors.hpp"
#include "crossloc/map_pipeline.hpp"
#include "crossloc/simulator.hpp"

using namespace crossloc;

namespace {

Execution exec_of(const benchmark::State& st) {
  return st.range(0) ? Execution::Parallel : Execution::Serial;
}

std::vector<MapPoint> random_points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-20.0, 20.0), h(0.0, 5.0);
  std::vector<MapPoint> pts(n);
  for (auto& p : pts) {
    p.position = Vec3(u(rng), u(rng), h(rng));
    p.observation_count = static_cast<int>(rng() % 9);
  }
  return pts;
}

const SessionData& session() {
  static const SessionData s = [] {
    SimulationOptions o;
    o.duration = 5.0;
    return generate_session(make_default_world(7), make_default_loop(), SensorRig::make_default(), 0,
                            1, o);
  }();
  return s;
}

void BM_Linearize(benchmark::State& st) {
  Problem p;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CameraModel cam;
  std::vector<BlockId> poses;
  for (int i = 0; i < 10; ++i) poses.push_back(p.add_pose_block(Pose(Rotation(), Vec3(0.1 * i, 0, 0))));
  for (int l = 0; l < 2000; ++l) {
    const BlockId b = p.add_vector_block(Vec3(5 * u(rng), 5 * u(rng), 10 + 5 * u(rng)), false, true);
    for (BlockId pose : poses) {
      auto f = std::make_unique<ReprojectionFactor>(pose, b, Vec2(320 + 50 * u(rng), 240 + 50 * u(rng)), cam);
      f->set_kernel(RobustKernel::cauchy(2.0));
      p.add_factor(std::move(f));
    }
  }
  std::vector<LinearizedFactor> out;
  for (auto _ : st) {
    linearize_factors(p, out, exec_of(st));
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_Linearize)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_KnnBatch(benchmark::State& st) {
  const PointCloudMap map(random_points(50000, 1));
  std::vector<Vec3> q;
  for (const auto& p : random_points(20000, 2)) q.push_back(p.position);
  for (auto _ : st) benchmark::DoNotOptimize(knn_batch(map, q, 10, exec_of(st)));
}
BENCHMARK(BM_KnnBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Normals(benchmark::State& st) {
  const PointCloudMap map(random_points(30000, 4));
  for (auto _ : st) benchmark::DoNotOptimize(estimate_normals(map, NormalParams{}, exec_of(st)));
}
BENCHMARK(BM_Normals)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ErodeExpand(benchmark::State& st) {
  const PointCloudMap merged(random_points(40000, 5));
  const Partition part = classify_static(merged, 4);
  const MapFilterParams params = MapFilterParams{}.resolved(8);
  for (auto _ : st) {
    const Partition e = erode_static(part, params, exec_of(st));
    benchmark::DoNotOptimize(expand_static(e, params, exec_of(st)));
  }
}
BENCHMARK(BM_ErodeExpand)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_VisionTransform(benchmark::State& st) {
  const SessionData& s = session();
  const MapFilterParams params;
  for (auto _ : st) benchmark::DoNotOptimize(vision_transform_session(s, params, exec_of(st)));
}
BENCHMARK(BM_VisionTransform)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
