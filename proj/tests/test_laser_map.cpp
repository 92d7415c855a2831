#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>

#include "crossloc/kdtree.hpp"
#include "crossloc/laser_map.hpp"
#include "oracles.hpp"

using namespace crossloc;

namespace {

PointCloudMap cloud(const std::vector<Vec3>& pts) {
  std::vector<MapPoint> m;
  for (const Vec3& p : pts) m.push_back(MapPoint{p});
  return PointCloudMap(std::move(m));
}

std::filesystem::path scratch(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("crossloc_map_" + name);
  std::filesystem::create_directories(d);
  return d;
}

double line_gap(const Vec3& a, const Vec3& b) { return std::min((a - b).norm(), (a + b).norm()); }

}  // namespace

TEST_SUITE("laser_map") {

TEST_CASE("knn basics") {
  const PointCloudMap one = cloud({Vec3(1, 2, 3)});
  const auto r = knn(one, Vec3(0, 0, 0), 1);
  REQUIRE(r.size() == 1);
  CHECK(r[0].index == 0);
  CHECK(r[0].distance == doctest::Approx(std::sqrt(14.0)));
  CHECK(knn(one, Vec3(0, 0, 0), 5).size() == 1);

  const PointCloudMap m = cloud({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)});
  CHECK(knn(m, Vec3(1, 0, 0), 2)[0].index == 1);
  CHECK(knn(m, Vec3(1, 0, 0), 2)[0].distance == 0.0);

  CHECK_THROWS_AS(knn(PointCloudMap(), Vec3::Zero(), 1), Error);
  CHECK_THROWS_AS(knn(m, Vec3::Zero(), 0), Error);
}

TEST_CASE("ties resolve to insertion order") {
  const PointCloudMap m = cloud({Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 5)});
  const auto r = knn(m, Vec3::Zero(), 3);
  CHECK(r[0].index == 0);
  CHECK(r[1].index == 1);
  CHECK(r[2].index == 2);
  // Duplicated positions as well.
  const PointCloudMap d = cloud(std::vector<Vec3>(20, Vec3(1, 1, 1)));
  const auto rd = knn(d, Vec3::Zero(), 20);
  for (int i = 0; i < 20; ++i) CHECK(rd[i].index == i);
}

TEST_CASE("knn equals brute force on 10^4 points") {
  oracle::Rng rng(1);
  std::vector<Vec3> pts;
  for (int i = 0; i < 10000; ++i) pts.push_back(rng.vec3(20.0));
  const PointCloudMap m = cloud(pts);
  for (int q = 0; q < 100; ++q) {
    const Vec3 x = rng.vec3(22.0);
    const auto got = knn(m, x, 5);
    const auto ref = oracle::brute_knn(pts, x, 5);
    REQUIRE(got.size() == ref.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].index == ref[i].index);
      CHECK(got[i].distance == ref[i].distance);
    }
  }
}

TEST_CASE("index exactness over 100 randomized trials") {
  oracle::Rng rng(2);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.integer(1, 3000);
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i) {
      // Grid-snapped coordinates provoke exact ties.
      Vec3 p = rng.vec3(10.0);
      if (trial % 2) p = (p * 2).array().round() / 2;
      pts.push_back(p);
    }
    const PointCloudMap m = cloud(pts);
    for (int k : {1, 3, 5, 10}) {
      const Vec3 q = rng.vec3(11.0);
      const auto got = knn(m, q, k);
      const auto ref = oracle::brute_knn(pts, q, k);
      if (got.size() != ref.size()) {
        ++mismatches;
        continue;
      }
      for (std::size_t i = 0; i < got.size(); ++i)
        if (got[i].index != ref[i].index || got[i].distance != ref[i].distance) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("2-D tree") {
  oracle::Rng rng(3);
  std::vector<Vec2> pts;
  for (int i = 0; i < 500; ++i) pts.push_back(Vec2(rng.uniform(0, 640), rng.uniform(0, 480)));
  const KdTree<2> t(pts);
  for (int q = 0; q < 50; ++q) {
    const Vec2 x(rng.uniform(0, 640), rng.uniform(0, 480));
    double best = 1e18;
    int bi = -1;
    for (int i = 0; i < 500; ++i) {
      const double d = (pts[i] - x).squaredNorm();
      if (d < best) {
        best = d;
        bi = i;
      }
    }
    CHECK(t.nearest(x).index == bi);
  }
}

TEST_CASE("normals on a plane, a pole and a sphere") {
  oracle::Rng rng(4);
  std::vector<Vec3> plane;
  for (int i = 0; i < 400; ++i) plane.push_back(Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), 0));
  for (const MapPoint& p : estimate_normals(cloud(plane), 10).points()) {
    REQUIRE(p.normal);
    CHECK((*p.normal - Vec3(0, 0, 1)).norm() < 1e-6);
  }

  std::vector<Vec3> pole;
  for (int i = 0; i < 300; ++i) {
    // Golden-angle helix: every neighbourhood wraps the pole evenly.
    const double a = 2.399963229728653 * i;
    pole.push_back(Vec3(0.02 * std::cos(a), 0.02 * std::sin(a), 4.0 * i / 300));
  }
  int absent = 0;
  for (const MapPoint& p : estimate_normals(cloud(pole), 10).points()) absent += p.normal ? 0 : 1;
  CHECK(absent == 300);

  std::vector<Vec3> sphere;
  for (int i = 0; i < 5000; ++i) sphere.push_back(rng.direction());
  const PointCloudMap s = estimate_normals(cloud(sphere), 12);
  int good = 0;
  for (const MapPoint& p : s.points()) {
    if (p.normal && std::abs(p.normal->dot(p.position.normalized())) > std::cos(5.0 * std::numbers::pi / 180))
      ++good;
  }
  CHECK(good >= 0.99 * 5000);
  for (const MapPoint& p : s.points())
    if (p.normal) CHECK(std::abs(p.normal->norm() - 1.0) < 1e-9);
}

TEST_CASE("normal sign canonicalization") {
  CHECK(canonicalize_normal(Vec3(0, 0, -1)) == Vec3(0, 0, 1));
  CHECK(canonicalize_normal(Vec3(-1, 0, 0)) == Vec3(1, 0, 0));
  CHECK(canonicalize_normal(Vec3(0, -1, 0)) == Vec3(0, 1, 0));
  CHECK(canonicalize_normal(Vec3(0.6, 0, -0.8)) == Vec3(-0.6, 0, 0.8));
}

TEST_CASE("normal estimation is rotation-equivariant") {
  oracle::Rng rng(5);
  std::vector<Vec3> pts;
  for (int i = 0; i < 300; ++i) pts.push_back(Vec3(rng.uniform(0, 3), rng.uniform(0, 3), 0.01 * rng.normal()));
  for (int i = 0; i < 300; ++i) pts.push_back(Vec3(5 + 0.01 * rng.normal(), rng.uniform(0, 3), rng.uniform(0, 3)));
  const Mat3 R = oracle::rot_exp(Vec3(0.4, -0.7, 1.1));
  std::vector<Vec3> rotated;
  for (const Vec3& p : pts) rotated.push_back(R * p);
  const PointCloudMap a = estimate_normals(cloud(pts), 10), b = estimate_normals(cloud(rotated), 10);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    REQUIRE(a[i].normal.has_value() == b[i].normal.has_value());
    if (a[i].normal) CHECK(line_gap(*b[i].normal, R * *a[i].normal) < 1e-6);
  }
}

TEST_CASE("normal consistency") {
  auto with = [](std::vector<Vec3> ns) {
    std::vector<MapPoint> out;
    for (const Vec3& n : ns) out.push_back(MapPoint{Vec3::Zero(), n.normalized()});
    return out;
  };
  const auto same = with({Vec3(0, 0, 1), Vec3(0, 0, 1), Vec3(0, 0, 1)});
  CHECK(normal_consistency(same, 1e-6));
  CHECK(!normal_consistency(with({Vec3(0, 0, 1), Vec3(1, 0, 0)}), 30.0 * std::numbers::pi / 180));

  std::vector<MapPoint> missing = same;
  missing[1].normal.reset();
  CHECK(!normal_consistency(missing, 1.0));
  CHECK_THROWS_AS(normal_consistency(std::span<const MapPoint>(same.data(), 1), 1.0), Error);

  oracle::Rng rng(6);
  const double deg = std::numbers::pi / 180;
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 axis = rng.direction();
    const Vec3 u = axis.cross(rng.direction()).normalized(), v = axis.cross(u);
    std::vector<Vec3> ns;
    for (int i = 0; i < 5; ++i) {
      const double t = rng.uniform(0, 5 * deg), a = rng.uniform(0, 2 * std::numbers::pi);
      ns.push_back(std::cos(t) * axis + std::sin(t) * (std::cos(a) * u + std::sin(a) * v));
    }
    const auto pts = with(ns);
    bool brute = true;
    for (std::size_t i = 0; i < ns.size(); ++i)
      for (std::size_t j = i + 1; j < ns.size(); ++j)
        brute = brute && std::acos(std::min(1.0, std::abs(ns[i].dot(ns[j])))) <= 15 * deg;
    CHECK(brute);
    CHECK(normal_consistency(pts, 15 * deg) == brute);
    // A tighter threshold agrees with brute force too.
    bool tight = true;
    for (std::size_t i = 0; i < ns.size(); ++i)
      for (std::size_t j = i + 1; j < ns.size(); ++j)
        tight = tight && std::acos(std::min(1.0, std::abs(ns[i].dot(ns[j])))) <= 4 * deg;
    CHECK(normal_consistency(pts, 4 * deg) == tight);
  }
}

TEST_CASE("map file round trip") {
  oracle::Rng rng(7);
  std::vector<MapPoint> pts;
  for (int i = 0; i < 200; ++i) {
    MapPoint p;
    p.position = rng.vec3(100.0);
    if (i % 3) p.normal = canonicalize_normal(rng.direction());
    p.observation_count = rng.integer(0, 9);
    p.is_ground = i % 5 == 0;
    pts.push_back(p);
  }
  const PointCloudMap m(pts, FrameTag::Local);
  const std::string path = (scratch("rt") / "m.txt").string();
  save_map(m, path);
  const PointCloudMap back = load_map(path);
  CHECK(back.frame() == FrameTag::Local);
  REQUIRE(back.size() == m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(back[i].position == m[i].position);
    CHECK(back[i].normal.has_value() == m[i].normal.has_value());
    if (m[i].normal) CHECK(*back[i].normal == *m[i].normal);
    CHECK(back[i].observation_count == m[i].observation_count);
    CHECK(back[i].is_ground == m[i].is_ground);
  }
}

TEST_CASE("map file optional normals and errors") {
  const auto dir = scratch("err");
  const std::string path = (dir / "m.txt").string();
  {
    std::ofstream f(path);
    f << "crossloc-map v1 map\n1 2 3 4 0\n1 2 3 - 2 1\n0 0 0 0 0 1 3 0\n";
  }
  const PointCloudMap m = load_map(path);
  REQUIRE(m.size() == 3);
  CHECK(!m[0].normal);
  CHECK(m[0].observation_count == 4);
  CHECK(!m[1].normal);
  CHECK(m[1].is_ground);
  CHECK(m[2].normal);

  {
    std::ofstream f(path);
    f << "crossloc-map v1 map\n";
    for (int i = 0; i < 5; ++i) f << "1 2 3 - 1 0\n";
    f << "1 2 three - 1 0\n";
  }
  try {
    load_map(path);
    CHECK(false);
  } catch (const ParseError& e) {
    CHECK(e.line() == 7);
  }
  {
    std::ofstream f(path);
    f << "not a map\n";
  }
  CHECK_THROWS_AS(load_map(path), ParseError);
  CHECK_THROWS_AS(load_map((dir / "missing.txt").string()), Error);
}

}
