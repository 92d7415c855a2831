#include "crossloc/laser_map.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Eigenvalues>

#include "crossloc/text_io.hpp"

namespace crossloc {

const char* to_string(FrameTag f) { return f == FrameTag::Local ? "local" : "map"; }

PointCloudMap::PointCloudMap(std::vector<MapPoint> points, FrameTag frame)
    : points_(std::move(points)), frame_(frame) {
  std::vector<Vec3> pos;
  pos.reserve(points_.size());
  for (const MapPoint& p : points_) pos.push_back(p.position);
  index_.build(pos);
}

std::vector<Neighbor> PointCloudMap::knn(const Vec3& query, int k) const {
  if (points_.empty()) throw Error(ErrorCode::EmptyMap, "k-NN on an empty map");
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  return index_.knn(query, k);
}

std::vector<Neighbor> knn(const PointCloudMap& map, const Vec3& query, int k) {
  return map.knn(query, k);
}

std::vector<std::vector<Neighbor>> knn_batch(const PointCloudMap& map,
                                             std::span<const Vec3> queries, int k,
                                             Execution exec) {
  if (map.empty()) throw Error(ErrorCode::EmptyMap, "k-NN on an empty map");
  std::vector<std::vector<Neighbor>> out(queries.size());
  const long n = static_cast<long>(queries.size());
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) out[i] = map.index().knn(queries[i], k);
  } else {
    for (long i = 0; i < n; ++i) out[i] = map.index().knn(queries[i], k);
  }
  return out;
}

Vec3 canonicalize_normal(const Vec3& n) {
  constexpr double eps = 1e-9;
  double sign = 1.0;
  if (std::abs(n.z()) > eps) {
    sign = n.z() > 0.0 ? 1.0 : -1.0;
  } else if (std::abs(n.x()) > eps) {
    sign = n.x() > 0.0 ? 1.0 : -1.0;
  } else {
    sign = n.y() >= 0.0 ? 1.0 : -1.0;
  }
  return sign * n;
}

std::optional<Vec3> neighborhood_normal(std::span<const Vec3> pts, double max_eigen_ratio) {
  if (pts.size() < 3) return std::nullopt;
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : pts) cov += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(pts.size());
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 ev = es.eigenvalues();  // ascending
  if (ev[2] <= 0.0 || ev[1] <= 1e-12 * ev[2]) return std::nullopt;  // point or line
  if (ev[0] > max_eigen_ratio * ev[1]) return std::nullopt;
  return canonicalize_normal(es.eigenvectors().col(0).normalized());
}

namespace {

MapPoint with_normal(const PointCloudMap& map, std::size_t i, const NormalParams& params) {
  MapPoint p = map[i];
  const auto nn = map.index().knn(p.position, params.neighborhood_k);
  std::vector<Vec3> pts;
  pts.reserve(nn.size());
  for (const Neighbor& n : nn) pts.push_back(map[n.index].position);
  p.normal = neighborhood_normal(pts, params.max_eigen_ratio);
  return p;
}

}  // namespace

PointCloudMap estimate_normals(const PointCloudMap& map, const NormalParams& params,
                               Execution exec) {
  if (params.neighborhood_k < 3) {
    throw Error(ErrorCode::InvalidArgument, "neighborhood_k must be >= 3");
  }
  std::vector<MapPoint> out(map.size());
  const long n = static_cast<long>(map.size());
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) out[i] = with_normal(map, i, params);
  } else {
    for (long i = 0; i < n; ++i) out[i] = with_normal(map, i, params);
  }
  return PointCloudMap(std::move(out), map.frame());
}

PointCloudMap estimate_normals(const PointCloudMap& map, int neighborhood_k) {
  NormalParams p;
  p.neighborhood_k = neighborhood_k;
  return estimate_normals(map, p);
}

bool normal_consistency(std::span<const MapPoint> neighbors, double angle_threshold) {
  if (neighbors.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "normal consistency needs >= 2 neighbours");
  }
  // Normals are canonicalized, so compare lines rather than directions.
  const double min_cos = std::cos(angle_threshold);
  for (const MapPoint& p : neighbors) {
    if (!p.normal) return false;
  }
  for (std::size_t a = 0; a < neighbors.size(); ++a) {
    for (std::size_t b = a + 1; b < neighbors.size(); ++b) {
      if (std::abs(neighbors[a].normal->dot(*neighbors[b].normal)) < min_cos) return false;
    }
  }
  return true;
}

void save_map(const PointCloudMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "crossloc-map v1 " << to_string(map.frame()) << '\n';
  for (const MapPoint& p : map.points()) {
    out << format_double(p.position.x()) << ' ' << format_double(p.position.y()) << ' '
        << format_double(p.position.z()) << ' ';
    if (p.normal) {
      out << format_double(p.normal->x()) << ' ' << format_double(p.normal->y()) << ' '
          << format_double(p.normal->z());
    } else {
      out << '-';
    }
    out << ' ' << p.observation_count << ' ' << (p.is_ground ? 1 : 0) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

PointCloudMap load_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::string line;
  int line_no = 1;
  if (!std::getline(in, line)) throw ParseError(path, 1, "missing header");
  const auto header = split_tokens(line);
  if (header.size() != 3 || header[0] != "crossloc-map" || header[1] != "v1" ||
      (header[2] != "local" && header[2] != "map")) {
    throw ParseError(path, 1, "expected 'crossloc-map v1 <local|map>'");
  }
  const FrameTag frame = header[2] == "local" ? FrameTag::Local : FrameTag::Map;

  std::vector<MapPoint> points;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = split_tokens(line);
    if (tok.empty()) continue;
    MapPoint p;
    std::size_t next = 3;
    if (tok.size() == 5) {
      // no normal columns
    } else if (tok.size() == 6 && tok[3] == "-") {
      next = 4;
    } else if (tok.size() == 8) {
      Vec3 n(parse_double(tok[3], path, line_no), parse_double(tok[4], path, line_no),
             parse_double(tok[5], path, line_no));
      if (std::abs(n.norm() - 1.0) > 1e-6) throw ParseError(path, line_no, "normal is not unit");
      // Keep saved unit normals bit-exact; renormalize hand-written ones.
      p.normal = std::abs(n.norm() - 1.0) < 1e-12 ? n : n.normalized();
      next = 6;
    } else {
      throw ParseError(path, line_no, "expected 5, 6 or 8 columns");
    }
    for (int k = 0; k < 3; ++k) p.position[k] = parse_double(tok[k], path, line_no);
    p.observation_count = static_cast<int>(parse_long(tok[next], path, line_no));
    const long ground = parse_long(tok[next + 1], path, line_no);
    if (p.observation_count < 0 || (ground != 0 && ground != 1)) {
      throw ParseError(path, line_no, "bad count or ground flag");
    }
    p.is_ground = ground == 1;
    points.push_back(p);
  }
  return PointCloudMap(std::move(points), frame);
}

}  // namespace crossloc
