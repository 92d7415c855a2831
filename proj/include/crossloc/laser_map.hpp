#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crossloc/kdtree.hpp"
#include "crossloc/liegroup.hpp"

namespace crossloc {

struct MapPoint {
  Vec3 position = Vec3::Zero();
  std::optional<Vec3> normal;
  int observation_count = 1;
  bool is_ground = false;
  // Simulator element id carried for evaluation only; not serialized.
  int label = -1;
};

enum class FrameTag { Local, Map };

const char* to_string(FrameTag f);

/// Point cloud with an exact spatial index. Immutable after construction.
class PointCloudMap {
 public:
  PointCloudMap() = default;
  explicit PointCloudMap(std::vector<MapPoint> points, FrameTag frame = FrameTag::Map);

  const std::vector<MapPoint>& points() const { return points_; }
  const MapPoint& operator[](std::size_t i) const { return points_[i]; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  FrameTag frame() const { return frame_; }
  const KdTree<3>& index() const { return index_; }

  /// Exact k nearest neighbours; throws Error(EmptyMap).
  std::vector<Neighbor> knn(const Vec3& query, int k) const;

 private:
  std::vector<MapPoint> points_;
  FrameTag frame_ = FrameTag::Map;
  KdTree<3> index_;
};

std::vector<Neighbor> knn(const PointCloudMap& map, const Vec3& query, int k);

/// Batched queries; the OpenMP kernel and its serial reference agree exactly.
std::vector<std::vector<Neighbor>> knn_batch(const PointCloudMap& map,
                                             std::span<const Vec3> queries, int k,
                                             Execution exec = Execution::Parallel);

struct NormalParams {
  int neighborhood_k = 10;
  double max_eigen_ratio = 0.5;  // smallest / middle eigenvalue
};

/// Smallest-eigenvector normals, sign canonicalized toward +z (then +x, +y).
PointCloudMap estimate_normals(const PointCloudMap& map, const NormalParams& params = {},
                               Execution exec = Execution::Parallel);
PointCloudMap estimate_normals(const PointCloudMap& map, int neighborhood_k);

/// Normal for one neighbourhood, or nullopt when degenerate.
std::optional<Vec3> neighborhood_normal(std::span<const Vec3> pts, double max_eigen_ratio);
Vec3 canonicalize_normal(const Vec3& n);

/// All normals present and every pairwise line angle <= threshold.
bool normal_consistency(std::span<const MapPoint> neighbors, double angle_threshold);

/// Text map: header `crossloc-map v1 <frame>`, then `x y z [nx ny nz|-] obs ground`.
void save_map(const PointCloudMap& map, const std::string& path);
PointCloudMap load_map(const std::string& path);

}  // namespace crossloc
