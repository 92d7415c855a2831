#pragma once

#include <span>
#include <string>
#include <vector>

#include "crossloc/laser_map.hpp"
#include "crossloc/session.hpp"

namespace crossloc {

/// Map-building parameters. Counts left at -1 resolve from the session count:
/// static ceil(0.5 n), erosion ceil(0.7 n), expansion ceil(0.6 n).
struct MapFilterParams {
  double pixel_gate = 3.0;          // px
  double newness_radius = 0.6;      // m
  int static_threshold = -1;
  double erosion_radius = 0.3;      // m
  int erosion_count = -1;
  double expansion_radius = 0.2;    // m
  int expansion_count = -1;
  double likelihood_sigma = 0.1;    // m
  double gt_sigma = 0.05;           // m
  double ground_band = 0.15;        // m
  double voxel_size = 0.5;          // m, ground voxels
  double full_map_voxel = 0.1;      // m, unfiltered comparison map
  int normal_k = 10;
  double pose_tolerance = 0.05;     // s

  MapFilterParams resolved(int n_sessions) const;
};

/// Laser points that project within the pixel gate of a feature in the frame
/// taken with the scan, accumulated in the map frame. Labels are carried.
PointCloudMap vision_transform_session(const SessionData& session, const MapFilterParams& params,
                                       Execution exec = Execution::Parallel);

/// Sequential merge onto the first session. Each session queries a snapshot
/// of the base map taken before it starts. A session point farther than the
/// newness radius from the snapshot is inserted with count 1; otherwise every
/// snapshot point within the radius counts as re-observed, at most once per session.
PointCloudMap merge_sessions(std::span<const PointCloudMap> sessions, const MapFilterParams& params);

struct Partition {
  std::vector<MapPoint> static_points;
  std::vector<MapPoint> dynamic_points;
};

Partition classify_static(const PointCloudMap& merged, int static_threshold);

/// Static points with a dynamic neighbour closer than the erosion radius and a
/// count below the erosion count move to the dynamic set.
Partition erode_static(const Partition& in, const MapFilterParams& params,
                       Execution exec = Execution::Parallel);

/// Dynamic points with a static neighbour closer than the expansion radius and
/// a count above the expansion count move to the static set.
Partition expand_static(const Partition& in, const MapFilterParams& params,
                        Execution exec = Execution::Parallel);

/// Laser points within the height band of the ground, merged and reduced to
/// one centroid per voxel, flagged as ground with normal +z.
PointCloudMap extract_ground(std::span<const SessionData> sessions, const MapFilterParams& params);

/// Voxel centroids in deterministic (voxel key) order.
std::vector<MapPoint> voxel_downsample(std::span<const MapPoint> points, double voxel);

/// Union of the static set (normals re-estimated) and ground (normals forced).
PointCloudMap build_final_map(std::span<const MapPoint> static_points, const PointCloudMap& ground,
                              const MapFilterParams& params, Execution exec = Execution::Parallel);

/// Every laser return of one session, voxel-downsampled, with normals.
PointCloudMap build_full_map(const SessionData& session, const MapFilterParams& params,
                             Execution exec = Execution::Parallel);

struct StageCount {
  std::string stage;
  std::size_t points = 0;
};

struct MapBuildResult {
  PointCloudMap final_map;
  PointCloudMap merged;
  Partition partition;  // after erosion and expansion
  PointCloudMap ground;
  std::vector<StageCount> stages;
};

MapBuildResult build_map(std::span<const SessionData> sessions, const MapFilterParams& params,
                         Execution exec = Execution::Parallel);

/// `stage,points` CSV.
void save_stage_counts(const std::vector<StageCount>& stages, const std::string& path);

// Association diagnostics.

/// Distribution over candidate map points (indices into the map).
struct AssociationDistribution {
  std::vector<int> candidates;
  std::vector<double> probability;
  std::vector<double> log_probability;
};

/// Posterior over the k nearest map points of xi^-1(p_v) under the isotropic
/// likelihood N(p_v; xi * p_j, sigma) with a uniform prior. `xi` maps map
/// points into the frame of `p_v`. Throws Error(EmptyMap).
AssociationDistribution association_posterior(const Vec3& p_v, const PointCloudMap& map,
                                              const Pose& xi, double sigma, int k = 20);

/// The reference distribution over the same candidates at the true transform.
AssociationDistribution reference_distribution(const Vec3& p_v, const PointCloudMap& map,
                                               std::span<const int> candidates,
                                               const Pose& xi_true, double eta);

struct KldValue {
  double value = 0.0;
  bool infinite = false;  // a candidate with reference mass 0 and posterior > 0
};

/// KL(posterior || reference) with 0 log 0 = 0; candidates below 1e-12 in both
/// are dropped. Throws Error(MismatchedSupport) when the candidate lists differ.
KldValue association_kld(const AssociationDistribution& posterior,
                         const AssociationDistribution& reference);

/// log sum_j (1/|C|) N(p_v; xi p_j, sigma) over the candidates.
double association_log_likelihood(const Vec3& p_v, const PointCloudMap& map,
                                  std::span<const int> candidates, const Pose& xi, double sigma);

/// sum_j Q_j log((1/|C|) N(p_v; xi p_j, sigma) / Q_j); equals the log
/// likelihood when Q is the posterior.
double jensen_lower_bound(const Vec3& p_v, const PointCloudMap& map,
                          std::span<const int> candidates, const Pose& xi, double sigma,
                          std::span<const double> q);

}  // namespace crossloc
