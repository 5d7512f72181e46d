#pragma once

#include "rigid_accum/core.hpp"
#include "rigid_accum/segmenter.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace rigid_accum {

class MissingCentroid : public std::runtime_error {
public:
    explicit MissingCentroid(std::uint32_t instance);
    std::uint32_t instance;
};

/// Per-frame, per-point instance ids (0 = static or noise) with ids
/// contiguous in 1..clusters, numbered by first appearance in (frame, index)
/// order.
struct InstanceLabeling {
    FrameLabels labels;
    std::uint32_t clusters = 0;
};

/// Per-frame, per-point offset vectors; zero where no offset applies.
using OffsetField = std::vector<PointList>;

struct VoxelSet {
    /// Centroid of the members of each occupied voxel, in order of first member.
    PointList representatives;
    /// Member indices per voxel, ascending.
    std::vector<std::vector<std::size_t>> members;
    /// Voxel of every input point.
    std::vector<std::size_t> point_voxel;
};

VoxelSet voxel_downsample(std::span<const Vec3> points, double voxel);

/// delta = o_k - x for every point with a non-zero id. Throws MissingCentroid
/// when an id has no entry in `centroids`.
OffsetField compute_gt_offsets(const std::vector<PointList>& points, const FrameLabels& ids,
                               const std::map<std::uint32_t, Vec3>& centroids);

struct ClusterConfig {
    double eps = 0.75;
    std::size_t min_pts = 5;
    /// Voxel size for downsampling the ego-aligned points; 0 disables it.
    double voxel = 0.15;
};

/// DBSCAN labels for a point set: 0 for noise, clusters numbered 1..K by
/// their lowest member index. Neighbourhoods are closed balls and include
/// the query point itself.
std::vector<std::uint32_t> dbscan(std::span<const Vec3> points, double eps, std::size_t min_pts);

/// Clusters the deformed points x + delta of all masked points pooled over
/// frames. `points` are ego-aligned; `offsets` may be empty (zero offsets).
/// With voxelization on, voxels are built from the undeformed points and
/// each representative is displaced by the mean offset of its members.
InstanceLabeling cluster_spatiotemporal(const std::vector<PointList>& points, const FrameMasks& mask,
                                        const OffsetField& offsets, const ClusterConfig& config = {});

struct TrackerConfig {
    /// Gate radius is base_gate plus the predicted per-step displacement.
    double base_gate = 2.0;
    double process_noise = 0.5;
    double measurement_noise = 0.1;
    /// Tracks unmatched for more than this many consecutive frames are closed.
    int max_missed = 2;
};

/// Constant-velocity Kalman tracker over per-frame cluster centroids with
/// greedy nearest-neighbour association. `labels[k]` are per-frame cluster
/// ids (0 = none); frames are processed in sequence order.
InstanceLabeling kalman_track(const std::vector<PointList>& points, const FrameLabels& labels,
                              const TrackerConfig& config = {});

/// Renumbers non-zero ids by first appearance in (frame, index) order.
InstanceLabeling relabel_by_first_appearance(const FrameLabels& labels);

}  // namespace rigid_accum
