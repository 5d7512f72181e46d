#pragma once

#include "rigid_accum/assoc.hpp"
#include "rigid_accum/core.hpp"
#include "rigid_accum/grid.hpp"
#include "rigid_accum/matcher.hpp"
#include "rigid_accum/objmotion.hpp"
#include "rigid_accum/segmenter.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace rigid_accum {

class PipelineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PipelineConfig {
    /// "waymo" or "nuscenes"; selects v_max and the ICP gates.
    std::string profile = "waymo";
    GridSpec grid;
    std::size_t n_ego = 1024;
    double fg_threshold = 0.5;
    int sinkhorn_iters = 5;
    double slack_cost = 0.2;
    double beta = 50.0;
    int rounds = 4;
    double v_max = 30.0;
    double icp_ego = 0.1;
    double icp_object = 0.15;
    int icp_iters = 30;
    /// Ego ICP on static points after matching.
    bool ego_icp = true;
    /// Frame-to-previous estimates composed up to the target.
    bool chained = false;
    /// Direct mode only: frames are matched in order, each starting from a
    /// constant-velocity extrapolation of the two previous estimates.
    bool warm_start = true;
    /// "dbscan" (spatio-temporal clustering) or "kalman" (per-frame DBSCAN
    /// plus the tracker).
    std::string association = "dbscan";
    ClusterConfig cluster;
    TrackerConfig tracker;
    ResidualConfig residual;
    /// Oracle inputs: features need ground-truth flow; segmentation and
    /// offsets read the frames' label arrays.
    bool oracle_features = false;
    bool oracle_segmentation = false;
    bool oracle_offsets = false;
    std::uint64_t seed = 0;
    /// 0 = all cores.
    unsigned threads = 0;

    static PipelineConfig for_profile(const std::string& profile);
    /// Throws std::invalid_argument on non-positive sizes or unknown names.
    void validate() const;
};

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct PipelineDiagnostics {
    std::vector<StageTiming> timings;
    std::vector<EgoDiagnostics> ego;
    /// Per source frame; empty entry for the target.
    std::vector<std::optional<IcpResult>> ego_icp;
    std::vector<ObjectDiagnostic> objects;
    std::vector<std::string> messages;
    std::size_t grid_cache_hits = 0;
};

struct AccumulationResult {
    FlowField flow;
    std::vector<RigidTransform> ego;
    ObjectMotionSet objects;
    SegmentationScores segmentation;
    InstanceLabeling instances;
    PipelineDiagnostics diagnostics;
};

/// Per-frame pillar grids shared between runs over growing sequences. Keyed
/// by frame index, featurizer and a hash of the frame's points, so a stale
/// entry is never reused. Safe for concurrent use.
class GridCache {
public:
    std::shared_ptr<const PillarGrid> find(const std::string& key) const;
    void store(const std::string& key, std::shared_ptr<const PillarGrid> grid);
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const PillarGrid>> grids_;
};

/// Ground truth consumed by oracle toggles.
struct OracleInputs {
    std::optional<FlowField> flow;
};

/// Features, ego motion, segmentation, association, object motion, flow
/// composition. Per-instance failures fall back to centroid-only and then
/// ego-only motion with a diagnostic; only whole-stage failures throw
/// PipelineError.
AccumulationResult run(const FrameSequence& seq, const PipelineConfig& config, const OracleInputs& oracle = {},
                       GridCache* cache = nullptr);

struct AccumulatedCloud {
    /// Target points first, then each source frame displaced by its flow.
    /// `instance` holds the estimated instance id, foreground/dynamic the
    /// thresholded scores.
    Frame cloud;
    std::vector<std::uint32_t> source_frame;
};

AccumulatedCloud accumulate_points(const FrameSequence& seq, const AccumulationResult& result);
/// Raw concatenation displaced by an arbitrary flow field.
AccumulatedCloud accumulate_points(const FrameSequence& seq, const FlowField& flow);

/// Unconstrained baseline: every source point moves onto its nearest
/// target-frame point.
FlowField nearest_neighbor_flow(const FrameSequence& seq, unsigned threads = 1);

}  // namespace rigid_accum
