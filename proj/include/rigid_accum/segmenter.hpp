#pragma once

#include "rigid_accum/core.hpp"

#include <cstdint>
#include <vector>

namespace rigid_accum {

/// Per-frame, per-point scores in [0, 1]. Dynamic scores are 0 wherever the
/// foreground score is below `fg_threshold`.
struct SegmentationScores {
    std::vector<std::vector<double>> foreground;
    std::vector<std::vector<double>> dynamic;
    double fg_threshold = 0.5;
    double dynamic_threshold = 0.5;

    bool is_foreground(std::size_t frame, std::size_t i) const {
        return foreground[frame][i] >= fg_threshold;
    }
    /// Ties at the threshold count as static.
    bool is_dynamic(std::size_t frame, std::size_t i) const {
        return dynamic[frame][i] > dynamic_threshold;
    }
};

using FrameMasks = std::vector<std::vector<std::uint8_t>>;

/// A point of source frame k is dynamic when |V_gt - V_ego| / elapsed(k)
/// exceeds `speed` (strict). Target-frame points have no flow of their own;
/// they take the flag of their instance, which is dynamic when any of its
/// source points is. Instance ids come from the frames' label arrays.
FrameMasks label_dynamic_oracle(const FrameSequence& seq, const FlowField& gt_flow,
                                std::span<const RigidTransform> ego, double speed = 0.5);

struct ResidualConfig {
    double radius = 2.0;
    /// Speed threshold in m/s.
    double threshold = 0.5;
    double temperature = 10.0;
    double fg_threshold = 0.5;
    unsigned threads = 1;
};

/// Geometric motion classifier. Every frame is aligned to the target by its
/// ego transform; a foreground point is scored sigmoid(T * (d / elapsed - v))
/// with d the distance to the nearest point of the reference frame (the
/// target for source frames, frame 1 for the target). No neighbour within
/// the radius gives 1. `fg` may be empty, meaning every point is foreground.
SegmentationScores segment_motion_residual(const FrameSequence& seq, std::span<const RigidTransform> ego,
                                           const std::vector<std::vector<double>>& fg,
                                           const ResidualConfig& config = {});

/// Inclusive point-in-box test against every box.
std::vector<std::uint8_t> segment_foreground_oracle(const Frame& frame, std::span<const OrientedBox> boxes);

/// Scores built from the frames' own label arrays (0 or 1).
SegmentationScores scores_from_labels(const FrameSequence& seq);

}  // namespace rigid_accum
