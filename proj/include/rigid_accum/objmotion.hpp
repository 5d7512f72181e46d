#pragma once

#include "rigid_accum/assoc.hpp"
#include "rigid_accum/core.hpp"

#include <string>
#include <vector>

namespace rigid_accum {

class MissingTargetObservation : public std::runtime_error {
public:
    explicit MissingTargetObservation(std::uint32_t instance);
    std::uint32_t instance;
};

/// Pure translation moving the source centroid onto the target centroid.
/// Throws MissingTargetObservation (with instance 0) when the target is empty;
/// an empty source throws std::invalid_argument.
RigidTransform centroid_init(std::span<const Vec3> source, std::span<const Vec3> target);

struct IcpResult {
    RigidTransform transform;
    int iterations = 0;
    /// Mean gated pair distance of each evaluated transform, in order.
    std::vector<double> residuals;
    bool converged = false;
    /// True when no iteration produced a usable update and `transform` is the
    /// initial guess.
    bool fell_back = false;
};

struct IcpConfig {
    double max_corr_dist = 0.15;
    int max_iters = 30;
    double tolerance = 1e-6;
};

/// Point-to-point ICP. Each iteration pairs every transformed source point
/// with its nearest target point within the gate and solves Kabsch on the
/// pairs. Stops when the relative residual change drops below the tolerance
/// and returns the transform with the lowest residual.
IcpResult icp_refine(std::span<const Vec3> source, std::span<const Vec3> target, const RigidTransform& init,
                     const IcpConfig& config = {});

struct ObjectDiagnostic {
    std::uint32_t instance = 0;
    std::size_t frame = 0;
    std::string message;
};

struct ObjectMotionResult {
    ObjectMotionSet motions;
    std::vector<ObjectDiagnostic> diagnostics;
};

struct ObjectMotionConfig {
    IcpConfig icp;
    /// Skip the ICP round and keep centroid translations.
    bool centroid_only = false;
    unsigned threads = 1;
};

/// Two rounds per instance and source frame: centroid translation, then ICP
/// of the translated ego-aligned points against the target-frame instance
/// points. Instances absent from the target frame get identity transforms
/// and a diagnostic; fewer than 3 points on either side keeps round one.
ObjectMotionResult estimate_object_motions(const InstanceLabeling& labeling, const FrameSequence& seq,
                                           std::span<const RigidTransform> ego,
                                           const ObjectMotionConfig& config = {});

/// ICP refinement of an ego estimate using static points only.
IcpResult refine_ego_icp(std::span<const Vec3> source_static, std::span<const Vec3> target_static,
                         const RigidTransform& ego, double threshold, int max_iters = 30);

}  // namespace rigid_accum
