#include "rigid_accum/objmotion.hpp"

#include "rigid_accum/parallel.hpp"
#include "rigid_accum/spatial_index.hpp"

#include <cmath>
#include <limits>

namespace rigid_accum {

MissingTargetObservation::MissingTargetObservation(std::uint32_t id)
    : std::runtime_error("instance " + std::to_string(id) + " is not observed in the target frame"),
      instance(id) {}

namespace {

Vec3 mean_of(std::span<const Vec3> pts) {
    Vec3 acc = Vec3::Zero();
    for (const auto& p : pts) {
        acc += p;
    }
    return acc / static_cast<double>(pts.size());
}

}  // namespace

RigidTransform centroid_init(std::span<const Vec3> source, std::span<const Vec3> target) {
    if (target.empty()) {
        throw MissingTargetObservation(0);
    }
    if (source.empty()) {
        throw std::invalid_argument("centroid_init: empty source points");
    }
    return RigidTransform::from_translation(mean_of(target) - mean_of(source));
}

IcpResult icp_refine(std::span<const Vec3> source, std::span<const Vec3> target, const RigidTransform& init,
                     const IcpConfig& config) {
    IcpResult out;
    out.transform = init;
    out.fell_back = true;
    if (source.size() < 3 || target.size() < 3 || !(config.max_corr_dist > 0.0)) {
        return out;
    }
    const SpatialHash index(target, config.max_corr_dist);
    RigidTransform current = init;
    double best = std::numeric_limits<double>::infinity();
    double previous = std::numeric_limits<double>::infinity();
    PointList src;
    PointList tgt;
    for (int it = 0; it < config.max_iters; ++it) {
        src.clear();
        tgt.clear();
        double sum = 0.0;
        for (const auto& p : source) {
            const auto nn = index.nearest(current.apply(p), config.max_corr_dist);
            if (nn) {
                src.push_back(p);
                tgt.push_back(index.point(nn->index));
                sum += nn->distance;
            }
        }
        if (src.size() < 3) {
            break;
        }
        const double residual = sum / static_cast<double>(src.size());
        out.residuals.push_back(residual);
        if (residual < best) {
            best = residual;
            out.transform = current;
            out.fell_back = false;
        }
        if (residual < 1e-12 ||
            (std::isfinite(previous) && std::abs(previous - residual) <= config.tolerance * previous)) {
            out.converged = true;
            break;
        }
        previous = residual;
        try {
            current = kabsch(src, tgt);
        } catch (const DegenerateConfiguration&) {
            break;
        }
        out.iterations = it + 1;
    }
    return out;
}

ObjectMotionResult estimate_object_motions(const InstanceLabeling& labeling, const FrameSequence& seq,
                                           std::span<const RigidTransform> ego,
                                           const ObjectMotionConfig& config) {
    if (labeling.labels.size() != seq.size() || ego.size() != seq.size()) {
        throw std::invalid_argument("estimate_object_motions: frame counts differ");
    }
    const std::size_t n_frames = seq.size();
    // Ego-aligned points of each instance per frame.
    std::map<std::uint32_t, std::vector<PointList>> members;
    for (std::size_t k = 0; k < n_frames; ++k) {
        const Frame& f = seq.frames[k];
        if (labeling.labels[k].size() != f.size()) {
            throw std::invalid_argument("estimate_object_motions: label count does not match frame");
        }
        for (std::size_t i = 0; i < f.size(); ++i) {
            const std::uint32_t id = labeling.labels[k][i];
            if (id == 0) {
                continue;
            }
            auto& per_frame = members[id];
            per_frame.resize(n_frames);
            per_frame[k].push_back(ego[k].apply(f.points[i]));
        }
    }
    std::vector<std::uint32_t> ids;
    for (const auto& [id, pf] : members) {
        ids.push_back(id);
    }
    std::vector<std::vector<std::optional<RigidTransform>>> motions(ids.size());
    std::vector<std::vector<ObjectDiagnostic>> diags(ids.size());
    parallel_for(ids.size(), config.threads, [&](std::size_t j) {
        const std::uint32_t id = ids[j];
        const auto& pf = members.at(id);
        auto& out = motions[j];
        out.assign(n_frames, std::nullopt);
        const PointList& target = pf[0];
        for (std::size_t k = 0; k < n_frames; ++k) {
            if (pf[k].empty()) {
                continue;
            }
            if (k == 0) {
                out[k] = RigidTransform();
                continue;
            }
            if (target.empty()) {
                out[k] = RigidTransform();
                diags[j].push_back({id, k, "no target observation; identity used"});
                continue;
            }
            const RigidTransform init = centroid_init(pf[k], target);
            if (config.centroid_only) {
                out[k] = init;
                continue;
            }
            if (pf[k].size() < 3 || target.size() < 3) {
                out[k] = init;
                diags[j].push_back({id, k, "fewer than 3 points; centroid translation kept"});
                continue;
            }
            const PointList moved = init.apply(pf[k]);
            const IcpResult icp = icp_refine(moved, target, RigidTransform(), config.icp);
            if (icp.fell_back) {
                diags[j].push_back({id, k, "no ICP pairs within gate; centroid translation kept"});
            }
            out[k] = compose(icp.transform, init);
        }
    });
    ObjectMotionResult result;
    for (std::size_t j = 0; j < ids.size(); ++j) {
        result.motions.motions[ids[j]] = std::move(motions[j]);
        result.diagnostics.insert(result.diagnostics.end(), diags[j].begin(), diags[j].end());
    }
    return result;
}

IcpResult refine_ego_icp(std::span<const Vec3> source_static, std::span<const Vec3> target_static,
                         const RigidTransform& ego, double threshold, int max_iters) {
    IcpConfig cfg;
    cfg.max_corr_dist = threshold;
    cfg.max_iters = max_iters;
    return icp_refine(source_static, target_static, ego, cfg);
}

}  // namespace rigid_accum
