#include "rigid_accum/segmenter.hpp"

#include "rigid_accum/parallel.hpp"
#include "rigid_accum/spatial_index.hpp"

#include <cmath>
#include <set>

namespace rigid_accum {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void check_ego(const FrameSequence& seq, std::span<const RigidTransform> ego) {
    if (ego.size() != seq.size()) {
        throw std::invalid_argument("ego transform count does not match the sequence");
    }
}

}  // namespace

FrameMasks label_dynamic_oracle(const FrameSequence& seq, const FlowField& gt_flow,
                                std::span<const RigidTransform> ego, double speed) {
    check_ego(seq, ego);
    if (gt_flow.size() != seq.size()) {
        throw std::invalid_argument("label_dynamic_oracle: flow frame count does not match");
    }
    FrameMasks out(seq.size());
    std::set<std::uint32_t> moving;
    for (std::size_t k = 1; k < seq.size(); ++k) {
        const Frame& f = seq.frames[k];
        if (gt_flow.frames[k].size() != f.size()) {
            throw std::invalid_argument("label_dynamic_oracle: flow size does not match frame");
        }
        const double elapsed = seq.elapsed(k);
        out[k].assign(f.size(), 0);
        for (std::size_t i = 0; i < f.size(); ++i) {
            const Vec3 v_ego = ego[k].apply(f.points[i]) - f.points[i];
            const double r = (gt_flow.frames[k][i] - v_ego).norm();
            if (r / elapsed > speed) {
                out[k][i] = 1;
                if (f.instance.size() == f.size() && f.instance[i] != 0) {
                    moving.insert(f.instance[i]);
                }
            }
        }
    }
    if (!seq.frames.empty()) {
        const Frame& t = seq.frames.front();
        out[0].assign(t.size(), 0);
        if (t.instance.size() == t.size()) {
            for (std::size_t i = 0; i < t.size(); ++i) {
                out[0][i] = t.instance[i] != 0 && moving.count(t.instance[i]) ? 1 : 0;
            }
        }
    }
    return out;
}

SegmentationScores segment_motion_residual(const FrameSequence& seq, std::span<const RigidTransform> ego,
                                           const std::vector<std::vector<double>>& fg,
                                           const ResidualConfig& config) {
    check_ego(seq, ego);
    if (!fg.empty() && fg.size() != seq.size()) {
        throw std::invalid_argument("segment_motion_residual: score frame count does not match");
    }
    SegmentationScores out;
    out.fg_threshold = config.fg_threshold;
    out.foreground.resize(seq.size());
    out.dynamic.resize(seq.size());
    if (seq.size() == 0) {
        return out;
    }
    std::vector<PointList> aligned(seq.size());
    for (std::size_t k = 0; k < seq.size(); ++k) {
        aligned[k] = ego[k].apply(seq.frames[k].points);
        out.foreground[k] = fg.empty() ? std::vector<double>(seq.frames[k].size(), 1.0) : fg[k];
        if (out.foreground[k].size() != seq.frames[k].size()) {
            throw std::invalid_argument("segment_motion_residual: score count does not match frame");
        }
    }
    const double cell = std::max(config.radius, 1e-3);
    const SpatialHash target_index(aligned[0], cell);
    std::optional<SpatialHash> first_index;
    if (seq.size() > 1) {
        first_index.emplace(aligned[1], cell);
    }
    parallel_for(seq.size(), config.threads, [&](std::size_t k) {
        const std::size_t n = seq.frames[k].size();
        out.dynamic[k].assign(n, 0.0);
        if (k == 0 && !first_index) {
            return;
        }
        const SpatialHash& ref = k == 0 ? *first_index : target_index;
        const double elapsed = seq.elapsed(k == 0 ? 1 : k);
        for (std::size_t i = 0; i < n; ++i) {
            if (out.foreground[k][i] < config.fg_threshold) {
                continue;
            }
            const auto nn = ref.nearest(aligned[k][i], config.radius);
            if (!nn) {
                out.dynamic[k][i] = 1.0;
                continue;
            }
            out.dynamic[k][i] = sigmoid(config.temperature * (nn->distance / elapsed - config.threshold));
        }
    });
    return out;
}

std::vector<std::uint8_t> segment_foreground_oracle(const Frame& frame, std::span<const OrientedBox> boxes) {
    std::vector<std::uint8_t> out(frame.size(), 0);
    for (std::size_t i = 0; i < frame.size(); ++i) {
        for (const auto& b : boxes) {
            if (b.contains(frame.points[i])) {
                out[i] = 1;
                break;
            }
        }
    }
    return out;
}

SegmentationScores scores_from_labels(const FrameSequence& seq) {
    SegmentationScores out;
    out.foreground.resize(seq.size());
    out.dynamic.resize(seq.size());
    for (std::size_t k = 0; k < seq.size(); ++k) {
        const Frame& f = seq.frames[k];
        out.foreground[k].assign(f.size(), 0.0);
        out.dynamic[k].assign(f.size(), 0.0);
        for (std::size_t i = 0; i < f.size(); ++i) {
            const bool fg = i < f.foreground.size() && f.foreground[i];
            out.foreground[k][i] = fg ? 1.0 : 0.0;
            out.dynamic[k][i] = fg && i < f.dynamic.size() && f.dynamic[i] ? 1.0 : 0.0;
        }
    }
    return out;
}

}  // namespace rigid_accum
