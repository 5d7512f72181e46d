#include "rigid_accum/pipeline.hpp"

#include "rigid_accum/parallel.hpp"
#include "rigid_accum/spatial_index.hpp"

#include <chrono>
#include <cstring>
#include <set>
#include <sstream>

namespace rigid_accum {

PipelineConfig PipelineConfig::for_profile(const std::string& profile) {
    PipelineConfig c;
    c.profile = profile;
    if (profile == "waymo") {
        c.v_max = 30.0;
        c.icp_ego = 0.1;
        c.icp_object = 0.15;
    } else if (profile == "nuscenes") {
        c.v_max = 10.0;
        c.icp_ego = 0.2;
        c.icp_object = 0.25;
    } else {
        throw std::invalid_argument("unknown profile '" + profile + "'");
    }
    return c;
}

void PipelineConfig::validate() const {
    if (profile != "waymo" && profile != "nuscenes") {
        throw std::invalid_argument("unknown profile '" + profile + "'");
    }
    if (association != "dbscan" && association != "kalman") {
        throw std::invalid_argument("unknown association '" + association + "'");
    }
    grid.validate();
    if (n_ego < 3 || sinkhorn_iters < 1 || rounds < 1 || icp_iters < 1) {
        throw std::invalid_argument("pipeline: counts must be positive (n_ego >= 3)");
    }
    if (!(v_max > 0) || !(icp_ego > 0) || !(icp_object > 0) || !(slack_cost > 0) || !(beta > 0)) {
        throw std::invalid_argument("pipeline: v_max, ICP gates, slack cost and beta must be positive");
    }
    if (!(fg_threshold > 0 && fg_threshold < 1)) {
        throw std::invalid_argument("pipeline: fg_threshold must lie in (0, 1)");
    }
    if (!(cluster.eps > 0) || cluster.min_pts < 1 || cluster.voxel < 0) {
        throw std::invalid_argument("pipeline: bad clustering parameters");
    }
}

std::shared_ptr<const PillarGrid> GridCache::find(const std::string& key) const {
    std::lock_guard lock(mutex_);
    auto it = grids_.find(key);
    return it == grids_.end() ? nullptr : it->second;
}

void GridCache::store(const std::string& key, std::shared_ptr<const PillarGrid> grid) {
    std::lock_guard lock(mutex_);
    grids_[key] = std::move(grid);
}

std::size_t GridCache::size() const {
    std::lock_guard lock(mutex_);
    return grids_.size();
}

namespace {

using Clock = std::chrono::steady_clock;

class StageTimer {
public:
    StageTimer(PipelineDiagnostics& d, std::string name) : d_(d), name_(std::move(name)), start_(Clock::now()) {}
    ~StageTimer() {
        d_.timings.push_back({name_, std::chrono::duration<double>(Clock::now() - start_).count()});
    }

private:
    PipelineDiagnostics& d_;
    std::string name_;
    Clock::time_point start_;
};

std::uint64_t fnv(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_points(std::uint64_t h, const PointList& pts) {
    for (const Vec3& p : pts) h = fnv(h, p.data(), 3 * sizeof(double));
    return h;
}

std::string grid_key(const Frame& f, const Featurizer& feat, const PipelineConfig& cfg, const PointList* oracle) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = hash_points(h, f.points);
    if (!f.intensity.empty()) h = fnv(h, f.intensity.data(), f.intensity.size() * sizeof(float));
    if (oracle) h = hash_points(h, *oracle);
    const double spec[7] = {cfg.grid.x_min, cfg.grid.x_max, cfg.grid.y_min, cfg.grid.y_max,
                            cfg.grid.pillar.x(), cfg.grid.pillar.y(), cfg.grid.pillar.z()};
    h = fnv(h, spec, sizeof(spec));
    std::ostringstream key;
    key << f.timestamp_index << '|' << feat.name() << '|' << std::hex << h;
    return key.str();
}

std::vector<double> as_scores(const std::vector<std::uint8_t>& v) { return {v.begin(), v.end()}; }

void require_labels(const FrameSequence& seq, const char* what) {
    for (const Frame& f : seq.frames) {
        if (!f.has_labels()) throw PipelineError(std::string(what) + " needs per-point labels in every frame");
    }
}

// Ego-aligned centroid of each instance's points in frame k.
std::map<std::uint32_t, Vec3> frame_centroids(const std::vector<PointList>& aligned, const FrameLabels& labels,
                                              std::size_t k) {
    std::map<std::uint32_t, std::pair<Vec3, std::size_t>> acc;
    for (std::size_t i = 0; i < aligned[k].size(); ++i) {
        const std::uint32_t id = labels[k][i];
        if (id == 0) continue;
        auto& [sum, n] = acc.try_emplace(id, Vec3::Zero(), 0).first->second;
        sum += aligned[k][i];
        ++n;
    }
    std::map<std::uint32_t, Vec3> out;
    for (const auto& [id, sn] : acc) out[id] = sn.first / static_cast<double>(sn.second);
    return out;
}

}  // namespace

AccumulationResult run(const FrameSequence& seq, const PipelineConfig& cfg, const OracleInputs& oracle,
                       GridCache* cache) {
    if (seq.size() < 2) throw PipelineError("pipeline needs at least 2 frames");
    cfg.validate();
    try {
        seq.validate();
    } catch (const std::exception& e) {
        throw PipelineError(std::string("invalid sequence: ") + e.what());
    }
    const std::size_t T = seq.size();
    const unsigned threads = resolve_threads(cfg.threads);
    AccumulationResult result;
    PipelineDiagnostics& diag = result.diagnostics;

    // ---- features and grids ----
    std::unique_ptr<Featurizer> featurizer;
    std::map<int, PointList> oracle_positions;
    if (cfg.oracle_features) {
        if (!oracle.flow || oracle.flow->size() != T) {
            throw PipelineError("oracle features need ground-truth flow for every frame");
        }
        for (std::size_t k = 0; k < T; ++k) {
            const Frame& f = seq.frames[k];
            if (oracle.flow->frames[k].size() != f.size()) throw PipelineError("ground-truth flow length mismatch");
            PointList pos(f.size());
            for (std::size_t i = 0; i < f.size(); ++i) pos[i] = f.points[i] + oracle.flow->frames[k][i];
            oracle_positions[f.timestamp_index] = std::move(pos);
        }
        featurizer = std::make_unique<OraclePositionFeaturizer>(oracle_positions);
    } else {
        featurizer = std::make_unique<GeometricFeaturizer>();
    }

    std::vector<std::shared_ptr<const PillarGrid>> grids(T);
    {
        StageTimer t(diag, "features");
        std::vector<std::uint8_t> hit(T, 0);
        parallel_for(T, threads, [&](std::size_t k) {
            const Frame& f = seq.frames[k];
            const PointList* extra = cfg.oracle_features ? &oracle_positions.at(f.timestamp_index) : nullptr;
            const std::string key = grid_key(f, *featurizer, cfg, extra);
            if (cache) {
                if (auto g = cache->find(key)) {
                    grids[k] = std::move(g);
                    hit[k] = 1;
                    return;
                }
            }
            auto g = std::make_shared<const PillarGrid>(pillarize(f, cfg.grid, *featurizer));
            if (cache) cache->store(key, g);
            grids[k] = std::move(g);
        });
        for (auto h : hit) diag.grid_cache_hits += h;
    }

    // ---- ego motion ----
    std::vector<std::vector<double>> fg_scores(T);
    if (cfg.oracle_segmentation) {
        require_labels(seq, "oracle segmentation");
        for (std::size_t k = 0; k < T; ++k) fg_scores[k] = as_scores(seq.frames[k].foreground);
    }
    EgoConfig ecfg;
    ecfg.grid = cfg.grid;
    ecfg.n_ego = cfg.n_ego;
    ecfg.fg_threshold = cfg.fg_threshold;
    ecfg.sinkhorn_iters = cfg.sinkhorn_iters;
    ecfg.slack_cost = cfg.slack_cost;
    ecfg.beta = cfg.beta;
    ecfg.v_max = cfg.v_max;
    ecfg.rounds = cfg.rounds;
    ecfg.seed = cfg.seed;

    std::vector<RigidTransform> pair(T);
    diag.ego.assign(T, EgoDiagnostics{});
    diag.ego_icp.assign(T, std::nullopt);
    std::vector<std::string> ego_notes(T);
    {
        StageTimer t(diag, "ego_motion");
        auto static_points = [&](std::size_t k) {
            const Frame& f = seq.frames[k];
            if (fg_scores[k].empty()) return f.points;
            PointList out;
            for (std::size_t i = 0; i < f.size(); ++i) {
                if (fg_scores[k][i] < cfg.fg_threshold) out.push_back(f.points[i]);
            }
            return out;
        };
        std::vector<PointList> static_sets(T);
        for (std::size_t k = 0; k < T; ++k) static_sets[k] = static_points(k);
        const double radius = 0.3;
        const SpatialHash target_index(static_sets[0], radius);
        // Share of (subsampled) static source points landing within 0.3 m of a
        // static target point; the mean distance of those breaks ties.
        auto overlap = [&](std::size_t k, const RigidTransform& t) {
            const PointList& src = static_sets[k];
            const std::size_t step = std::max<std::size_t>(1, src.size() / 4000);
            std::size_t hits = 0;
            double dist = 0.0;
            std::size_t n = 0;
            for (std::size_t i = 0; i < src.size(); i += step, ++n) {
                if (auto nn = target_index.nearest(t.apply(src[i]), radius)) {
                    ++hits;
                    dist += nn->distance;
                }
            }
            if (n == 0) return 0.0;
            return static_cast<double>(hits) / n - (hits ? dist / hits / radius * 1e-3 : 0.0);
        };
        // Registers frame k onto `ref`, matching from `init` (composed into
        // the result).
        auto estimate = [&](std::size_t k, std::size_t ref, const RigidTransform& init) {
            const double elapsed = seq.elapsed(k) - seq.elapsed(ref);
            const bool moved = init.translation().norm() > 0.0 || init.rotation().vec().norm() > 0.0;
            RigidTransform est = init;
            try {
                Frame src = seq.frames[k];
                if (moved) src.points = init.apply(src.points);
                EgoEstimate e = estimate_ego_motion(src, seq.frames[ref], fg_scores[k], fg_scores[ref], *featurizer,
                                                    ecfg, elapsed, moved ? nullptr : grids[k].get(),
                                                    grids[ref].get());
                est = compose(e.transform, init);
                diag.ego[k] = e.diagnostics;
            } catch (const std::exception& e) {
                ego_notes[k] = "frame " + std::to_string(seq.frames[k].timestamp_index) +
                               ": ego matching failed (" + e.what() + "); initial guess kept";
            }
            if (moved && ref == 0 && overlap(k, init) > overlap(k, est)) {
                ego_notes[k] = "frame " + std::to_string(seq.frames[k].timestamp_index) +
                               ": matched estimate overlaps worse than the extrapolation; extrapolation kept";
                est = init;
            }
            if (cfg.ego_icp) {
                IcpResult icp = refine_ego_icp(static_sets[k], static_sets[ref], est, cfg.icp_ego, cfg.icp_iters);
                if (!icp.fell_back) est = icp.transform;
                diag.ego_icp[k] = std::move(icp);
            }
            pair[k] = est;
        };
        if (cfg.chained) {
            parallel_for(T - 1, threads, [&](std::size_t j) { estimate(j + 1, j, RigidTransform()); });
        } else if (!cfg.warm_start) {
            parallel_for(T - 1, threads, [&](std::size_t j) { estimate(j + 1, 0, RigidTransform()); });
        } else {
            // Constant-velocity extrapolation of the previous two estimates.
            for (std::size_t k = 1; k < T; ++k) {
                RigidTransform init;
                if (k >= 2) {
                    const RigidTransform prev = pair[k - 1];
                    const RigidTransform before = k >= 3 ? pair[k - 2] : RigidTransform();
                    init = compose(prev, compose(before.inverse(), prev));
                }
                estimate(k, 0, init);
            }
        }
        result.ego.assign(T, RigidTransform());
        for (std::size_t k = 1; k < T; ++k) {
            result.ego[k] = cfg.chained ? compose(result.ego[k - 1], pair[k]) : pair[k];
            if (!ego_notes[k].empty()) diag.messages.push_back(ego_notes[k]);
        }
    }

    // ---- segmentation ----
    {
        StageTimer t(diag, "segmentation");
        if (cfg.oracle_segmentation) {
            result.segmentation = scores_from_labels(seq);
        } else {
            ResidualConfig rc = cfg.residual;
            rc.threads = threads;
            result.segmentation = segment_motion_residual(seq, result.ego, {}, rc);
        }
    }

    // ---- association ----
    std::vector<PointList> aligned(T);
    for (std::size_t k = 0; k < T; ++k) aligned[k] = result.ego[k].apply(seq.frames[k].points);
    {
        StageTimer t(diag, "association");
        FrameMasks mask(T);
        for (std::size_t k = 0; k < T; ++k) {
            mask[k].assign(seq.frames[k].size(), 0);
            for (std::size_t i = 0; i < seq.frames[k].size(); ++i) {
                mask[k][i] = result.segmentation.is_dynamic(k, i) ? 1 : 0;
            }
        }
        if (cfg.association == "kalman") {
            FrameLabels per_frame(T);
            parallel_for(T, threads, [&](std::size_t k) {
                PointList pts;
                std::vector<std::size_t> idx;
                for (std::size_t i = 0; i < mask[k].size(); ++i) {
                    if (mask[k][i]) {
                        pts.push_back(aligned[k][i]);
                        idx.push_back(i);
                    }
                }
                per_frame[k].assign(mask[k].size(), 0);
                const auto lab = dbscan(pts, cfg.cluster.eps, cfg.cluster.min_pts);
                for (std::size_t j = 0; j < idx.size(); ++j) per_frame[k][idx[j]] = lab[j];
            });
            result.instances = kalman_track(aligned, per_frame, cfg.tracker);
        } else {
            OffsetField offsets;
            if (cfg.oracle_offsets) {
                require_labels(seq, "oracle offsets");
                FrameLabels ids(T);
                for (std::size_t k = 0; k < T; ++k) {
                    ids[k].assign(seq.frames[k].size(), 0);
                    for (std::size_t i = 0; i < ids[k].size(); ++i) {
                        if (mask[k][i]) ids[k][i] = seq.frames[k].instance[i];
                    }
                }
                // Target-frame centroid of each instance; instances unseen in
                // the target use the mean over all frames.
                FrameLabels gt_ids(T);
                for (std::size_t k = 0; k < T; ++k) gt_ids[k] = seq.frames[k].instance;
                std::map<std::uint32_t, Vec3> centroids = frame_centroids(aligned, gt_ids, 0);
                std::map<std::uint32_t, std::pair<Vec3, std::size_t>> pooled;
                for (std::size_t k = 0; k < T; ++k) {
                    for (std::size_t i = 0; i < ids[k].size(); ++i) {
                        const std::uint32_t id = ids[k][i];
                        if (id == 0 || centroids.count(id)) continue;
                        auto& [sum, n] = pooled.try_emplace(id, Vec3::Zero(), 0).first->second;
                        sum += aligned[k][i];
                        ++n;
                    }
                }
                for (const auto& [id, sn] : pooled) centroids[id] = sn.first / static_cast<double>(sn.second);
                offsets = compute_gt_offsets(aligned, ids, centroids);
            }
            result.instances = cluster_spatiotemporal(aligned, mask, offsets, cfg.cluster);
        }
    }

    // ---- object motion ----
    {
        StageTimer t(diag, "object_motion");
        ObjectMotionConfig ocfg;
        ocfg.icp.max_corr_dist = cfg.icp_object;
        ocfg.icp.max_iters = cfg.icp_iters;
        ocfg.threads = threads;
        std::optional<ObjectMotionResult> full;
        std::optional<ObjectMotionResult> centroid;
        try {
            full = estimate_object_motions(result.instances, seq, result.ego, ocfg);
        } catch (const std::exception& e) {
            diag.messages.push_back(std::string("object motion failed (") + e.what() + "); centroid-only fallback");
        }
        auto centroid_result = [&]() -> const ObjectMotionResult* {
            if (!centroid) {
                ObjectMotionConfig c = ocfg;
                c.centroid_only = true;
                try {
                    centroid = estimate_object_motions(result.instances, seq, result.ego, c);
                } catch (const std::exception& e) {
                    diag.messages.push_back(std::string("centroid-only motion failed (") + e.what() + ")");
                    centroid = ObjectMotionResult{};
                }
            }
            return &*centroid;
        };
        if (full) diag.objects = full->diagnostics;

        // A motion is implausible when it displaces the instance centroid
        // further than v_max allows plus the object ICP gate.
        auto plausible = [&](const RigidTransform& m, const Vec3& c, std::size_t k) {
            return (m.apply(c) - c).norm() <= cfg.v_max * seq.elapsed(k) + cfg.icp_object;
        };
        std::vector<std::map<std::uint32_t, Vec3>> cents(T);
        for (std::size_t k = 0; k < T; ++k) cents[k] = frame_centroids(aligned, result.instances.labels, k);

        for (std::uint32_t id = 1; id <= result.instances.clusters; ++id) {
            auto& out = result.objects.motions[id];
            out.assign(T, std::nullopt);
            for (std::size_t k = 0; k < T; ++k) {
                auto c = cents[k].find(id);
                if (c == cents[k].end()) continue;
                if (k == 0) {
                    out[k] = RigidTransform();
                    continue;
                }
                const std::optional<RigidTransform>* m = full ? full->motions.find(id, k) : nullptr;
                if (m && m->has_value() && plausible(**m, c->second, k)) {
                    out[k] = **m;
                    continue;
                }
                if (full) diag.objects.push_back({id, k, "implausible motion; centroid-only fallback"});
                const std::optional<RigidTransform>* cm = centroid_result()->motions.find(id, k);
                if (cm && cm->has_value() && plausible(**cm, c->second, k)) {
                    out[k] = **cm;
                    continue;
                }
                diag.objects.push_back({id, k, "centroid-only motion unusable; ego-only fallback"});
                out[k] = RigidTransform();
            }
        }
    }

    // ---- flow ----
    {
        StageTimer t(diag, "flow");
        result.flow = compose_scene_flow(seq, result.ego, result.objects, result.instances.labels);
    }
    return result;
}

AccumulatedCloud accumulate_points(const FrameSequence& seq, const FlowField& flow) {
    if (flow.size() != seq.size()) throw std::invalid_argument("accumulate_points: flow frame count differs");
    AccumulatedCloud out;
    Frame& c = out.cloud;
    c.timestamp_index = seq.size() ? seq.target().timestamp_index : 1;
    bool intensity = true;
    for (const Frame& f : seq.frames) intensity = intensity && f.intensity.size() == f.size();
    for (std::size_t k = 0; k < seq.size(); ++k) {
        const Frame& f = seq.frames[k];
        if (flow.frames[k].size() != f.size()) throw std::invalid_argument("accumulate_points: flow length differs");
        for (std::size_t i = 0; i < f.size(); ++i) {
            c.points.push_back(f.points[i] + flow.frames[k][i]);
            out.source_frame.push_back(static_cast<std::uint32_t>(f.timestamp_index));
            if (intensity) c.intensity.push_back(f.intensity[i]);
        }
    }
    return out;
}

AccumulatedCloud accumulate_points(const FrameSequence& seq, const AccumulationResult& result) {
    AccumulatedCloud out = accumulate_points(seq, result.flow);
    Frame& c = out.cloud;
    const auto& seg = result.segmentation;
    for (std::size_t k = 0; k < seq.size(); ++k) {
        for (std::size_t i = 0; i < seq.frames[k].size(); ++i) {
            c.foreground.push_back(seg.is_foreground(k, i) ? 1 : 0);
            c.dynamic.push_back(seg.is_dynamic(k, i) ? 1 : 0);
            c.instance.push_back(result.instances.labels[k][i]);
        }
    }
    return out;
}

FlowField nearest_neighbor_flow(const FrameSequence& seq, unsigned threads) {
    FlowField flow = FlowField::zeros_like(seq);
    if (seq.size() < 2) return flow;
    const SpatialHash index(seq.target().points, 1.0);
    parallel_for(seq.size() - 1, threads, [&](std::size_t j) {
        const Frame& f = seq.frames[j + 1];
        for (std::size_t i = 0; i < f.size(); ++i) {
            auto nn = index.nearest(f.points[i]);
            if (nn) flow.frames[j + 1][i] = index.point(nn->index) - f.points[i];
        }
    });
    return flow;
}

}  // namespace rigid_accum
