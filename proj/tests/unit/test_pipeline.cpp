#include "rigid_accum/config.hpp"
#include "rigid_accum/metrics.hpp"
#include "rigid_accum/pipeline.hpp"
#include "rigid_accum/sim.hpp"

#include <gtest/gtest.h>

using namespace rigid_accum;

namespace {

SceneSpec small_scene(std::size_t frames = 5, double sigma = 0.0) {
    SceneSpec spec = SceneSpec::default_scene();
    spec.frames = frames;
    spec.sensor.points_per_frame = 10000;
    spec.sensor.noise_sigma = sigma;
    return spec;
}

PipelineConfig all_oracles() {
    PipelineConfig cfg;
    cfg.oracle_features = true;
    cfg.oracle_segmentation = true;
    cfg.oracle_offsets = true;
    return cfg;
}

FrameMasks dynamic_mask(const FrameSequence& seq, bool dynamic) {
    FrameMasks m;
    for (const Frame& f : seq.frames) {
        std::vector<std::uint8_t> row;
        for (auto d : f.dynamic) row.push_back((d != 0) == dynamic ? 1 : 0);
        m.push_back(std::move(row));
    }
    return m;
}

double static_epe(const FlowField& pred, const SimulatedScene& s) {
    return flow_metrics(pred, s.flow, dynamic_mask(s.sequence, false)).epe_avg;
}

double dynamic_epe(const FlowField& pred, const SimulatedScene& s) {
    return flow_metrics(pred, s.flow, dynamic_mask(s.sequence, true)).epe_avg;
}

// Distance from p to the surface of an oriented box.
double box_surface_distance(const OrientedBox& b, const Vec3& p) {
    const Vec3 local = b.pose().inverse().apply(p);
    const Vec3 half = b.dims / 2.0;
    const Vec3 outside = (local.cwiseAbs() - half).cwiseMax(0.0);
    if (outside.norm() > 0.0) return outside.norm();
    return (half - local.cwiseAbs()).minCoeff();
}

}  // namespace

TEST(PipelineConfig, Profiles) {
    const auto w = PipelineConfig::for_profile("waymo");
    EXPECT_EQ(w.v_max, 30.0);
    EXPECT_EQ(w.icp_ego, 0.1);
    EXPECT_EQ(w.icp_object, 0.15);
    const auto n = PipelineConfig::for_profile("nuscenes");
    EXPECT_EQ(n.v_max, 10.0);
    EXPECT_EQ(n.icp_ego, 0.2);
    EXPECT_EQ(n.icp_object, 0.25);
    EXPECT_EQ(w.n_ego, 1024U);
    EXPECT_EQ(w.fg_threshold, 0.5);
    EXPECT_EQ(w.sinkhorn_iters, 5);
    EXPECT_EQ(w.grid.pillar, Vec3(0.25, 0.25, 8.0));
    EXPECT_EQ(w.cluster.voxel, 0.15);
    EXPECT_THROW(PipelineConfig::for_profile("kitti"), std::invalid_argument);
}

TEST(PipelineConfig, TextRoundTrip) {
    PipelineConfig c = PipelineConfig::for_profile("nuscenes");
    c.chained = true;
    c.oracle_offsets = true;
    c.cluster.eps = 0.6;
    c.seed = 9;
    const PipelineConfig back =
        pipeline_config_from_config(ConfigFile::parse(pipeline_config_to_config(c).to_string()));
    EXPECT_EQ(back.v_max, 10.0);
    EXPECT_TRUE(back.chained);
    EXPECT_TRUE(back.oracle_offsets);
    EXPECT_EQ(back.cluster.eps, 0.6);
    EXPECT_EQ(back.seed, 9U);
    EXPECT_EQ(pipeline_config_to_config(back).to_string(), pipeline_config_to_config(c).to_string());

    // Profile first, explicit keys override it.
    const auto over = pipeline_config_from_config(ConfigFile::parse("[pipeline]\nprofile = nuscenes\nv_max = 12\n"));
    EXPECT_EQ(over.v_max, 12.0);
    EXPECT_EQ(over.icp_ego, 0.2);
    EXPECT_THROW(pipeline_config_from_config(ConfigFile::parse("[pipeline]\nbogus = 1\n")), ConfigError);
    EXPECT_THROW(pipeline_config_from_config(ConfigFile::parse("[pipeline]\nv_max = -1\n")), ConfigError);
}

TEST(SceneConfig, RoundTripGivesSameScene) {
    SceneSpec spec = small_scene(3, 0.01);
    spec.sensor.points_per_frame = 2000;
    const SceneSpec back = scene_spec_from_config(ConfigFile::parse(scene_spec_to_config(spec).to_string()));
    const auto a = generate_scene(spec);
    const auto b = generate_scene(back);
    ASSERT_EQ(a.sequence.size(), b.sequence.size());
    for (std::size_t k = 0; k < a.sequence.size(); ++k) {
        EXPECT_EQ(a.sequence.frames[k].points, b.sequence.frames[k].points);
    }
}

TEST(SceneConfig, BaseAndOverrides) {
    const auto spec = scene_spec_from_config(ConfigFile::parse(
        "[scene]\nframes = 7\nseed = 4\n[body]\nstart = 1, 2, 0\nspeed = 3\n[body]\nstart = -5, 0, 0\n"));
    EXPECT_EQ(spec.frames, 7U);
    EXPECT_EQ(spec.seed, 4U);
    ASSERT_EQ(spec.bodies.size(), 2U);
    EXPECT_EQ(spec.bodies[0].motion.speed, 3.0);
    EXPECT_EQ(spec.walls.size(), SceneSpec::default_scene().walls.size());
    const auto empty = scene_spec_from_config(ConfigFile::parse("[scene]\nbase = empty\n"));
    EXPECT_TRUE(empty.bodies.empty());
    EXPECT_TRUE(empty.walls.empty());
    EXPECT_THROW(scene_spec_from_config(ConfigFile::parse("[scene]\nframez = 3\n")), ConfigError);
    EXPECT_THROW(scene_spec_from_config(ConfigFile::parse("[planet]\n")), ConfigError);
    const auto zero = scene_spec_from_config(ConfigFile::parse("[scene]\nframes = 0\n"));
    EXPECT_THROW(zero.validate(), std::invalid_argument);
}

TEST(Pipeline, RejectsShortSequencesAndMissingOracles) {
    const auto scene = generate_scene(small_scene(2));
    FrameSequence one;
    one.frames = {scene.sequence.frames[0]};
    EXPECT_THROW(run(one, PipelineConfig{}), PipelineError);
    PipelineConfig cfg;
    cfg.oracle_features = true;
    EXPECT_THROW(run(scene.sequence, cfg), PipelineError);
}

TEST(Pipeline, StaticSceneFlowIsEgoFlow) {
    SceneSpec spec = small_scene(4);
    spec.bodies.clear();
    const auto scene = generate_scene(spec);
    const auto r = run(scene.sequence, all_oracles(), {scene.flow});
    EXPECT_EQ(r.instances.clusters, 0U);
    for (std::size_t k = 1; k < scene.sequence.size(); ++k) {
        const Frame& f = scene.sequence.frames[k];
        for (std::size_t i = 0; i < f.size(); ++i) {
            ASSERT_EQ(r.flow.frames[k][i], Vec3(r.ego[k].apply(f.points[i]) - f.points[i]));
        }
        EXPECT_LT(r.ego[k].translation_distance(scene.ego[k]), 1e-6);
    }
}

TEST(Pipeline, AllOraclesNoiseFree) {
    const auto scene = generate_scene(small_scene());
    const auto r = run(scene.sequence, all_oracles(), {scene.flow});
    EXPECT_LT(static_epe(r.flow, scene), 1e-3);
    EXPECT_LT(dynamic_epe(r.flow, scene), 1e-2);
    EXPECT_EQ(r.instances.clusters, 1U);
    ASSERT_EQ(r.diagnostics.timings.size(), 6U);
    EXPECT_EQ(r.diagnostics.timings[1].stage, "ego_motion");
}

TEST(Pipeline, NearestNeighbourBaselineIsWorse) {
    const auto scene = generate_scene(small_scene(5, 0.02));
    const auto r = run(scene.sequence, all_oracles(), {scene.flow});
    const FlowField nn = nearest_neighbor_flow(scene.sequence, 2);
    EXPECT_GT(static_epe(nn, scene), static_epe(r.flow, scene));
    EXPECT_GT(dynamic_epe(nn, scene), dynamic_epe(r.flow, scene));
}

TEST(Pipeline, GeometricFeaturesRecoverEgo) {
    const auto scene = generate_scene(small_scene(5, 0.02));
    PipelineConfig cfg;
    cfg.oracle_segmentation = true;
    const auto r = run(scene.sequence, cfg);
    for (std::size_t k = 1; k < scene.sequence.size(); ++k) {
        EXPECT_LT(r.ego[k].translation_distance(scene.ego[k]), 0.02) << k;
    }
}

TEST(Pipeline, ErrorGrowsWithSequenceLength) {
    PipelineConfig cfg = all_oracles();
    double previous = 0.0;
    for (std::size_t T : {3U, 10U}) {
        const auto scene = generate_scene(small_scene(T, 0.02));
        const auto r = run(scene.sequence, cfg, {scene.flow});
        const double e = static_epe(r.flow, scene);
        EXPECT_GE(e, previous) << "T = " << T;
        previous = e;
    }
}

TEST(Pipeline, ChainedDriftsMoreThanDirect) {
    const auto scene = generate_scene(small_scene(5, 0.02));
    PipelineConfig cfg = all_oracles();
    cfg.ego_icp = false;
    const auto direct = run(scene.sequence, cfg, {scene.flow});
    cfg.chained = true;
    const auto chained = run(scene.sequence, cfg, {scene.flow});
    const std::size_t last = scene.sequence.size() - 1;
    EXPECT_GT(chained.ego[last].translation_distance(scene.ego[last]),
              direct.ego[last].translation_distance(scene.ego[last]));
}

TEST(Pipeline, DeterministicAcrossThreadCounts) {
    const auto scene = generate_scene(small_scene(4, 0.02));
    PipelineConfig cfg;
    cfg.threads = 1;
    const auto a = run(scene.sequence, cfg);
    cfg.threads = 4;
    const auto b = run(scene.sequence, cfg);
    for (std::size_t k = 0; k < scene.sequence.size(); ++k) {
        ASSERT_EQ(a.flow.frames[k], b.flow.frames[k]);
        ASSERT_EQ(a.instances.labels[k], b.instances.labels[k]);
    }
}

TEST(Pipeline, StreamingCacheMatchesColdRun) {
    const auto scene = generate_scene(small_scene(5, 0.02));
    FrameSequence head = scene.sequence;
    head.frames.pop_back();
    FlowField head_flow = scene.flow;
    head_flow.frames.pop_back();
    GridCache cache;
    const PipelineConfig cfg = all_oracles();
    run(head, cfg, {head_flow}, &cache);
    EXPECT_EQ(cache.size(), 4U);
    const auto warm = run(scene.sequence, cfg, {scene.flow}, &cache);
    EXPECT_EQ(warm.diagnostics.grid_cache_hits, 4U);
    const auto cold = run(scene.sequence, cfg, {scene.flow});
    EXPECT_EQ(cold.diagnostics.grid_cache_hits, 0U);
    for (std::size_t k = 0; k < scene.sequence.size(); ++k) ASSERT_EQ(warm.flow.frames[k], cold.flow.frames[k]);
}

TEST(Pipeline, InstanceMissingFromTargetFallsBackToEgo) {
    auto scene = generate_scene(small_scene(4));
    // Drop the moving car from the target frame.
    Frame& target = scene.sequence.frames[0];
    Frame kept;
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target.dynamic[i]) continue;
        kept.points.push_back(target.points[i]);
        kept.foreground.push_back(target.foreground[i]);
        kept.dynamic.push_back(0);
        kept.instance.push_back(target.instance[i]);
    }
    kept.timestamp_index = target.timestamp_index;
    target = kept;
    scene.flow.frames[0].assign(target.size(), Vec3::Zero());
    const auto r = run(scene.sequence, all_oracles(), {scene.flow});
    ASSERT_EQ(r.instances.clusters, 1U);
    EXPECT_FALSE(r.diagnostics.objects.empty());
    for (std::size_t k = 1; k < scene.sequence.size(); ++k) {
        const Frame& f = scene.sequence.frames[k];
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (r.instances.labels[k][i] == 0) continue;
            ASSERT_EQ(r.flow.frames[k][i], Vec3(r.ego[k].apply(f.points[i]) - f.points[i]));
        }
    }
}

TEST(Accumulate, ZeroFlowConcatenates) {
    const auto scene = generate_scene(small_scene(3));
    const auto acc = accumulate_points(scene.sequence, FlowField::zeros_like(scene.sequence));
    std::size_t total = 0;
    for (const Frame& f : scene.sequence.frames) total += f.size();
    ASSERT_EQ(acc.cloud.size(), total);
    std::size_t j = 0;
    for (const Frame& f : scene.sequence.frames) {
        for (std::size_t i = 0; i < f.size(); ++i, ++j) {
            ASSERT_EQ(acc.cloud.points[j], f.points[i]);
            ASSERT_EQ(acc.source_frame[j], static_cast<std::uint32_t>(f.timestamp_index));
        }
    }
}

TEST(Accumulate, GroundTruthFlowPutsObjectOnTargetSurface) {
    const auto scene = generate_scene(small_scene(5));
    const auto acc = accumulate_points(scene.sequence, scene.flow);
    std::size_t j = 0;
    std::size_t checked = 0;
    for (const Frame& f : scene.sequence.frames) {
        for (std::size_t i = 0; i < f.size(); ++i, ++j) {
            if (f.instance[i] == 0) continue;
            const BoxTrack& track = scene.boxes.at(f.instance[i] - 1);
            ASSERT_EQ(track.id, f.instance[i]);
            EXPECT_LT(box_surface_distance(track.boxes.at(1), acc.cloud.points[j]), 1e-9);
            ++checked;
        }
    }
    EXPECT_GT(checked, 100U);
}

TEST(Accumulate, ResultCarriesProvenance) {
    const auto scene = generate_scene(small_scene(3));
    const auto r = run(scene.sequence, all_oracles(), {scene.flow});
    const auto acc = accumulate_points(scene.sequence, r);
    ASSERT_EQ(acc.cloud.instance.size(), acc.cloud.size());
    std::size_t j = scene.sequence.frames[0].size() + scene.sequence.frames[1].size();
    const Frame& f = scene.sequence.frames[2];
    for (std::size_t i = 0; i < f.size(); ++i, ++j) {
        EXPECT_EQ(acc.cloud.instance[j], r.instances.labels[2][i]);
        EXPECT_EQ(acc.source_frame[j], 3U);
    }
}
