#include "rigid_accum/gt.hpp"
#include "rigid_accum/sim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace rigid_accum;

namespace {

SceneSpec static_world() {
    SceneSpec s = SceneSpec::default_scene();
    s.bodies.clear();
    s.ego.speed = 0.0;
    s.sensor.points_per_frame = 3000;
    s.sensor.max_range = 1000.0;
    return s;
}

}  // namespace

TEST(Simulator, StaticWorldAndStillEgoGiveIdenticalFrames) {
    const SimulatedScene sc = generate_scene(static_world());
    for (std::size_t k = 1; k < sc.sequence.size(); ++k) {
        EXPECT_EQ(sc.sequence.frames[k].points, sc.sequence.frames[0].points);
        for (const auto& v : sc.flow.frames[k]) {
            EXPECT_EQ(v, Vec3::Zero());
        }
    }
}

TEST(Simulator, EgoTranslationShiftsBackground) {
    SceneSpec s = static_world();
    s.ego.speed = 10.0;  // 1 m per 0.1 s frame
    const SimulatedScene sc = generate_scene(s);
    const auto& p0 = sc.sequence.frames[0].points;
    for (std::size_t k = 1; k < sc.sequence.size(); ++k) {
        const auto& pk = sc.sequence.frames[k].points;
        ASSERT_EQ(pk.size(), p0.size());
        for (std::size_t i = 0; i < pk.size(); ++i) {
            EXPECT_LT((pk[i] - (p0[i] - static_cast<double>(k) * Vec3(1, 0, 0))).norm(), 1e-9);
        }
    }
}

TEST(Simulator, MovingCarFlowRelativeToBackground) {
    SceneSpec s = static_world();
    s.ego.speed = 3.0;
    BodySpec car;
    car.motion.start = Vec3(5, -3, 0);
    car.motion.speed = 5.0;
    s.bodies = {car};
    const SimulatedScene sc = generate_scene(s);
    const Frame& last = sc.sequence.frames[4];
    int checked = 0;
    for (std::size_t i = 0; i < last.size(); ++i) {
        if (last.instance[i] == 1) {
            const Vec3 ego_flow = sc.ego[4].apply(last.points[i]) - last.points[i];
            EXPECT_NEAR((sc.flow.frames[4][i] - ego_flow).norm(), 2.0, 1e-9);
            EXPECT_EQ(last.dynamic[i], 1);
            ++checked;
        }
    }
    EXPECT_GT(checked, 100);
}

TEST(Simulator, SameSeedIsBitIdentical) {
    SceneSpec s = SceneSpec::default_scene();
    s.sensor.noise_sigma = 0.02;
    s.sensor.dropout = 0.1;
    s.sensor.points_per_frame = 4000;
    const SimulatedScene a = generate_scene(s);
    const SimulatedScene b = generate_scene(s);
    for (std::size_t k = 0; k < a.sequence.size(); ++k) {
        EXPECT_EQ(a.sequence.frames[k].points, b.sequence.frames[k].points);
        EXPECT_EQ(a.flow.frames[k], b.flow.frames[k]);
    }
    s.seed = 2;
    EXPECT_NE(generate_scene(s).sequence.frames[1].points, a.sequence.frames[1].points);
}

TEST(Simulator, FlowMatchesWorldSampleCorrespondence) {
    // Noise-free: the flow must carry each point onto where its world sample
    // sits in the target frame.
    SceneSpec s = SceneSpec::default_scene();
    s.sensor.points_per_frame = 3000;
    s.sensor.max_range = 1000.0;
    s.ego.yaw_rate = 0.2;
    const SimulatedScene sc = generate_scene(s);
    const RigidTransform lift = RigidTransform::from_translation(Vec3(0, 0, s.sensor.height));
    auto sensor = [&](double t) { return compose(s.ego.pose(t), lift); };
    for (std::size_t k = 1; k < sc.sequence.size(); ++k) {
        const double t = static_cast<double>(k) * s.dt;
        const Frame& f = sc.sequence.frames[k];
        for (std::size_t i = 0; i < f.size(); ++i) {
            Vec3 world = sensor(t).apply(f.points[i]);
            if (f.instance[i] != 0) {
                const auto& body = s.bodies[f.instance[i] - 1].motion;
                world = body.pose(0.0).apply(body.pose(t).inverse().apply(world));
            }
            const Vec3 expected = sensor(0.0).inverse().apply(world) - f.points[i];
            ASSERT_LT((sc.flow.frames[k][i] - expected).norm(), 1e-9);
        }
    }
    // Three parked bodies are static foreground, the fourth moves.
    std::set<std::uint32_t> dynamic_ids;
    for (const auto& f : sc.sequence.frames) {
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (f.dynamic[i]) {
                dynamic_ids.insert(f.instance[i]);
            }
        }
    }
    EXPECT_EQ(dynamic_ids, (std::set<std::uint32_t>{4}));
}

TEST(Simulator, OcclusionRemovesPointsBehindWalls) {
    SceneSpec s = SceneSpec::default_scene();
    s.sensor.points_per_frame = 6000;
    s.walls = {{Vec2(-10, 5), Vec2(10, 5), 4.0}};
    s.structures.clear();
    s.bodies.clear();
    BodySpec hidden;
    hidden.motion.start = Vec3(0, 9, 0);
    s.bodies = {hidden};
    const SimulatedScene open = generate_scene(s);
    s.sensor.occlusion = true;
    const SimulatedScene occluded = generate_scene(s);
    auto count_body = [](const Frame& f) {
        return std::count(f.instance.begin(), f.instance.end(), 1U);
    };
    EXPECT_GT(count_body(open.sequence.frames[0]), 100);
    EXPECT_EQ(count_body(occluded.sequence.frames[0]), 0);
    EXPECT_LT(occluded.sequence.frames[0].size(), open.sequence.frames[0].size());
}

TEST(Simulator, RejectsInvalidSpec) {
    SceneSpec s;
    s.frames = 1;
    EXPECT_THROW(generate_scene(s), std::invalid_argument);
    s.frames = 3;
    s.sensor.noise_sigma = -1.0;
    EXPECT_THROW(generate_scene(s), std::invalid_argument);
}

TEST(InterpolateBoxes, AnnotatedMidpointAndShorterArc) {
    BoxTrack t;
    t.id = 1;
    t.boxes[1] = OrientedBox{Vec3(0, 0, 0), Vec3(4, 2, 1.5), 170.0 * M_PI / 180.0};
    t.boxes[3] = OrientedBox{Vec3(2, 0, 0), Vec3(4, 2, 1.5), -170.0 * M_PI / 180.0};
    const OrientedBox a = interpolate_box(t, 1);
    EXPECT_EQ(a.center, t.boxes[1].center);
    EXPECT_EQ(a.yaw, t.boxes[1].yaw);
    const OrientedBox m = interpolate_box(t, 2);
    EXPECT_LT((m.center - Vec3(1, 0, 0)).norm(), 1e-15);
    EXPECT_NEAR(std::abs(m.yaw), M_PI, 1e-12);
    EXPECT_THROW(interpolate_box(t, 4), OutOfSpan);
    EXPECT_THROW(interpolate_box(t, 0), OutOfSpan);
}

TEST(InterpolateBoxes, StrideOneIsIdentityOnAnnotations) {
    BoxTrack t;
    t.id = 2;
    for (int f = 1; f <= 6; ++f) {
        t.boxes[f] = OrientedBox{Vec3(f, 0.5 * f, 0), Vec3(4, 2, 1.5), 0.1 * f};
    }
    const BoxTrack s = subsample_track(t, 1);
    for (const auto& [f, b] : t.boxes) {
        const OrientedBox i = interpolate_box(s, f);
        EXPECT_EQ(i.center, b.center);
        EXPECT_EQ(i.yaw, b.yaw);
    }
    const BoxTrack coarse = subsample_track(t, 4);
    EXPECT_EQ(coarse.boxes.size(), 3U);  // frames 1, 5 and the last one
}

TEST(BoxPairTransform, IdentityRotationAndCorners) {
    const OrientedBox a{Vec3(3, 1, 0.8), Vec3(4, 2, 1.6), 0.3};
    const RigidTransform id = box_pair_transform(a, a);
    EXPECT_LT(id.translation().norm(), 1e-12);
    EXPECT_LT(id.rotation_distance(RigidTransform()), 1e-12);

    OrientedBox turned = a;
    turned.yaw += M_PI / 2;
    const RigidTransform r = box_pair_transform(a, turned);
    EXPECT_LT((r.apply(a.center) - a.center).norm(), 1e-12);
    EXPECT_NEAR(r.rotation_distance(RigidTransform()), M_PI / 2, 1e-12);

    const OrientedBox b{Vec3(-2, 5, 0.8), Vec3(4, 2, 1.6), -1.1};
    const RigidTransform t = box_pair_transform(a, b);
    const auto ca = a.corners();
    const auto cb = b.corners();
    for (std::size_t i = 0; i < ca.size(); ++i) {
        EXPECT_LT((t.apply(ca[i]) - cb[i]).norm(), 1e-9);
    }
}

TEST(PseudoGt, StationaryWorldMovingEgo) {
    SceneSpec s = static_world();
    s.ego.speed = 7.0;
    const SimulatedScene sc = generate_scene(s);
    const PseudoGt g = build_pseudo_gt(sc.sequence, sc.ego, {});
    for (std::size_t k = 1; k < sc.sequence.size(); ++k) {
        for (std::size_t i = 0; i < sc.sequence.frames[k].size(); ++i) {
            const Vec3& x = sc.sequence.frames[k].points[i];
            EXPECT_LT((g.flow.frames[k][i] - (sc.ego[k].apply(x) - x)).norm(), 1e-12);
        }
    }
}

TEST(PseudoGt, MovingBoxStaticEgo) {
    SceneSpec s = static_world();
    BodySpec car;
    car.motion.start = Vec3(5, -3, 0);
    car.motion.speed = 5.0;
    s.bodies = {car};
    const SimulatedScene sc = generate_scene(s);
    const PseudoGt g = build_pseudo_gt(sc.sequence, sc.ego, sc.boxes);
    for (std::size_t k = 1; k < sc.sequence.size(); ++k) {
        for (std::size_t i = 0; i < sc.sequence.frames[k].size(); ++i) {
            const bool inside = sc.sequence.frames[k].instance[i] == 1;
            EXPECT_EQ(g.flow.frames[k][i].norm() > 0.0, inside);
        }
    }
}

TEST(PseudoGt, MatchesSimulatorGroundTruth) {
    SceneSpec s = SceneSpec::default_scene();
    s.sensor.points_per_frame = 5000;
    s.ego.yaw_rate = 0.15;
    const SimulatedScene sc = generate_scene(s);
    const PseudoGt g = build_pseudo_gt(sc.sequence, sc.ego, sc.boxes, 1e-6);
    for (std::size_t k = 0; k < sc.sequence.size(); ++k) {
        const Frame& f = sc.sequence.frames[k];
        EXPECT_EQ(g.instance[k], f.instance);
        EXPECT_EQ(g.foreground[k], f.foreground);
        EXPECT_EQ(g.dynamic[k], f.dynamic);
        for (std::size_t i = 0; i < f.size(); ++i) {
            ASSERT_LT((g.flow.frames[k][i] - sc.flow.frames[k][i]).norm(), 1e-9);
        }
    }
    // Moved points land in the target box of their instance.
    for (std::size_t k = 1; k < sc.sequence.size(); ++k) {
        const Frame& f = sc.sequence.frames[k];
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (f.instance[i] != 0) {
                const OrientedBox target = sc.boxes[f.instance[i] - 1].boxes.at(1);
                EXPECT_TRUE(target.contains(f.points[i] + g.flow.frames[k][i], 1e-6));
            }
        }
    }
}

TEST(PseudoGt, UncoveredForegroundThrows) {
    FrameSequence seq;
    Frame f;
    f.points = {Vec3(100, 0, 0)};
    f.ensure_labels();
    f.foreground[0] = 1;
    seq.frames = {f};
    const std::vector<RigidTransform> ego(1);
    EXPECT_THROW(build_pseudo_gt(seq, ego, {}), UncoveredForegroundPoint);
}

TEST(BoxTrackFile, RoundTripWithComments) {
    BoxTracks tracks(2);
    tracks[0].id = 3;
    tracks[0].boxes[1] = OrientedBox{Vec3(1.25, -2, 0.8), Vec3(4.5, 1.9, 1.6), 0.123456789012345};
    tracks[0].boxes[2] = OrientedBox{Vec3(1.75, -2, 0.8), Vec3(4.5, 1.9, 1.6), 0.2};
    tracks[1].id = 7;
    tracks[1].boxes[2] = OrientedBox{Vec3(0, 0, 0), Vec3(1, 1, 1), -3.0};
    std::stringstream ss;
    write_box_tracks(ss, tracks);
    std::stringstream with_comments;
    with_comments << "# header\n\n" << ss.str() << "   # trailing comment\n";
    const BoxTracks back = read_box_tracks(with_comments);
    ASSERT_EQ(back.size(), 2U);
    EXPECT_EQ(back[0].id, 3U);
    EXPECT_EQ(back[0].boxes.at(1).center, tracks[0].boxes[1].center);
    EXPECT_EQ(back[0].boxes.at(1).yaw, tracks[0].boxes[1].yaw);
    EXPECT_EQ(back[1].boxes.at(2).dims, tracks[1].boxes[2].dims);
    std::stringstream bad("1 2 3 4\n");
    EXPECT_THROW(read_box_tracks(bad), std::runtime_error);
}
