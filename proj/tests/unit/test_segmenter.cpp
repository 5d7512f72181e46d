#include "rigid_accum/segmenter.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rigid_accum;
using rigid_accum::testing::random_transform;

namespace {

// Two-frame sequence: a static point at index 0, an instance point at index 1.
FrameSequence two_frames(double interval, const Vec3& object_shift) {
    FrameSequence seq;
    seq.interval = interval;
    Frame t;
    t.points = {Vec3(5, 0, 0), Vec3(0, 3, 0)};
    t.ensure_labels();
    t.foreground[1] = 1;
    t.instance[1] = 7;
    Frame s = t;
    s.timestamp_index = 2;
    s.points[1] -= object_shift;
    seq.frames = {t, s};
    return seq;
}

FlowField flow_for(const FrameSequence& seq, const RigidTransform& ego, const Vec3& object_shift) {
    FlowField f = FlowField::zeros_like(seq);
    for (std::size_t i = 0; i < seq.frames[1].size(); ++i) {
        f.frames[1][i] = ego.apply(seq.frames[1].points[i]) - seq.frames[1].points[i];
    }
    f.frames[1][1] += object_shift;
    return f;
}

Frame wall(double x0, int n) {
    Frame f;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            f.points.emplace_back(x0, 0.1 * i, 0.1 * j);
        }
    }
    f.ensure_labels();
    return f;
}

}  // namespace

TEST(LabelDynamicOracle, StaticPointIsNotDynamic) {
    const FrameSequence seq = two_frames(0.1, Vec3::Zero());
    const std::vector<RigidTransform> ego(2);
    const auto labels = label_dynamic_oracle(seq, flow_for(seq, ego[1], Vec3::Zero()), ego);
    EXPECT_EQ(labels[1][0], 0);
    EXPECT_EQ(labels[1][1], 0);
    EXPECT_EQ(labels[0][1], 0);
}

TEST(LabelDynamicOracle, ThreeMetersPerSecondIsDynamic) {
    const Vec3 shift(0.3, 0, 0);
    const FrameSequence seq = two_frames(0.1, shift);
    const std::vector<RigidTransform> ego = {RigidTransform(), RigidTransform::from_yaw(0.1, Vec3(1, 0, 0))};
    const auto labels = label_dynamic_oracle(seq, flow_for(seq, ego[1], shift), ego);
    EXPECT_EQ(labels[1][0], 0);
    EXPECT_EQ(labels[1][1], 1);
    // The target-frame point of the same instance inherits the flag.
    EXPECT_EQ(labels[0][1], 1);
    EXPECT_EQ(labels[0][0], 0);
}

TEST(LabelDynamicOracle, ExactlyHalfMeterPerSecondIsStatic) {
    // 0.25 m over 0.5 s; both values are exact in binary.
    const Vec3 shift(0.25, 0, 0);
    const FrameSequence seq = two_frames(0.5, shift);
    const std::vector<RigidTransform> ego(2);
    EXPECT_EQ(label_dynamic_oracle(seq, flow_for(seq, ego[1], shift), ego)[1][1], 0);
    const Vec3 above(0.2500001, 0, 0);
    const FrameSequence seq2 = two_frames(0.5, above);
    EXPECT_EQ(label_dynamic_oracle(seq2, flow_for(seq2, ego[1], above), ego)[1][1], 1);
}

TEST(LabelDynamicOracle, InvariantUnderGlobalRigidTransform) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 0.12);
    for (int trial = 0; trial < 20; ++trial) {
        const Vec3 shift(u(rng), u(rng), 0.0);
        const FrameSequence seq = two_frames(0.1, shift);
        const std::vector<RigidTransform> ego = {RigidTransform(), random_transform(rng)};
        const FlowField flow = flow_for(seq, ego[1], shift);
        const auto base = label_dynamic_oracle(seq, flow, ego);

        const RigidTransform g = random_transform(rng);
        FrameSequence moved = seq;
        FlowField moved_flow = flow;
        for (std::size_t k = 0; k < 2; ++k) {
            moved.frames[k].points = g.apply(seq.frames[k].points);
            for (auto& v : moved_flow.frames[k]) {
                v = g.rotation() * v;
            }
        }
        const std::vector<RigidTransform> moved_ego = {RigidTransform(), g * ego[1] * g.inverse()};
        EXPECT_EQ(label_dynamic_oracle(moved, moved_flow, moved_ego), base);
    }
}

TEST(SegmentMotionResidual, AlignedStaticWallScoresNearZero) {
    FrameSequence seq;
    seq.frames = {wall(4.0, 20), wall(4.0, 20)};
    seq.frames[1].timestamp_index = 2;
    const RigidTransform ego = RigidTransform::from_translation(Vec3(0.5, 0, 0));
    seq.frames[1].points = ego.inverse().apply(seq.frames[0].points);
    const std::vector<RigidTransform> egos = {RigidTransform(), ego};
    const auto s = segment_motion_residual(seq, egos, {});
    for (const auto& frame : s.dynamic) {
        for (const double v : frame) {
            EXPECT_LT(v, 0.01);
        }
    }
}

TEST(SegmentMotionResidual, DisplacedObjectMatchesSigmoidOracle) {
    FrameSequence seq;
    Frame t;
    t.points = {Vec3(0, 0, 0)};
    t.ensure_labels();
    Frame s = t;
    s.timestamp_index = 2;
    s.points[0] = Vec3(1, 0, 0);
    seq.frames = {t, s};
    const std::vector<RigidTransform> egos(2);
    ResidualConfig cfg;
    cfg.radius = 2.0;
    const auto out = segment_motion_residual(seq, egos, {}, cfg);
    const double speed = 1.0 / 0.1;
    const double expected = 1.0 / (1.0 + std::exp(-10.0 * (speed - 0.5)));
    EXPECT_NEAR(out.dynamic[1][0], expected, 1e-12);
    EXPECT_GT(out.dynamic[1][0], 0.9);
    EXPECT_GT(out.dynamic[0][0], 0.9);
}

TEST(SegmentMotionResidual, NoNeighbourScoresOne) {
    FrameSequence seq;
    Frame t;
    t.points = {Vec3(0, 0, 0)};
    t.ensure_labels();
    Frame s = t;
    s.timestamp_index = 2;
    s.points[0] = Vec3(5, 0, 0);
    seq.frames = {t, s};
    const std::vector<RigidTransform> egos(2);
    const auto out = segment_motion_residual(seq, egos, {});
    EXPECT_EQ(out.dynamic[1][0], 1.0);
}

TEST(SegmentMotionResidual, BackgroundIsForcedStaticAndEmptyForegroundIsVacuous) {
    FrameSequence seq;
    Frame t;
    t.points = {Vec3(0, 0, 0), Vec3(1, 1, 1)};
    t.ensure_labels();
    Frame s = t;
    s.timestamp_index = 2;
    s.points = {Vec3(9, 0, 0), Vec3(-9, 1, 1)};
    seq.frames = {t, s};
    const std::vector<RigidTransform> egos(2);
    const std::vector<std::vector<double>> fg = {{0.0, 0.0}, {0.0, 0.7}};
    const auto out = segment_motion_residual(seq, egos, fg);
    EXPECT_EQ(out.dynamic[1][0], 0.0);
    EXPECT_EQ(out.dynamic[1][1], 1.0);
    EXPECT_EQ(out.dynamic[0][0], 0.0);
    EXPECT_EQ(out.dynamic[0][1], 0.0);

    FrameSequence empty;
    empty.frames = {Frame{}, Frame{}};
    empty.frames[1].timestamp_index = 2;
    const auto e = segment_motion_residual(empty, egos, {});
    EXPECT_TRUE(e.dynamic[0].empty());
    EXPECT_TRUE(e.dynamic[1].empty());
}

TEST(SegmentForegroundOracle, CenterInsideFarOutside) {
    const OrientedBox box{Vec3(2, 3, 1), Vec3(4, 2, 1.5), 0.7};
    Frame f;
    f.points = {box.center, box.center + Vec3(0, 0, 1.75)};
    const std::vector<OrientedBox> boxes = {box};
    const auto m = segment_foreground_oracle(f, boxes);
    EXPECT_EQ(m[0], 1);
    EXPECT_EQ(m[1], 0);
}

TEST(SegmentForegroundOracle, MatchesInverseTransformAabbOracle) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.2, 1.2);
    const OrientedBox box{Vec3(-3, 1, 0.5), Vec3(4, 2, 1.5), -1.1};
    const std::vector<OrientedBox> boxes = {box};
    Frame f;
    // Points exactly on the +x face (built in the local frame) and random ones.
    for (int i = 0; i < 20; ++i) {
        f.points.push_back(box.pose().apply(Vec3(2.0, 0.4 * u(rng), 0.5 * u(rng))));
    }
    for (int i = 0; i < 500; ++i) {
        f.points.push_back(box.pose().apply(Vec3(2.5 * u(rng), 1.5 * u(rng), u(rng))));
    }
    const auto m = segment_foreground_oracle(f, boxes);
    const RigidTransform inv = box.pose().inverse();
    for (std::size_t i = 0; i < f.size(); ++i) {
        const Vec3 local = inv.apply(f.points[i]);
        const bool inside = std::abs(local.x()) <= 2.0 + 1e-9 && std::abs(local.y()) <= 1.0 + 1e-9 &&
                            std::abs(local.z()) <= 0.75 + 1e-9;
        EXPECT_EQ(m[i] == 1, inside) << i;
        if (i < 20) {
            EXPECT_EQ(m[i], 1);
        }
    }
}
