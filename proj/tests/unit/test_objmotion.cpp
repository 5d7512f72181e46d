#include "rigid_accum/objmotion.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rigid_accum;

namespace {

// Points on the faces of an axis-aligned box of extents `dims` centred at c.
PointList box_surface(std::mt19937_64& rng, const Vec3& c, const Vec3& dims, int n) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    std::uniform_int_distribution<int> face(0, 5);
    PointList pts;
    for (int i = 0; i < n; ++i) {
        Vec3 p(u(rng) * dims.x(), u(rng) * dims.y(), u(rng) * dims.z());
        const int f = face(rng);
        const int axis = f / 2;
        p[axis] = (f % 2 == 0 ? -0.5 : 0.5) * dims[axis];
        pts.push_back(c + p);
    }
    return pts;
}

PointList ground_and_walls(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(-15.0, 15.0);
    std::uniform_real_distribution<double> h(0.0, 3.0);
    PointList pts;
    for (int i = 0; i < n; ++i) {
        switch (i % 3) {
            case 0: pts.emplace_back(u(rng), u(rng), 0.0); break;
            case 1: pts.emplace_back(u(rng), 10.0, h(rng)); break;
            default: pts.emplace_back(-7.0, u(rng), h(rng)); break;
        }
    }
    return pts;
}

}  // namespace

TEST(CentroidInit, IdenticalSetsGiveIdentity) {
    std::mt19937_64 rng(1);
    const PointList p = box_surface(rng, Vec3(1, 2, 0), Vec3(4, 2, 1.5), 100);
    const RigidTransform t = centroid_init(p, p);
    EXPECT_LT(t.translation().norm(), 1e-12);
    EXPECT_LT(t.rotation_distance(RigidTransform()), 1e-12);
}

TEST(CentroidInit, MapsSourceCentroidOntoTarget) {
    std::mt19937_64 rng(2);
    const PointList target = box_surface(rng, Vec3(0, 0, 0), Vec3(4, 2, 1.5), 100);
    PointList source = target;
    for (auto& p : source) {
        p += Vec3(0, 3, 0);
    }
    const RigidTransform t = centroid_init(source, target);
    EXPECT_LT((t.translation() - Vec3(0, -3, 0)).norm(), 1e-12);
}

TEST(CentroidInit, HalfVisibilityBiasesTranslation) {
    std::mt19937_64 rng(3);
    const PointList target = box_surface(rng, Vec3(0, 0, 0), Vec3(4, 2, 1.5), 400);
    const Vec3 motion(1.0, 0.0, 0.0);
    PointList source;
    for (const auto& p : target) {
        if (p.x() > 0.0) {
            source.push_back(p - motion);
        }
    }
    const RigidTransform t = centroid_init(source, target);
    // The estimate is the centroid difference, which is not the true motion.
    Vec3 cs = Vec3::Zero();
    for (const auto& p : source) {
        cs += p;
    }
    cs /= static_cast<double>(source.size());
    Vec3 ct = Vec3::Zero();
    for (const auto& p : target) {
        ct += p;
    }
    ct /= static_cast<double>(target.size());
    EXPECT_LT((t.translation() - (ct - cs)).norm(), 1e-12);
    EXPECT_GT((t.translation() - motion).norm(), 0.5);
}

TEST(CentroidInit, EmptyTargetThrows) {
    const PointList p = {Vec3(0, 0, 0)};
    EXPECT_THROW(centroid_init(p, PointList{}), MissingTargetObservation);
}

TEST(Icp, IdenticalSetsStayAtIdentity) {
    std::mt19937_64 rng(4);
    const PointList p = box_surface(rng, Vec3(0, 0, 0), Vec3(4, 2, 1.5), 300);
    const IcpResult r = icp_refine(p, p, RigidTransform());
    EXPECT_LT(r.transform.translation().norm(), 1e-9);
    EXPECT_LT(r.transform.rotation_distance(RigidTransform()), 1e-9);
}

TEST(Icp, RecoversTransformWithinBasin) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ang(-0.3, 0.3);
    std::uniform_real_distribution<double> tr(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const PointList src = box_surface(rng, Vec3(0, 0, 0.75), Vec3(4, 2, 1.5), 1500);
        const RigidTransform truth = RigidTransform::from_yaw(ang(rng), Vec3(tr(rng), tr(rng), 0.1 * tr(rng)));
        const PointList tgt = truth.apply(src);
        IcpConfig cfg;
        cfg.max_corr_dist = 3.0;
        cfg.max_iters = 100;
        const IcpResult r = icp_refine(src, tgt, RigidTransform(), cfg);
        EXPECT_LT(r.transform.translation_distance(truth), 1e-6) << trial;
        EXPECT_LT(r.transform.rotation_distance(truth), 1e-6) << trial;
    }
}

TEST(Icp, DisjointSetsFallBackToInitialGuess) {
    std::mt19937_64 rng(6);
    const PointList a = box_surface(rng, Vec3(0, 0, 0), Vec3(1, 1, 1), 100);
    const PointList b = box_surface(rng, Vec3(50, 0, 0), Vec3(1, 1, 1), 100);
    const RigidTransform init = RigidTransform::from_yaw(0.2, Vec3(1, 2, 3));
    const IcpResult r = icp_refine(a, b, init);
    EXPECT_TRUE(r.fell_back);
    EXPECT_EQ(r.transform.matrix(), init.matrix());
}

TEST(Icp, ResidualIsNonIncreasing) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const PointList src = box_surface(rng, Vec3(0, 0, 0), Vec3(4, 2, 1.5), 800);
        const RigidTransform truth = RigidTransform::from_yaw(0.1, Vec3(0.2, -0.1, 0.0));
        const PointList tgt = truth.apply(src);
        IcpConfig cfg;
        cfg.max_corr_dist = 1.0;
        const IcpResult r = icp_refine(src, tgt, RigidTransform(), cfg);
        for (std::size_t i = 1; i < r.residuals.size(); ++i) {
            EXPECT_LE(r.residuals[i], r.residuals[i - 1] + 1e-12) << trial << " " << i;
        }
    }
}

namespace {

struct ObjectScene {
    FrameSequence seq;
    std::vector<RigidTransform> ego;
    InstanceLabeling labeling;
};

// Target frame: background + one box (instance 1). Source frame: the same
// points with the box moved by `motion` and everything expressed in a sensor
// frame displaced by `ego`.
ObjectScene object_scene(std::mt19937_64& rng, const RigidTransform& motion, const RigidTransform& ego,
                         int object_points = 1500) {
    ObjectScene s;
    const PointList bg = ground_and_walls(rng, 3000);
    const PointList obj = box_surface(rng, Vec3(3, 2, 0.75), Vec3(4, 2, 1.5), object_points);
    Frame t;
    t.points = bg;
    t.points.insert(t.points.end(), obj.begin(), obj.end());
    t.ensure_labels();
    Frame src = t;
    src.timestamp_index = 2;
    // Ego-aligned source object points are motion^-1 applied to target points.
    PointList moved_obj = motion.inverse().apply(obj);
    PointList aligned = bg;
    aligned.insert(aligned.end(), moved_obj.begin(), moved_obj.end());
    src.points = ego.inverse().apply(aligned);
    s.seq.frames = {t, src};
    s.ego = {RigidTransform(), ego};
    s.labeling.labels.resize(2);
    for (int k = 0; k < 2; ++k) {
        s.labeling.labels[k].assign(t.size(), 0);
        for (std::size_t i = bg.size(); i < t.size(); ++i) {
            s.labeling.labels[k][i] = 1;
        }
    }
    s.labeling.clusters = 1;
    return s;
}

}  // namespace

TEST(ObjectMotions, StaticObjectGivesIdentity) {
    std::mt19937_64 rng(8);
    const ObjectScene s = object_scene(rng, RigidTransform(), RigidTransform::from_yaw(0.05, Vec3(1, 0, 0)));
    const ObjectMotionResult r = estimate_object_motions(s.labeling, s.seq, s.ego);
    const auto* t = r.motions.find(1, 1);
    ASSERT_NE(t, nullptr);
    ASSERT_TRUE(t->has_value());
    EXPECT_LT((*t)->translation().norm(), 1e-6);
    EXPECT_LT((*t)->rotation_distance(RigidTransform()), 1e-6);
}

TEST(ObjectMotions, RotatingTranslatingBoxRecovered) {
    std::mt19937_64 rng(9);
    const RigidTransform motion = compose(RigidTransform::from_translation(Vec3(3, 2, 0)),
                                          compose(RigidTransform::from_yaw(0.08, Vec3(0.9, 0.3, 0)),
                                                  RigidTransform::from_translation(Vec3(-3, -2, 0))));
    const ObjectScene s = object_scene(rng, motion, RigidTransform::from_yaw(-0.03, Vec3(2, 0.5, 0)));
    ObjectMotionConfig cfg;
    cfg.icp.max_iters = 60;
    const ObjectMotionResult r = estimate_object_motions(s.labeling, s.seq, s.ego, cfg);
    const auto* t = r.motions.find(1, 1);
    ASSERT_NE(t, nullptr);
    EXPECT_LT((*t)->translation_distance(motion), 1e-4);
    EXPECT_LT((*t)->rotation_distance(motion), 1e-4);
    EXPECT_TRUE(r.diagnostics.empty());
    // The target frame maps to itself.
    EXPECT_LT(r.motions.find(1, 0)->value().translation().norm(), 1e-15);
}

TEST(ObjectMotions, TwoPointInstanceFallsBackToCentroid) {
    FrameSequence seq;
    Frame t;
    t.points = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(5, 5, 0)};
    t.ensure_labels();
    Frame s = t;
    s.timestamp_index = 2;
    s.points = {Vec3(0, 1, 0), Vec3(1, 1, 0), Vec3(5, 5, 0)};
    seq.frames = {t, s};
    InstanceLabeling lab;
    lab.labels = {{1, 1, 0}, {1, 1, 0}};
    lab.clusters = 1;
    const std::vector<RigidTransform> ego(2);
    const ObjectMotionResult r = estimate_object_motions(lab, seq, ego);
    EXPECT_LT((r.motions.find(1, 1)->value().translation() - Vec3(0, -1, 0)).norm(), 1e-12);
    ASSERT_EQ(r.diagnostics.size(), 1U);
    EXPECT_EQ(r.diagnostics[0].instance, 1U);
    EXPECT_EQ(r.diagnostics[0].frame, 1U);
}

TEST(RefineEgoIcp, ExactEgoIsUnchanged) {
    std::mt19937_64 rng(10);
    const PointList tgt = ground_and_walls(rng, 4000);
    const RigidTransform ego = RigidTransform::from_yaw(0.04, Vec3(1.3, 0.2, 0.0));
    const PointList src = ego.inverse().apply(tgt);
    const IcpResult r = refine_ego_icp(src, tgt, ego, 0.1);
    EXPECT_LT(r.transform.translation_distance(ego), 1e-9);
    EXPECT_LT(r.transform.rotation_distance(ego), 1e-9);
}

TEST(RefineEgoIcp, FiveCentimetrePerturbationMostlyRemoved) {
    std::mt19937_64 rng(11);
    const PointList tgt = ground_and_walls(rng, 6000);
    const RigidTransform ego = RigidTransform::from_yaw(0.04, Vec3(1.3, 0.2, 0.0));
    const PointList src = ego.inverse().apply(tgt);
    const RigidTransform perturbed = compose(RigidTransform::from_translation(Vec3(0.03, -0.04, 0.0)), ego);
    const double before = perturbed.translation_distance(ego);
    const IcpResult r = refine_ego_icp(src, tgt, perturbed, 0.1);
    EXPECT_LE(r.transform.translation_distance(ego), 0.1 * before);
}

TEST(RefineEgoIcp, DynamicContaminationDegradesEstimate) {
    std::mt19937_64 rng(12);
    const PointList bg = ground_and_walls(rng, 4000);
    const RigidTransform ego = RigidTransform::from_yaw(0.02, Vec3(1.0, 0.0, 0.0));
    // A large moving body: 30% of the points, moving 8 cm between frames.
    const PointList body = box_surface(rng, Vec3(2, -3, 1.0), Vec3(6, 3, 2), 1700);
    const RigidTransform body_motion = RigidTransform::from_translation(Vec3(0.08, 0.0, 0.0));
    PointList tgt_all = bg;
    tgt_all.insert(tgt_all.end(), body.begin(), body.end());
    PointList src_aligned = bg;
    const PointList body_src = body_motion.inverse().apply(body);
    src_aligned.insert(src_aligned.end(), body_src.begin(), body_src.end());
    const PointList src_all = ego.inverse().apply(src_aligned);
    const PointList src_static = ego.inverse().apply(bg);

    const RigidTransform perturbed = compose(RigidTransform::from_translation(Vec3(0.04, 0.0, 0.0)), ego);
    const double clean = refine_ego_icp(src_static, bg, perturbed, 0.1).transform.translation_distance(ego);
    const double dirty = refine_ego_icp(src_all, tgt_all, perturbed, 0.1).transform.translation_distance(ego);
    EXPECT_LT(clean, 1e-6);
    EXPECT_GT(dirty, clean);
}
