#include "rigid_accum/grid.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace rigid_accum;

namespace {

/// Feature = raw (x, y, z) of each point.
class RawPosition final : public Featurizer {
public:
    std::size_t dim() const override { return 3; }
    Eigen::MatrixXd compute(const Frame& frame) const override {
        Eigen::MatrixXd f(frame.size(), 3);
        for (std::size_t i = 0; i < frame.size(); ++i) f.row(i) = frame.points[i].transpose();
        return f;
    }
    std::string name() const override { return "raw"; }
};

/// Feature supplied explicitly per point.
class Explicit final : public Featurizer {
public:
    explicit Explicit(Eigen::MatrixXd f) : f_(std::move(f)) {}
    std::size_t dim() const override { return static_cast<std::size_t>(f_.cols()); }
    Eigen::MatrixXd compute(const Frame&) const override { return f_; }
    std::string name() const override { return "explicit"; }

private:
    Eigen::MatrixXd f_;
};

GridSpec small_spec() {
    GridSpec s;
    s.x_min = 0.0;
    s.x_max = 0.5;
    s.y_min = 0.0;
    s.y_max = 0.5;
    s.pillar = Vec3(0.25, 0.25, 8.0);
    return s;
}

Frame make_frame(PointList pts) {
    Frame f;
    f.points = std::move(pts);
    return f;
}

/// Grid whose per-cell scalar feature is set directly.
PillarGrid scalar_grid(const GridSpec& spec, const std::function<double(std::size_t)>& value) {
    PillarGrid g;
    g.spec = spec;
    g.feature_dim = 1;
    g.counts.assign(spec.cell_count(), 1);
    g.centroids.assign(spec.cell_count(), Vec3::Zero());
    g.features.resize(spec.cell_count());
    for (std::size_t c = 0; c < spec.cell_count(); ++c) {
        const Vec2 ctr = spec.cell_center(c);
        g.centroids[c] = Vec3(ctr.x(), ctr.y(), 0.0);
        g.features[c] = value(c);
    }
    return g;
}

}  // namespace

TEST(Pillarize, SinglePointAtCellCenter) {
    const Frame f = make_frame({Vec3(0.125, 0.375, 1.5)});
    const PillarGrid g = pillarize(f, small_spec(), RawPosition());
    const std::size_t cell = *small_spec().cell_of(0.125, 0.375);
    EXPECT_EQ(g.counts[cell], 1U);
    EXPECT_EQ(g.centroids[cell], Vec3(0.125, 0.375, 1.5));
    const auto feat = g.feature(cell);
    EXPECT_EQ(feat[0], 0.125);
    EXPECT_EQ(feat[1], 0.375);
    EXPECT_EQ(feat[2], 1.5);
    for (std::size_t c = 0; c < g.counts.size(); ++c) {
        if (c == cell) continue;
        EXPECT_FALSE(g.occupied(c));
        for (double v : g.feature(c)) EXPECT_EQ(v, 0.0);
    }
}

TEST(Pillarize, MaxPoolsFeatures) {
    const Frame f = make_frame({Vec3(0.1, 0.1, 0), Vec3(0.2, 0.05, 0)});
    Eigen::MatrixXd feats(2, 3);
    feats << 1, 0, 0, 0, 2, 0;
    const PillarGrid g = pillarize(f, small_spec(), Explicit(feats));
    const auto pooled = g.feature(0);
    EXPECT_EQ(pooled[0], 1.0);
    EXPECT_EQ(pooled[1], 2.0);
    EXPECT_EQ(pooled[2], 0.0);
    EXPECT_LT((g.centroids[0] - Vec3(0.15, 0.075, 0)).norm(), 1e-15);
}

TEST(Pillarize, CountsMatchNestedLoopBinning) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 0.5);
    PointList pts;
    for (int i = 0; i < 100; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
    pts.emplace_back(0.7, 0.1, 0.0);  // outside
    const GridSpec spec = small_spec();
    const PillarGrid g = pillarize(make_frame(pts), spec, GeometricFeaturizer());

    // Oracle: test every point against every cell's bounds independently.
    std::vector<std::uint32_t> oracle(spec.cell_count(), 0);
    for (int r = 0; r < spec.height(); ++r) {
        for (int c = 0; c < spec.width(); ++c) {
            const double x0 = spec.x_min + c * spec.pillar.x();
            const double y0 = spec.y_min + r * spec.pillar.y();
            for (const auto& p : pts) {
                if (p.x() >= x0 && p.x() < x0 + spec.pillar.x() && p.y() >= y0 && p.y() < y0 + spec.pillar.y()) {
                    ++oracle[r * spec.width() + c];
                }
            }
        }
    }
    EXPECT_EQ(g.counts, oracle);
    EXPECT_EQ(g.dropped, 1U);
    EXPECT_EQ(g.point_cell.back(), -1);
}

TEST(Pillarize, EmptyGridThrows) {
    EXPECT_THROW(pillarize(make_frame({Vec3(5, 5, 0)}), small_spec(), GeometricFeaturizer()), EmptyGrid);
}

TEST(Pillarize, RejectsNonPositivePillar) {
    GridSpec s = small_spec();
    s.pillar.x() = 0.0;
    EXPECT_THROW(pillarize(make_frame({Vec3(0.1, 0.1, 0)}), s, GeometricFeaturizer()), std::invalid_argument);
}

TEST(Pillarize, PermutationInvariantBitExact) {
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    PointList pts;
    for (int i = 0; i < 2000; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
    GridSpec spec;
    spec.x_min = spec.y_min = -3.0;
    spec.x_max = spec.y_max = 3.0;
    const PillarGrid a = pillarize(make_frame(pts), spec, GeometricFeaturizer());
    for (int trial = 0; trial < 3; ++trial) {
        std::shuffle(pts.begin(), pts.end(), rng);
        const PillarGrid b = pillarize(make_frame(pts), spec, GeometricFeaturizer());
        EXPECT_EQ(a.counts, b.counts);
        EXPECT_EQ(a.features, b.features);
        for (std::size_t c = 0; c < a.centroids.size(); ++c) {
            ASSERT_EQ(a.centroids[c], b.centroids[c]);
        }
    }
}

TEST(BilinearSample, CellCenterReturnsCellFeature) {
    const GridSpec spec = small_spec();
    const PillarGrid g = scalar_grid(spec, [](std::size_t c) { return 10.0 + c; });
    for (std::size_t c = 0; c < spec.cell_count(); ++c) {
        EXPECT_NEAR(bilinear_sample(g, spec.cell_center(c))(0), 10.0 + c, 1e-12);
    }
}

TEST(BilinearSample, MidpointOfHorizontalNeighbors) {
    const GridSpec spec = small_spec();
    // Column 0 -> 0, column 1 -> 1.
    const PillarGrid g = scalar_grid(spec, [&](std::size_t c) { return double(c % spec.width()); });
    EXPECT_NEAR(bilinear_sample(g, Vec2(0.25, 0.125))(0), 0.5, 1e-12);
}

TEST(BilinearSample, MatchesFourTermFormula) {
    GridSpec spec;
    spec.x_min = spec.y_min = -2.0;
    spec.x_max = spec.y_max = 2.0;
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> val(-5.0, 5.0);
    std::vector<double> table(spec.cell_count());
    for (auto& v : table) v = val(rng);
    const PillarGrid g = scalar_grid(spec, [&](std::size_t c) { return table[c]; });
    const int w = spec.width();
    std::uniform_real_distribution<double> q(-2.0 + 0.125, 2.0 - 0.125);
    for (int i = 0; i < 200; ++i) {
        const Vec2 p(q(rng), q(rng));
        // Locate the four surrounding centers directly.
        const double gx = (p.x() + 2.0) / 0.25 - 0.5;
        const double gy = (p.y() + 2.0) / 0.25 - 0.5;
        const int c0 = std::min(int(std::floor(gx)), w - 2);
        const int r0 = std::min(int(std::floor(gy)), spec.height() - 2);
        const double dx = gx - c0;
        const double dy = gy - r0;
        const double oracle = (1 - dx) * (1 - dy) * table[r0 * w + c0] + dx * (1 - dy) * table[r0 * w + c0 + 1] +
                              (1 - dx) * dy * table[(r0 + 1) * w + c0] + dx * dy * table[(r0 + 1) * w + c0 + 1];
        EXPECT_NEAR(bilinear_sample(g, p)(0), oracle, 1e-12);
    }
}

TEST(BilinearSample, ExactOnAffineFields) {
    GridSpec spec;
    spec.x_min = -3.0;
    spec.x_max = 2.0;
    spec.y_min = -1.0;
    spec.y_max = 4.0;
    auto field = [](const Vec2& p) { return 1.7 * p.x() - 0.4 * p.y() + 3.0; };
    const PillarGrid g = scalar_grid(spec, [&](std::size_t c) { return field(spec.cell_center(c)); });
    std::mt19937_64 rng(24);
    std::uniform_real_distribution<double> ux(-3.0 + 0.125, 2.0 - 0.125);
    std::uniform_real_distribution<double> uy(-1.0 + 0.125, 4.0 - 0.125);
    for (int i = 0; i < 200; ++i) {
        const Vec2 p(ux(rng), uy(rng));
        EXPECT_NEAR(bilinear_sample(g, p)(0), field(p), 1e-9);
    }
}

TEST(BilinearSample, OutsideQueriesClampAndCount) {
    const GridSpec spec = small_spec();
    const PillarGrid g = scalar_grid(spec, [](std::size_t c) { return double(c); });
    std::size_t clamped = 0;
    const double v = bilinear_sample(g, Vec2(-10.0, -10.0), &clamped)(0);
    EXPECT_EQ(clamped, 1U);
    EXPECT_EQ(v, 0.0);
    bilinear_sample(g, Vec2(0.2, 0.2), &clamped);
    EXPECT_EQ(clamped, 1U);
}

TEST(WarpGrid, IdentityLeavesGridUnchanged) {
    std::mt19937_64 rng(25);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    PointList pts;
    for (int i = 0; i < 300; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
    GridSpec spec;
    spec.x_min = spec.y_min = -2.0;
    spec.x_max = spec.y_max = 2.0;
    const PillarGrid g = pillarize(make_frame(pts), spec, GeometricFeaturizer());
    const PillarGrid w = warp_grid(g, RigidTransform::identity());
    EXPECT_EQ(w.counts, g.counts);
    for (std::size_t i = 0; i < g.features.size(); ++i) EXPECT_NEAR(w.features[i], g.features[i], 1e-9);
}

TEST(WarpGrid, OnePillarShiftMovesColumns) {
    GridSpec spec;
    spec.x_min = spec.y_min = 0.0;
    spec.x_max = spec.y_max = 1.0;
    const PillarGrid g = scalar_grid(spec, [](std::size_t c) { return 1.0 + c; });
    const PillarGrid w = warp_grid(g, RigidTransform::from_translation({0.25, 0.0, 0.0}));
    const int wd = spec.width();
    for (int r = 0; r < spec.height(); ++r) {
        EXPECT_FALSE(w.occupied(r * wd));
        EXPECT_EQ(w.features[r * wd], 0.0);
        for (int c = 1; c < wd; ++c) {
            EXPECT_NEAR(w.features[r * wd + c], g.features[r * wd + c - 1], 1e-12);
        }
    }
}

TEST(WarpGrid, HalfPillarShiftOnStepGrid) {
    GridSpec spec;
    spec.x_min = spec.y_min = 0.0;
    spec.x_max = spec.y_max = 1.0;
    // Step: columns 0,1 -> 0; columns 2,3 -> 4.
    const PillarGrid g = scalar_grid(spec, [&](std::size_t c) { return (c % spec.width()) >= 2 ? 4.0 : 0.0; });
    const PillarGrid w = warp_grid(g, RigidTransform::from_translation({0.125, 0.0, 0.0}));
    // Pre-image of column c's center is half a cell to the left: blend of c-1 and c.
    const double expected[] = {0.0 /*clamped to column 0*/, 0.0, 2.0, 4.0};
    for (int r = 0; r < spec.height(); ++r) {
        for (int c = 0; c < 4; ++c) {
            EXPECT_NEAR(w.features[r * 4 + c], expected[c], 1e-12) << "c=" << c;
        }
    }
}
