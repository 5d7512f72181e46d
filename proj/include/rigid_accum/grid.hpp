#pragma once

#include "rigid_accum/core.hpp"

#include <Eigen/Core>

#include <map>
#include <memory>
#include <string>

namespace rigid_accum {

class EmptyGrid : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// BEV extent and pillar dimensions. Cells are indexed row-major with rows
/// along y and columns along x; cell (r, c) covers
/// [x_min + c*dx, x_min + (c+1)*dx) x [y_min + r*dy, y_min + (r+1)*dy).
struct GridSpec {
    double x_min = -40.0;
    double x_max = 40.0;
    double y_min = -40.0;
    double y_max = 40.0;
    Vec3 pillar{0.25, 0.25, 8.0};

    int width() const;
    int height() const;
    std::size_t cell_count() const { return static_cast<std::size_t>(width()) * height(); }
    bool contains(double x, double y) const;
    std::optional<std::size_t> cell_of(double x, double y) const;
    Vec2 cell_center(std::size_t cell) const;
    void validate() const;
};

/// Per-point feature provider pooled into pillars.
class Featurizer {
public:
    virtual ~Featurizer() = default;
    virtual std::size_t dim() const = 0;
    /// One row per point of `frame`.
    virtual Eigen::MatrixXd compute(const Frame& frame) const = 0;
    virtual std::string name() const = 0;
};

/// (z, z^2, 1, intensity): pooled cells encode height statistics and occupancy.
class GeometricFeaturizer final : public Featurizer {
public:
    std::size_t dim() const override { return 4; }
    Eigen::MatrixXd compute(const Frame& frame) const override;
    std::string name() const override { return "geometric"; }
};

/// Feature = ground-truth position of each point in the target frame.
/// Keyed by frame timestamp index; testing and oracle runs only.
class OraclePositionFeaturizer final : public Featurizer {
public:
    explicit OraclePositionFeaturizer(std::map<int, PointList> target_positions);
    std::size_t dim() const override { return 3; }
    Eigen::MatrixXd compute(const Frame& frame) const override;
    std::string name() const override { return "oracle-position"; }

private:
    std::map<int, PointList> positions_;
};

struct PillarGrid {
    GridSpec spec;
    std::size_t feature_dim = 0;
    std::vector<std::uint32_t> counts;
    PointList centroids;
    /// cell_count x feature_dim, row-major.
    std::vector<double> features;
    /// Cell of every input point; -1 for points outside the extent.
    std::vector<std::int64_t> point_cell;
    std::size_t dropped = 0;

    bool occupied(std::size_t cell) const { return counts[cell] > 0; }
    std::span<const double> feature(std::size_t cell) const {
        return {features.data() + cell * feature_dim, feature_dim};
    }
    std::vector<std::size_t> occupied_cells() const;
};

/// Scatters points into pillars: per-cell feature is the elementwise max over
/// member features, centroid the arithmetic mean. Throws EmptyGrid if no
/// point falls inside the extent.
PillarGrid pillarize(const Frame& frame, const GridSpec& spec, const Featurizer& featurizer);

/// Bilinear interpolation of cell features at a BEV location using cell-center
/// coordinates. Queries outside the extent are clamped to the border and
/// counted in `clamped` when provided.
Eigen::VectorXd bilinear_sample(const PillarGrid& grid, const Vec2& query,
                                std::size_t* clamped = nullptr);

/// Resamples the grid into ego-compensated coordinates using the yaw and
/// planar translation of `ego`. Cells whose pre-image leaves the extent are empty.
PillarGrid warp_grid(const PillarGrid& grid, const RigidTransform& ego);

}  // namespace rigid_accum
