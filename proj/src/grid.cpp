#include "rigid_accum/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rigid_accum {

int GridSpec::width() const {
    return static_cast<int>(std::ceil((x_max - x_min) / pillar.x() - 1e-9));
}

int GridSpec::height() const {
    return static_cast<int>(std::ceil((y_max - y_min) / pillar.y() - 1e-9));
}

bool GridSpec::contains(double x, double y) const {
    return x >= x_min && x < x_max && y >= y_min && y < y_max;
}

std::optional<std::size_t> GridSpec::cell_of(double x, double y) const {
    if (!contains(x, y)) {
        return std::nullopt;
    }
    const int c = std::min(width() - 1, static_cast<int>(std::floor((x - x_min) / pillar.x())));
    const int r = std::min(height() - 1, static_cast<int>(std::floor((y - y_min) / pillar.y())));
    return static_cast<std::size_t>(r) * width() + c;
}

Vec2 GridSpec::cell_center(std::size_t cell) const {
    const auto w = static_cast<std::size_t>(width());
    const double c = static_cast<double>(cell % w);
    const double r = static_cast<double>(cell / w);
    return {x_min + (c + 0.5) * pillar.x(), y_min + (r + 0.5) * pillar.y()};
}

void GridSpec::validate() const {
    if (!(pillar.x() > 0.0 && pillar.y() > 0.0 && pillar.z() > 0.0)) {
        throw std::invalid_argument("GridSpec: pillar size must be strictly positive");
    }
    if (!(x_max > x_min && y_max > y_min)) {
        throw std::invalid_argument("GridSpec: extent must be non-empty");
    }
}

Eigen::MatrixXd GeometricFeaturizer::compute(const Frame& frame) const {
    Eigen::MatrixXd f(frame.size(), 4);
    const bool has_intensity = frame.intensity.size() == frame.size();
    for (std::size_t i = 0; i < frame.size(); ++i) {
        const double z = frame.points[i].z();
        f(i, 0) = z;
        f(i, 1) = z * z;
        f(i, 2) = 1.0;
        f(i, 3) = has_intensity ? static_cast<double>(frame.intensity[i]) : 0.0;
    }
    return f;
}

OraclePositionFeaturizer::OraclePositionFeaturizer(std::map<int, PointList> target_positions)
    : positions_(std::move(target_positions)) {}

Eigen::MatrixXd OraclePositionFeaturizer::compute(const Frame& frame) const {
    const auto it = positions_.find(frame.timestamp_index);
    if (it == positions_.end() || it->second.size() != frame.size()) {
        throw std::invalid_argument("OraclePositionFeaturizer: no positions for frame " +
                                    std::to_string(frame.timestamp_index));
    }
    Eigen::MatrixXd f(frame.size(), 3);
    for (std::size_t i = 0; i < frame.size(); ++i) {
        f.row(static_cast<Eigen::Index>(i)) = it->second[i].transpose();
    }
    return f;
}

std::vector<std::size_t> PillarGrid::occupied_cells() const {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] > 0) {
            out.push_back(c);
        }
    }
    return out;
}

namespace {

PillarGrid empty_like(const GridSpec& spec, std::size_t dim) {
    PillarGrid g;
    g.spec = spec;
    g.feature_dim = dim;
    g.counts.assign(spec.cell_count(), 0);
    g.centroids.assign(spec.cell_count(), Vec3::Zero());
    g.features.assign(spec.cell_count() * dim, 0.0);
    return g;
}

bool lex_less(const Vec3& a, const Vec3& b) {
    if (a.x() != b.x()) return a.x() < b.x();
    if (a.y() != b.y()) return a.y() < b.y();
    return a.z() < b.z();
}

}  // namespace

PillarGrid pillarize(const Frame& frame, const GridSpec& spec, const Featurizer& featurizer) {
    spec.validate();
    const Eigen::MatrixXd pf = featurizer.compute(frame);
    const std::size_t dim = featurizer.dim();
    PillarGrid g = empty_like(spec, dim);
    g.point_cell.assign(frame.size(), -1);

    std::vector<std::vector<std::uint32_t>> members(spec.cell_count());
    for (std::size_t i = 0; i < frame.size(); ++i) {
        const Vec3& p = frame.points[i];
        const auto cell = spec.cell_of(p.x(), p.y());
        if (!cell) {
            ++g.dropped;
            continue;
        }
        g.point_cell[i] = static_cast<std::int64_t>(*cell);
        members[*cell].push_back(static_cast<std::uint32_t>(i));
    }
    if (g.dropped == frame.size()) {
        throw EmptyGrid("pillarize: no points inside the grid extent");
    }

    for (std::size_t c = 0; c < members.size(); ++c) {
        auto& m = members[c];
        if (m.empty()) {
            continue;
        }
        // Summation order depends only on coordinates, never on input order.
        std::sort(m.begin(), m.end(), [&](std::uint32_t a, std::uint32_t b) {
            return lex_less(frame.points[a], frame.points[b]);
        });
        Vec3 sum = Vec3::Zero();
        double* feat = g.features.data() + c * dim;
        std::fill(feat, feat + dim, -std::numeric_limits<double>::infinity());
        for (const std::uint32_t i : m) {
            sum += frame.points[i];
            for (std::size_t d = 0; d < dim; ++d) {
                feat[d] = std::max(feat[d], pf(i, static_cast<Eigen::Index>(d)));
            }
        }
        g.counts[c] = static_cast<std::uint32_t>(m.size());
        g.centroids[c] = sum / static_cast<double>(m.size());
    }
    return g;
}

Eigen::VectorXd bilinear_sample(const PillarGrid& grid, const Vec2& query, std::size_t* clamped) {
    const GridSpec& s = grid.spec;
    const int w = s.width();
    const int h = s.height();
    if (!s.contains(query.x(), query.y()) && clamped != nullptr) {
        ++*clamped;
    }
    const double u = std::clamp((query.x() - s.x_min) / s.pillar.x() - 0.5, 0.0, double(w - 1));
    const double v = std::clamp((query.y() - s.y_min) / s.pillar.y() - 0.5, 0.0, double(h - 1));
    const int c0 = std::min(static_cast<int>(std::floor(u)), std::max(w - 2, 0));
    const int r0 = std::min(static_cast<int>(std::floor(v)), std::max(h - 2, 0));
    const int c1 = std::min(c0 + 1, w - 1);
    const int r1 = std::min(r0 + 1, h - 1);
    const double fx = u - c0;
    const double fy = v - r0;

    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.feature_dim));
    auto add = [&](int r, int c, double weight) {
        if (weight == 0.0) {
            return;
        }
        const auto f = grid.feature(static_cast<std::size_t>(r) * w + c);
        for (std::size_t d = 0; d < f.size(); ++d) {
            out(static_cast<Eigen::Index>(d)) += weight * f[d];
        }
    };
    add(r0, c0, (1.0 - fx) * (1.0 - fy));
    add(r0, c1, fx * (1.0 - fy));
    add(r1, c0, (1.0 - fx) * fy);
    add(r1, c1, fx * fy);
    return out;
}

PillarGrid warp_grid(const PillarGrid& grid, const RigidTransform& ego) {
    const GridSpec& s = grid.spec;
    PillarGrid out = empty_like(s, grid.feature_dim);
    const double yaw = ego.yaw();
    const Eigen::Rotation2Dd rot(yaw);
    const Vec2 t2 = ego.translation().head<2>();
    const int w = s.width();
    const int h = s.height();

    for (std::size_t cell = 0; cell < s.cell_count(); ++cell) {
        const Vec2 src = rot.inverse() * (s.cell_center(cell) - t2);
        if (!s.contains(src.x(), src.y())) {
            continue;
        }
        const Eigen::VectorXd f = bilinear_sample(grid, src);
        std::copy(f.data(), f.data() + f.size(), out.features.begin() + cell * grid.feature_dim);

        const int c = std::clamp(static_cast<int>(std::floor((src.x() - s.x_min) / s.pillar.x())), 0, w - 1);
        const int r = std::clamp(static_cast<int>(std::floor((src.y() - s.y_min) / s.pillar.y())), 0, h - 1);
        const std::size_t nearest = static_cast<std::size_t>(r) * w + c;
        out.counts[cell] = grid.counts[nearest];
        if (grid.counts[nearest] > 0) {
            out.centroids[cell] = ego.apply(grid.centroids[nearest]);
        }
    }
    return out;
}

}  // namespace rigid_accum
