#include "rigid_accum/spatial_index.hpp"

#include <algorithm>
#include <cmath>

namespace rigid_accum {

SpatialHash::SpatialHash(std::span<const Vec3> points, double cell_size)
    : points_(points.begin(), points.end()), cell_(cell_size) {
    if (!(cell_size > 0.0)) {
        throw std::invalid_argument("SpatialHash: cell size must be positive");
    }
    for (std::size_t i = 0; i < points_.size(); ++i) {
        const Eigen::Vector3i c = cell_of(points_[i]);
        if (i == 0) {
            lo_ = hi_ = c;
        } else {
            lo_ = lo_.cwiseMin(c);
            hi_ = hi_.cwiseMax(c);
        }
        cells_[key_of(c)].push_back(static_cast<std::uint32_t>(i));
    }
}

Eigen::Vector3i SpatialHash::cell_of(const Vec3& p) const {
    return Eigen::Vector3i(static_cast<int>(std::floor(p.x() / cell_)),
                           static_cast<int>(std::floor(p.y() / cell_)),
                           static_cast<int>(std::floor(p.z() / cell_)));
}

SpatialHash::Key SpatialHash::key_of(const Eigen::Vector3i& c) {
    constexpr std::uint64_t mask = (1ULL << 21) - 1;
    return ((static_cast<std::uint64_t>(c.x()) & mask) << 42) |
           ((static_cast<std::uint64_t>(c.y()) & mask) << 21) |
           (static_cast<std::uint64_t>(c.z()) & mask);
}

const std::vector<std::uint32_t>* SpatialHash::bucket(const Eigen::Vector3i& c) const {
    const auto it = cells_.find(key_of(c));
    return it == cells_.end() ? nullptr : &it->second;
}

std::optional<SpatialHash::Neighbor> SpatialHash::nearest(const Vec3& query, double max_radius) const {
    if (points_.empty()) {
        return std::nullopt;
    }
    const Eigen::Vector3i c = cell_of(query);
    // Rings beyond this radius cannot hold any point of the set.
    const Eigen::Vector3i span_lo = (c - hi_).cwiseAbs();
    const Eigen::Vector3i span_hi = (c - lo_).cwiseAbs();
    const int max_ring_data = span_lo.cwiseMax(span_hi).maxCoeff();
    int max_ring = max_ring_data;
    if (std::isfinite(max_radius)) {
        max_ring = std::min(max_ring, static_cast<int>(std::ceil(max_radius / cell_)) + 1);
    }

    Neighbor best;
    bool found = false;
    for (int ring = 0; ring <= max_ring; ++ring) {
        // Any point in ring r is at least (r - 1) * cell away from the query.
        if (found && static_cast<double>(ring - 1) * cell_ > best.distance) {
            break;
        }
        for (int dx = -ring; dx <= ring; ++dx) {
            for (int dy = -ring; dy <= ring; ++dy) {
                for (int dz = -ring; dz <= ring; ++dz) {
                    if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) {
                        continue;
                    }
                    const auto* b = bucket(c + Eigen::Vector3i(dx, dy, dz));
                    if (b == nullptr) {
                        continue;
                    }
                    for (const std::uint32_t idx : *b) {
                        const double d = (points_[idx] - query).norm();
                        if (d > max_radius) {
                            continue;
                        }
                        if (!found || d < best.distance || (d == best.distance && idx < best.index)) {
                            best = {idx, d};
                            found = true;
                        }
                    }
                }
            }
        }
    }
    if (!found) {
        return std::nullopt;
    }
    return best;
}

std::vector<std::size_t> SpatialHash::radius_search(const Vec3& query, double radius) const {
    std::vector<std::size_t> out;
    const Eigen::Vector3i lo = cell_of(query - Vec3::Constant(radius));
    const Eigen::Vector3i hi = cell_of(query + Vec3::Constant(radius));
    for (int x = lo.x(); x <= hi.x(); ++x) {
        for (int y = lo.y(); y <= hi.y(); ++y) {
            for (int z = lo.z(); z <= hi.z(); ++z) {
                const auto* b = bucket(Eigen::Vector3i(x, y, z));
                if (b == nullptr) {
                    continue;
                }
                for (const std::uint32_t idx : *b) {
                    if ((points_[idx] - query).norm() <= radius) {
                        out.push_back(idx);
                    }
                }
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace rigid_accum
