#pragma once

#include "rigid_accum/core.hpp"

#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

namespace rigid_accum {

/// Uniform hash grid over a fixed point set. Read-only after construction,
/// so concurrent queries are safe.
class SpatialHash {
public:
    SpatialHash(std::span<const Vec3> points, double cell_size);

    struct Neighbor {
        std::size_t index = 0;
        double distance = std::numeric_limits<double>::infinity();
    };

    /// Nearest point within `max_radius` (inclusive). Ties go to the lowest
    /// index. Returns nullopt when nothing lies within the radius.
    std::optional<Neighbor> nearest(const Vec3& query,
                                    double max_radius = std::numeric_limits<double>::infinity()) const;

    /// Indices of all points with distance <= radius, ascending.
    std::vector<std::size_t> radius_search(const Vec3& query, double radius) const;

    std::size_t size() const { return points_.size(); }
    const Vec3& point(std::size_t i) const { return points_[i]; }

private:
    using Key = std::uint64_t;
    Eigen::Vector3i cell_of(const Vec3& p) const;
    static Key key_of(const Eigen::Vector3i& c);
    const std::vector<std::uint32_t>* bucket(const Eigen::Vector3i& c) const;

    PointList points_;
    double cell_;
    Eigen::Vector3i lo_ = Eigen::Vector3i::Zero();
    Eigen::Vector3i hi_ = Eigen::Vector3i::Zero();
    std::unordered_map<Key, std::vector<std::uint32_t>> cells_;
};

}  // namespace rigid_accum
