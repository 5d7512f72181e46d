#include "rigid_accum/assoc.hpp"

#include "rigid_accum/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <tuple>
#include <unordered_map>

namespace rigid_accum {

MissingCentroid::MissingCentroid(std::uint32_t id)
    : std::runtime_error("no target-frame centroid for instance " + std::to_string(id)), instance(id) {}

namespace {

struct KeyHash {
    std::size_t operator()(const std::tuple<std::int64_t, std::int64_t, std::int64_t>& k) const {
        std::uint64_t h = 1469598103934665603ULL;
        for (const std::int64_t v : {std::get<0>(k), std::get<1>(k), std::get<2>(k)}) {
            h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        }
        return static_cast<std::size_t>(h);
    }
};

}  // namespace

VoxelSet voxel_downsample(std::span<const Vec3> points, double voxel) {
    if (!(voxel > 0.0)) {
        throw std::invalid_argument("voxel_downsample: voxel size must be positive");
    }
    VoxelSet out;
    out.point_voxel.resize(points.size());
    std::unordered_map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, std::size_t, KeyHash> index;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto key = std::make_tuple(static_cast<std::int64_t>(std::floor(points[i].x() / voxel)),
                                         static_cast<std::int64_t>(std::floor(points[i].y() / voxel)),
                                         static_cast<std::int64_t>(std::floor(points[i].z() / voxel)));
        auto [it, inserted] = index.emplace(key, out.members.size());
        if (inserted) {
            out.members.emplace_back();
        }
        out.members[it->second].push_back(i);
        out.point_voxel[i] = it->second;
    }
    out.representatives.reserve(out.members.size());
    for (const auto& m : out.members) {
        Vec3 acc = Vec3::Zero();
        for (const std::size_t i : m) {
            acc += points[i];
        }
        out.representatives.push_back(acc / static_cast<double>(m.size()));
    }
    return out;
}

OffsetField compute_gt_offsets(const std::vector<PointList>& points, const FrameLabels& ids,
                               const std::map<std::uint32_t, Vec3>& centroids) {
    if (points.size() != ids.size()) {
        throw std::invalid_argument("compute_gt_offsets: frame counts differ");
    }
    OffsetField out(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        if (points[k].size() != ids[k].size()) {
            throw std::invalid_argument("compute_gt_offsets: label count does not match points");
        }
        out[k].assign(points[k].size(), Vec3::Zero());
        for (std::size_t i = 0; i < points[k].size(); ++i) {
            if (ids[k][i] == 0) {
                continue;
            }
            const auto it = centroids.find(ids[k][i]);
            if (it == centroids.end()) {
                throw MissingCentroid(ids[k][i]);
            }
            out[k][i] = it->second - points[k][i];
        }
    }
    return out;
}

std::vector<std::uint32_t> dbscan(std::span<const Vec3> points, double eps, std::size_t min_pts) {
    if (!(eps > 0.0) || min_pts < 1) {
        throw std::invalid_argument("dbscan: eps must be positive and min_pts >= 1");
    }
    constexpr std::uint32_t kUnvisited = 0xffffffffU;
    std::vector<std::uint32_t> label(points.size(), kUnvisited);
    if (points.empty()) {
        return {};
    }
    const SpatialHash index(points, eps);
    std::uint32_t next = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (label[i] != kUnvisited) {
            continue;
        }
        const auto seeds = index.radius_search(points[i], eps);
        if (seeds.size() < min_pts) {
            label[i] = 0;
            continue;
        }
        const std::uint32_t id = ++next;
        label[i] = id;
        std::deque<std::size_t> queue(seeds.begin(), seeds.end());
        while (!queue.empty()) {
            const std::size_t j = queue.front();
            queue.pop_front();
            if (label[j] == 0) {
                label[j] = id;  // border point previously marked noise
                continue;
            }
            if (label[j] != kUnvisited) {
                continue;
            }
            label[j] = id;
            const auto nb = index.radius_search(points[j], eps);
            if (nb.size() >= min_pts) {
                for (const std::size_t q : nb) {
                    if (label[q] == kUnvisited || label[q] == 0) {
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    // Number clusters by their lowest member index.
    std::vector<std::uint32_t> remap(next + 1, 0);
    std::uint32_t k = 0;
    for (auto& l : label) {
        if (l != 0) {
            if (remap[l] == 0) {
                remap[l] = ++k;
            }
            l = remap[l];
        }
    }
    return label;
}

InstanceLabeling relabel_by_first_appearance(const FrameLabels& labels) {
    InstanceLabeling out;
    out.labels = labels;
    std::map<std::uint32_t, std::uint32_t> remap;
    for (auto& frame : out.labels) {
        for (auto& l : frame) {
            if (l == 0) {
                continue;
            }
            auto [it, inserted] = remap.emplace(l, static_cast<std::uint32_t>(remap.size() + 1));
            l = it->second;
        }
    }
    out.clusters = static_cast<std::uint32_t>(remap.size());
    return out;
}

InstanceLabeling cluster_spatiotemporal(const std::vector<PointList>& points, const FrameMasks& mask,
                                        const OffsetField& offsets, const ClusterConfig& config) {
    if (mask.size() != points.size() || (!offsets.empty() && offsets.size() != points.size())) {
        throw std::invalid_argument("cluster_spatiotemporal: frame counts differ");
    }
    PointList raw;
    PointList shift;
    std::vector<std::pair<std::size_t, std::size_t>> origin;
    for (std::size_t k = 0; k < points.size(); ++k) {
        if (mask[k].size() != points[k].size() ||
            (!offsets.empty() && offsets[k].size() != points[k].size())) {
            throw std::invalid_argument("cluster_spatiotemporal: per-frame sizes differ");
        }
        for (std::size_t i = 0; i < points[k].size(); ++i) {
            if (mask[k][i]) {
                raw.push_back(points[k][i]);
                shift.push_back(offsets.empty() ? Vec3::Zero() : offsets[k][i]);
                origin.emplace_back(k, i);
            }
        }
    }
    FrameLabels labels(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        labels[k].assign(points[k].size(), 0);
    }
    if (raw.empty()) {
        return relabel_by_first_appearance(labels);
    }
    std::vector<std::uint32_t> point_label;
    if (config.voxel > 0.0) {
        // Voxels are formed on the undeformed points; each representative
        // moves by the mean offset of its members.
        const VoxelSet vs = voxel_downsample(raw, config.voxel);
        PointList deformed = vs.representatives;
        for (std::size_t v = 0; v < vs.members.size(); ++v) {
            Vec3 mean = Vec3::Zero();
            for (std::size_t j : vs.members[v]) {
                mean += shift[j];
            }
            deformed[v] += mean / static_cast<double>(vs.members[v].size());
        }
        const auto rep = dbscan(deformed, config.eps, config.min_pts);
        point_label.resize(raw.size());
        for (std::size_t j = 0; j < raw.size(); ++j) {
            point_label[j] = rep[vs.point_voxel[j]];
        }
    } else {
        PointList deformed(raw.size());
        for (std::size_t j = 0; j < raw.size(); ++j) {
            deformed[j] = raw[j] + shift[j];
        }
        point_label = dbscan(deformed, config.eps, config.min_pts);
    }
    for (std::size_t j = 0; j < origin.size(); ++j) {
        labels[origin[j].first][origin[j].second] = point_label[j];
    }
    return relabel_by_first_appearance(labels);
}

namespace {

struct Track {
    std::uint32_t id = 0;
    Vec3 pos = Vec3::Zero();
    Vec3 vel = Vec3::Zero();
    Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
    int missed = 0;
    bool updated = false;
};

}  // namespace

InstanceLabeling kalman_track(const std::vector<PointList>& points, const FrameLabels& labels,
                              const TrackerConfig& config) {
    if (points.size() != labels.size()) {
        throw std::invalid_argument("kalman_track: frame counts differ");
    }
    const double q = config.process_noise;
    Eigen::Matrix2d f;
    f << 1.0, 1.0, 0.0, 1.0;
    Eigen::Matrix2d qm;
    qm << 0.25 * q, 0.5 * q, 0.5 * q, q;

    std::vector<Track> tracks;
    std::uint32_t next_id = 0;
    FrameLabels out(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        if (points[k].size() != labels[k].size()) {
            throw std::invalid_argument("kalman_track: label count does not match points");
        }
        // Detection centroids, ordered by cluster id.
        std::map<std::uint32_t, std::pair<Vec3, std::size_t>> acc;
        for (std::size_t i = 0; i < points[k].size(); ++i) {
            if (labels[k][i] != 0) {
                auto& a = acc[labels[k][i]];
                if (a.second == 0) {
                    a.first = Vec3::Zero();
                }
                a.first += points[k][i];
                ++a.second;
            }
        }
        std::vector<std::uint32_t> det_ids;
        PointList det;
        for (const auto& [id, a] : acc) {
            det_ids.push_back(id);
            det.push_back(a.first / static_cast<double>(a.second));
        }

        for (auto& t : tracks) {
            t.pos += t.vel;
            t.cov = f * t.cov * f.transpose() + qm;
            t.updated = false;
        }
        std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
        for (std::size_t a = 0; a < tracks.size(); ++a) {
            const double gate = config.base_gate + tracks[a].vel.norm();
            for (std::size_t b = 0; b < det.size(); ++b) {
                const double d = (tracks[a].pos - det[b]).norm();
                if (d <= gate) {
                    pairs.emplace_back(d, a, b);
                }
            }
        }
        std::sort(pairs.begin(), pairs.end());
        std::vector<std::uint32_t> det_track(det.size(), 0);
        std::vector<bool> track_used(tracks.size(), false);
        for (const auto& [d, a, b] : pairs) {
            if (track_used[a] || det_track[b] != 0) {
                continue;
            }
            track_used[a] = true;
            Track& t = tracks[a];
            det_track[b] = t.id;
            // Per-axis update with a shared 2x2 covariance.
            const double s = t.cov(0, 0) + config.measurement_noise;
            const Eigen::Vector2d gain = t.cov.col(0) / s;
            const Vec3 innovation = det[b] - t.pos;
            t.pos += gain(0) * innovation;
            t.vel += gain(1) * innovation;
            Eigen::Matrix2d ikh = Eigen::Matrix2d::Identity();
            ikh(0, 0) -= gain(0);
            ikh(1, 0) -= gain(1);
            t.cov = ikh * t.cov;
            t.missed = 0;
            t.updated = true;
        }
        for (auto& t : tracks) {
            if (!t.updated) {
                ++t.missed;
            }
        }
        tracks.erase(std::remove_if(tracks.begin(), tracks.end(),
                                    [&](const Track& t) { return t.missed > config.max_missed; }),
                     tracks.end());
        for (std::size_t b = 0; b < det.size(); ++b) {
            if (det_track[b] == 0) {
                Track t;
                t.id = ++next_id;
                t.pos = det[b];
                t.cov << config.measurement_noise, 0.0, 0.0, 1.0;
                tracks.push_back(t);
                det_track[b] = t.id;
            }
        }
        std::map<std::uint32_t, std::uint32_t> to_track;
        for (std::size_t b = 0; b < det.size(); ++b) {
            to_track[det_ids[b]] = det_track[b];
        }
        out[k].assign(points[k].size(), 0);
        for (std::size_t i = 0; i < points[k].size(); ++i) {
            if (labels[k][i] != 0) {
                out[k][i] = to_track[labels[k][i]];
            }
        }
    }
    return relabel_by_first_appearance(out);
}

}  // namespace rigid_accum
