#include "rigid_accum/sim.hpp"

#include "rigid_accum/segmenter.hpp"

#include <cmath>
#include <random>
#include <unordered_set>

namespace rigid_accum {

namespace {

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct Face {
    Vec3 origin;
    Vec3 u;
    Vec3 v;
    double area() const { return u.cross(v).norm(); }
};

// Five faces of a box with its bottom at z = base in its local frame (the
// bottom face is not sampled).
std::vector<Face> box_faces(const Vec3& d, double base = 0.0) {
    const Vec3 h(d.x() / 2, d.y() / 2, 0.0);
    const Vec3 ex(d.x(), 0, 0);
    const Vec3 ey(0, d.y(), 0);
    const Vec3 ez(0, 0, d.z());
    const Vec3 c(-h.x(), -h.y(), base);
    return {{c + ez, ex, ey}, {c, ex, ez}, {c + ey, ex, ez}, {c, ey, ez}, {c + ex, ey, ez}};
}

PointList sample_faces(const std::vector<Face>& faces, std::size_t n, std::mt19937_64& rng) {
    double total = 0.0;
    for (const auto& f : faces) {
        total += f.area();
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PointList out;
    out.reserve(n);
    std::vector<double> cdf;
    double acc = 0.0;
    for (const auto& f : faces) {
        acc += f.area() / total;
        cdf.push_back(acc);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double r = u(rng);
        std::size_t j = 0;
        while (j + 1 < cdf.size() && r > cdf[j]) {
            ++j;
        }
        const Face& f = faces[j];
        out.push_back(f.origin + u(rng) * f.u + u(rng) * f.v);
    }
    return out;
}

struct Source {
    PointList local;
    // 0 for static world, body index + 1 otherwise.
    std::uint32_t body = 0;
    bool ground = false;
};

std::int64_t pack(std::int64_t ix, std::int64_t iy, std::int64_t iz) {
    return ((ix & 0x1fffff) << 42) | ((iy & 0x1fffff) << 21) | (iz & 0x1fffff);
}

Eigen::Matrix<std::int64_t, 3, 1> voxel_of(const Vec3& p, double s) {
    return {static_cast<std::int64_t>(std::floor(p.x() / s)), static_cast<std::int64_t>(std::floor(p.y() / s)),
            static_cast<std::int64_t>(std::floor(p.z() / s))};
}

std::int64_t voxel_key(const Vec3& p, double s) {
    const auto v = voxel_of(p, s);
    return pack(v.x(), v.y(), v.z());
}

}  // namespace

RigidTransform Trajectory::pose(double t) const {
    const double a = yaw + yaw_rate * t;
    Vec3 p = start;
    if (std::abs(yaw_rate) < 1e-12) {
        p += speed * t * Vec3(std::cos(yaw), std::sin(yaw), 0.0);
    } else {
        const double r = speed / yaw_rate;
        p += Vec3(r * (std::sin(a) - std::sin(yaw)), -r * (std::cos(a) - std::cos(yaw)), 0.0);
    }
    return RigidTransform::from_yaw(a, p);
}

SceneSpec SceneSpec::default_scene() {
    SceneSpec s;
    s.walls = {{Vec2(-35, 12), Vec2(35, 12), 3.0}, {Vec2(-35, -14), Vec2(35, -14), 2.5}};
    BodySpec pole;
    pole.dims = Vec3(0.4, 0.4, 4.0);
    pole.motion.start = Vec3(6, 8, 0);
    BodySpec kiosk;
    kiosk.dims = Vec3(3.0, 2.0, 2.5);
    kiosk.motion.start = Vec3(-8, 9, 0);
    kiosk.motion.yaw = 0.4;
    BodySpec block;
    block.dims = Vec3(5.0, 3.0, 3.5);
    block.motion.start = Vec3(18, -10, 0);
    block.motion.yaw = -0.2;
    s.structures = {pole, kiosk, block};
    for (const double x : {-10.0, -3.0, 12.0}) {
        BodySpec parked;
        parked.motion.start = Vec3(x, 6.0, 0);
        parked.motion.yaw = 0.05 * x;
        s.bodies.push_back(parked);
    }
    BodySpec moving;
    moving.motion.start = Vec3(-4.0, -4.0, 0);
    moving.motion.speed = 8.0;
    moving.motion.yaw_rate = 0.3;
    s.bodies.push_back(moving);
    return s;
}

void SceneSpec::validate() const {
    if (frames < 2) {
        throw std::invalid_argument("SceneSpec: at least 2 frames are required");
    }
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw std::invalid_argument("SceneSpec: dt must be positive");
    }
    if (!(sensor.noise_sigma >= 0.0) || !(sensor.dropout >= 0.0 && sensor.dropout < 1.0)) {
        throw std::invalid_argument("SceneSpec: noise must be >= 0 and dropout in [0, 1)");
    }
    if (!(sensor.max_range > 0.0) || !(sensor.body_density >= 0.0) || !(sensor.occlusion_voxel > 0.0)) {
        throw std::invalid_argument("SceneSpec: sensor range, density and voxel must be positive");
    }
    for (const auto* list : {&structures, &bodies}) {
        for (const auto& b : *list) {
            if (!(b.dims.array() > 0.0).all()) {
                throw std::invalid_argument("SceneSpec: body dimensions must be positive");
            }
            if (!std::isfinite(b.motion.speed) || !std::isfinite(b.motion.yaw_rate)) {
                throw std::invalid_argument("SceneSpec: body rates must be finite");
            }
        }
    }
    if (!std::isfinite(ego.speed) || !std::isfinite(ego.yaw_rate)) {
        throw std::invalid_argument("SceneSpec: ego rates must be finite");
    }
}

SimulatedScene generate_scene(const SceneSpec& spec) {
    spec.validate();
    std::mt19937_64 world_rng(stream_seed(spec.seed, 0));

    // Static world samples in world coordinates, split by area.
    std::vector<Face> ground = {{Vec3(-spec.ground_extent, -spec.ground_extent, 0.0),
                                 Vec3(2 * spec.ground_extent, 0, 0), Vec3(0, 2 * spec.ground_extent, 0)}};
    std::vector<Face> vertical;
    for (const auto& w : spec.walls) {
        const Vec3 a(w.from.x(), w.from.y(), 0.0);
        const Vec3 b(w.to.x(), w.to.y(), 0.0);
        vertical.push_back({a, b - a, Vec3(0, 0, w.height)});
    }
    for (const auto& s : spec.structures) {
        const RigidTransform pose = s.motion.pose(0.0);
        for (const auto& f : box_faces(s.dims)) {
            vertical.push_back({pose.apply(f.origin), pose.rotation() * f.u, pose.rotation() * f.v});
        }
    }
    double ground_area = ground[0].area();
    double vertical_area = 0.0;
    for (const auto& f : vertical) {
        vertical_area += f.area();
    }
    // Vertical structure gets a larger share than its area so that
    // registration has something besides the ground plane.
    const double vertical_weight = 8.0 * vertical_area;
    const double share = vertical.empty() ? 0.0 : vertical_weight / (vertical_weight + ground_area);
    const auto n_vertical = static_cast<std::size_t>(std::round(share * spec.sensor.points_per_frame));
    std::vector<Source> sources;
    sources.push_back({sample_faces(ground, spec.sensor.points_per_frame - n_vertical, world_rng), 0, true});
    if (n_vertical > 0) {
        sources.push_back({sample_faces(vertical, n_vertical, world_rng), 0, false});
    }
    for (std::size_t b = 0; b < spec.bodies.size(); ++b) {
        const auto faces = box_faces(spec.bodies[b].dims, spec.bodies[b].clearance);
        double area = 0.0;
        for (const auto& f : faces) {
            area += f.area();
        }
        const auto n = static_cast<std::size_t>(std::round(area * spec.sensor.body_density));
        sources.push_back({sample_faces(faces, n, world_rng), static_cast<std::uint32_t>(b + 1), false});
    }

    SimulatedScene out;
    out.sequence.interval = spec.dt;
    const RigidTransform lift = RigidTransform::from_translation(Vec3(0, 0, spec.sensor.height));
    std::vector<RigidTransform> sensor_pose(spec.frames);
    for (std::size_t k = 0; k < spec.frames; ++k) {
        sensor_pose[k] = compose(spec.ego.pose(static_cast<double>(k) * spec.dt), lift);
    }
    const RigidTransform target_inv = sensor_pose[0].inverse();
    for (std::size_t k = 0; k < spec.frames; ++k) {
        out.ego.push_back(compose(target_inv, sensor_pose[k]));
    }
    out.boxes.resize(spec.bodies.size());
    for (std::size_t b = 0; b < spec.bodies.size(); ++b) {
        out.boxes[b].id = static_cast<std::uint32_t>(b + 1);
    }

    for (std::size_t k = 0; k < spec.frames; ++k) {
        const double t = static_cast<double>(k) * spec.dt;
        const RigidTransform world_to_sensor = sensor_pose[k].inverse();
        std::mt19937_64 rng(stream_seed(spec.seed, 1 + k));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::normal_distribution<double> noise(0.0, spec.sensor.noise_sigma > 0.0 ? spec.sensor.noise_sigma : 1.0);

        Frame frame;
        frame.timestamp_index = static_cast<int>(k + 1);
        std::vector<bool> is_ground;
        for (const auto& src : sources) {
            RigidTransform to_sensor = world_to_sensor;
            if (src.body != 0) {
                const BodySpec& body = spec.bodies[src.body - 1];
                const RigidTransform pose = body.motion.pose(t);
                to_sensor = compose(world_to_sensor, pose);
                OrientedBox box;
                box.dims = body.dims;
                const RigidTransform box_pose =
                    compose(to_sensor, RigidTransform::from_translation(Vec3(0, 0, body.clearance + body.dims.z() / 2)));
                box.center = box_pose.translation();
                box.yaw = box_pose.yaw();
                out.boxes[src.body - 1].boxes.emplace(frame.timestamp_index, box);
            }
            for (const auto& p : src.local) {
                const Vec3 x = to_sensor.apply(p);
                // Draw every random number so streams do not depend on which
                // points survive.
                const bool dropped = u(rng) < spec.sensor.dropout;
                const Vec3 n(noise(rng), noise(rng), noise(rng));
                if (dropped || x.norm() > spec.sensor.max_range) {
                    continue;
                }
                frame.points.push_back(spec.sensor.noise_sigma > 0.0 ? Vec3(x + n) : x);
                frame.foreground.push_back(src.body != 0 ? 1 : 0);
                frame.instance.push_back(src.body);
                is_ground.push_back(src.ground);
            }
        }
        if (spec.sensor.occlusion) {
            const double s = spec.sensor.occlusion_voxel;
            std::unordered_set<std::int64_t> occupied;
            for (std::size_t i = 0; i < frame.points.size(); ++i) {
                if (!is_ground[i]) {
                    const auto v = voxel_of(frame.points[i], s);
                    for (int dx = -1; dx <= 1; ++dx) {
                        for (int dy = -1; dy <= 1; ++dy) {
                            for (int dz = -1; dz <= 1; ++dz) {
                                occupied.insert(pack(v.x() + dx, v.y() + dy, v.z() + dz));
                            }
                        }
                    }
                }
            }
            Frame kept;
            kept.timestamp_index = frame.timestamp_index;
            for (std::size_t i = 0; i < frame.points.size(); ++i) {
                const Vec3& p = frame.points[i];
                const double d = p.norm();
                bool hidden = false;
                for (double r = 1.0; r < d - 3.0 * s && !hidden; r += 0.5 * s) {
                    hidden = occupied.count(voxel_key(p * (r / d), s)) > 0;
                }
                if (!hidden) {
                    kept.points.push_back(p);
                    kept.foreground.push_back(frame.foreground[i]);
                    kept.instance.push_back(frame.instance[i]);
                }
            }
            frame = std::move(kept);
        }
        frame.dynamic.assign(frame.size(), 0);
        frame.intensity.clear();
        out.sequence.frames.push_back(std::move(frame));
    }

    // Object motions on ego-aligned points: target_inv * B_0 * B_k^-1 * sensor_0.
    for (std::size_t b = 0; b < spec.bodies.size(); ++b) {
        const auto id = static_cast<std::uint32_t>(b + 1);
        std::vector<std::optional<RigidTransform>> per_frame(spec.frames);
        bool any = false;
        for (std::size_t k = 0; k < spec.frames; ++k) {
            const auto& inst = out.sequence.frames[k].instance;
            if (std::find(inst.begin(), inst.end(), id) == inst.end()) {
                continue;
            }
            const double t = static_cast<double>(k) * spec.dt;
            const RigidTransform body_motion =
                compose(spec.bodies[b].motion.pose(0.0), spec.bodies[b].motion.pose(t).inverse());
            per_frame[k] = compose(target_inv, compose(body_motion, sensor_pose[0]));
            any = true;
        }
        if (any) {
            out.objects.motions[id] = std::move(per_frame);
        }
    }
    FrameLabels labels;
    for (const auto& f : out.sequence.frames) {
        labels.push_back(f.instance);
    }
    out.flow = compose_scene_flow(out.sequence, out.ego, out.objects, labels);
    const FrameMasks dyn = label_dynamic_oracle(out.sequence, out.flow, out.ego);
    for (std::size_t k = 0; k < spec.frames; ++k) {
        out.sequence.frames[k].dynamic = dyn[k];
    }
    return out;
}

}  // namespace rigid_accum
