#pragma once

#include "rigid_accum/core.hpp"
#include "rigid_accum/gt.hpp"

#include <cstdint>
#include <vector>

namespace rigid_accum {

/// Planar motion with constant speed along the heading and constant yaw
/// rate; a yaw rate of zero gives a straight line.
struct Trajectory {
    Vec3 start = Vec3::Zero();
    double yaw = 0.0;
    double speed = 0.0;
    double yaw_rate = 0.0;

    /// Pose at time `t` seconds (yaw about z plus position).
    RigidTransform pose(double t) const;
};

struct BodySpec {
    /// Length, width, height; the box floats `clearance` above the ground
    /// (start.z is ignored).
    Vec3 dims = Vec3(4.5, 1.9, 1.6);
    double clearance = 0.15;
    Trajectory motion;
};

struct WallSpec {
    Vec2 from = Vec2(-30, 12);
    Vec2 to = Vec2(30, 12);
    double height = 3.0;
};

struct SensorSpec {
    double max_range = 40.0;
    /// Surface samples of the static world; bodies are sampled separately.
    std::size_t points_per_frame = 20000;
    /// Samples per square meter on body faces.
    double body_density = 40.0;
    double dropout = 0.0;
    double noise_sigma = 0.0;
    double height = 1.8;
    /// Drop points whose ray passes near occupied non-ground voxels (one voxel
    /// of dilation closes gaps between sparse samples).
    bool occlusion = false;
    double occlusion_voxel = 0.3;
};

struct SceneSpec {
    std::uint64_t seed = 1;
    std::size_t frames = 5;
    double dt = 0.1;
    Trajectory ego = {Vec3::Zero(), 0.0, 5.0, 0.0};
    /// Half extent of the ground square around the origin.
    double ground_extent = 40.0;
    std::vector<WallSpec> walls;
    /// Static, non-foreground boxes (buildings, poles).
    std::vector<BodySpec> structures;
    /// Foreground rigid bodies; parked ones have zero speed.
    std::vector<BodySpec> bodies;
    SensorSpec sensor;

    /// Three parked cars, one moving car, two walls and a few structures.
    static SceneSpec default_scene();
    void validate() const;
};

struct SimulatedScene {
    FrameSequence sequence;
    /// Frame-k sensor coordinates to target sensor coordinates.
    std::vector<RigidTransform> ego;
    ObjectMotionSet objects;
    FlowField flow;
    BoxTracks boxes;
};

/// Fixed world surface samples seen from the ego pose of every frame, with
/// per-frame dropout and noise drawn from streams seeded by (seed, frame).
/// Instance ids are body index + 1. Deterministic for a fixed spec.
SimulatedScene generate_scene(const SceneSpec& spec);

}  // namespace rigid_accum
