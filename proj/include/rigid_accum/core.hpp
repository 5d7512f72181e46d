#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rigid_accum {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using PointList = std::vector<Vec3>;

/// Raised when a weighted point configuration does not pin down a rotation
/// (all points coincident or collinear).
class DegenerateConfiguration : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmptyInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class MissingObjectTransform : public std::runtime_error {
public:
    MissingObjectTransform(std::uint32_t instance, int frame);
    std::uint32_t instance;
    int frame;
};

/// Element of SE(3) stored as a unit quaternion (w >= 0) plus translation.
/// Immutable after construction.
class RigidTransform {
public:
    RigidTransform();
    RigidTransform(const Eigen::Quaterniond& rotation, const Vec3& translation);
    RigidTransform(const Mat3& rotation, const Vec3& translation);

    static RigidTransform identity() { return {}; }
    static RigidTransform from_translation(const Vec3& t);
    /// Rotation about +z by `yaw` radians followed by translation `t`.
    static RigidTransform from_yaw(double yaw, const Vec3& t = Vec3::Zero());
    static RigidTransform from_matrix(const Mat4& m);

    const Eigen::Quaterniond& rotation() const { return q_; }
    const Vec3& translation() const { return t_; }
    Mat3 rotation_matrix() const { return q_.toRotationMatrix(); }
    Mat4 matrix() const;
    /// Rotation about the z axis extracted from the matrix view.
    double yaw() const;

    Vec3 apply(const Vec3& x) const { return q_ * x + t_; }
    PointList apply(std::span<const Vec3> points) const;
    RigidTransform inverse() const;

    /// Geodesic angle between the rotations, in radians.
    double rotation_distance(const RigidTransform& other) const;
    double translation_distance(const RigidTransform& other) const;

private:
    Eigen::Quaterniond q_;
    Vec3 t_;
};

/// Returns the transform that applies `first`, then `second`.
RigidTransform compose(const RigidTransform& second, const RigidTransform& first);
inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
    return compose(a, b);
}

PointList apply_transform(const RigidTransform& transform, std::span<const Vec3> points);

/// Least-squares rigid alignment minimizing sum_l w_l |T p_l - q_l|^2.
/// Throws std::invalid_argument on size/weight precondition violations and
/// DegenerateConfiguration when the weighted cross-covariance has rank < 2.
RigidTransform kabsch_weighted(std::span<const Vec3> source, std::span<const Vec3> target,
                               std::span<const double> weights);
RigidTransform kabsch(std::span<const Vec3> source, std::span<const Vec3> target);

/// Yaw-only oriented box: center, full extents (length along local x, width
/// along local y, height along z) and heading.
struct OrientedBox {
    Vec3 center = Vec3::Zero();
    Vec3 dims = Vec3::Ones();
    double yaw = 0.0;

    RigidTransform pose() const { return RigidTransform::from_yaw(yaw, center); }
    /// Inclusive containment test with absolute slack `tol` on every face.
    bool contains(const Vec3& p, double tol = 1e-9) const;
    std::vector<Vec3> corners() const;
};

struct Frame {
    PointList points;
    int timestamp_index = 1;
    std::vector<std::uint8_t> foreground;
    std::vector<std::uint8_t> dynamic;
    std::vector<std::uint32_t> instance;
    std::vector<float> intensity;

    std::size_t size() const { return points.size(); }
    bool has_labels() const { return foreground.size() == points.size(); }
    /// Fills missing label vectors with zeros so every per-point array has n entries.
    void ensure_labels();
    /// Throws std::invalid_argument on non-finite points or inconsistent labels.
    void validate() const;
};

struct FrameSequence {
    std::vector<Frame> frames;
    double interval = 0.1;

    std::size_t size() const { return frames.size(); }
    const Frame& target() const { return frames.front(); }
    /// Time elapsed between frame position `k` (0-based) and the target frame.
    double elapsed(std::size_t k) const;
    void validate() const;
};

/// One flow vector per point for every frame of a sequence. Entry 0 is the
/// target frame and is all zeros by definition.
struct FlowField {
    std::vector<PointList> frames;

    static FlowField zeros_like(const FrameSequence& seq);
    std::size_t size() const { return frames.size(); }
};

/// Per-instance, per-frame rigid motions. `frames[k]` is empty when the
/// instance was not observed in frame position k.
struct ObjectMotionSet {
    std::map<std::uint32_t, std::vector<std::optional<RigidTransform>>> motions;

    const std::optional<RigidTransform>* find(std::uint32_t instance, std::size_t frame) const;
};

/// Per-point instance ids for every frame; 0 marks static/unassigned points.
using FrameLabels = std::vector<std::vector<std::uint32_t>>;

/// Rigid scene-flow composition. Static points move by the ego transform,
/// a point of instance k moves by T_k applied after the ego transform, where
/// T_k maps ego-aligned source points onto target-frame object points.
FlowField compose_scene_flow(const FrameSequence& seq, std::span<const RigidTransform> ego,
                             const ObjectMotionSet& objects, const FrameLabels& labels);

}  // namespace rigid_accum
