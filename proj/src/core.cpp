#include "rigid_accum/core.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <sstream>

namespace rigid_accum {

namespace {

Eigen::Quaterniond canonical(Eigen::Quaterniond q) {
    q.normalize();
    if (q.w() < 0.0) {
        q.coeffs() = -q.coeffs();
    }
    return q;
}

std::string missing_transform_message(std::uint32_t instance, int frame) {
    std::ostringstream os;
    os << "no transform for instance " << instance << " in frame " << frame;
    return os.str();
}

}  // namespace

MissingObjectTransform::MissingObjectTransform(std::uint32_t inst, int f)
    : std::runtime_error(missing_transform_message(inst, f)), instance(inst), frame(f) {}

RigidTransform::RigidTransform() : q_(Eigen::Quaterniond::Identity()), t_(Vec3::Zero()) {}

RigidTransform::RigidTransform(const Eigen::Quaterniond& rotation, const Vec3& translation)
    : q_(canonical(rotation)), t_(translation) {
    if (!std::isfinite(rotation.norm()) || rotation.norm() == 0.0) {
        throw std::invalid_argument("RigidTransform: quaternion must be finite and nonzero");
    }
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : q_(canonical(Eigen::Quaterniond(rotation))), t_(translation) {}

RigidTransform RigidTransform::from_translation(const Vec3& t) {
    return RigidTransform(Eigen::Quaterniond::Identity(), t);
}

RigidTransform RigidTransform::from_yaw(double yaw, const Vec3& t) {
    return RigidTransform(Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitZ())), t);
}

RigidTransform RigidTransform::from_matrix(const Mat4& m) {
    return RigidTransform(Mat3(m.topLeftCorner<3, 3>()), Vec3(m.topRightCorner<3, 1>()));
}

Mat4 RigidTransform::matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation_matrix();
    m.topRightCorner<3, 1>() = t_;
    return m;
}

double RigidTransform::yaw() const {
    const Mat3 r = rotation_matrix();
    return std::atan2(r(1, 0), r(0, 0));
}

PointList RigidTransform::apply(std::span<const Vec3> points) const {
    const Mat3 r = rotation_matrix();
    PointList out;
    out.reserve(points.size());
    for (const auto& p : points) {
        out.emplace_back(r * p + t_);
    }
    return out;
}

RigidTransform RigidTransform::inverse() const {
    const Eigen::Quaterniond qi = q_.conjugate();
    return RigidTransform(qi, -(qi * t_));
}

double RigidTransform::rotation_distance(const RigidTransform& other) const {
    // 2*atan2(|v|, |w|) stays accurate for tiny angles where acos does not.
    const Eigen::Quaterniond d = q_.conjugate() * other.q_;
    return 2.0 * std::atan2(d.vec().norm(), std::abs(d.w()));
}

double RigidTransform::translation_distance(const RigidTransform& other) const {
    return (t_ - other.t_).norm();
}

RigidTransform compose(const RigidTransform& second, const RigidTransform& first) {
    return RigidTransform(second.rotation() * first.rotation(),
                          second.rotation() * first.translation() + second.translation());
}

PointList apply_transform(const RigidTransform& transform, std::span<const Vec3> points) {
    return transform.apply(points);
}

RigidTransform kabsch_weighted(std::span<const Vec3> source, std::span<const Vec3> target,
                               std::span<const double> weights) {
    if (source.size() != target.size() || source.size() != weights.size()) {
        throw std::invalid_argument("kabsch_weighted: source, target and weights differ in length");
    }
    if (source.size() < 3) {
        throw std::invalid_argument("kabsch_weighted: need at least 3 correspondences");
    }
    double wsum = 0.0;
    Vec3 ps = Vec3::Zero();
    Vec3 qs = Vec3::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
        if (!(weights[i] >= 0.0)) {
            throw std::invalid_argument("kabsch_weighted: weights must be nonnegative");
        }
        wsum += weights[i];
        ps += weights[i] * source[i];
        qs += weights[i] * target[i];
    }
    if (!(wsum > 0.0)) {
        throw std::invalid_argument("kabsch_weighted: weight sum must be positive");
    }
    const Vec3 p_bar = ps / wsum;
    const Vec3 q_bar = qs / wsum;

    Mat3 h = Mat3::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
        h += (weights[i] / wsum) * (source[i] - p_bar) * (target[i] - q_bar).transpose();
    }

    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 sv = svd.singularValues();
    if (!(sv(0) > 0.0) || sv(1) <= 1e-10 * sv(0)) {
        throw DegenerateConfiguration("kabsch_weighted: points are coincident or collinear");
    }
    const Mat3 u = svd.matrixU();
    const Mat3 v = svd.matrixV();
    Mat3 d = Mat3::Identity();
    d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    const Mat3 r = v * d * u.transpose();
    return RigidTransform(r, q_bar - r * p_bar);
}

RigidTransform kabsch(std::span<const Vec3> source, std::span<const Vec3> target) {
    const std::vector<double> w(source.size(), 1.0);
    return kabsch_weighted(source, target, w);
}

bool OrientedBox::contains(const Vec3& p, double tol) const {
    const Vec3 local = pose().inverse().apply(p);
    const Vec3 half = 0.5 * dims;
    return std::abs(local.x()) <= half.x() + tol && std::abs(local.y()) <= half.y() + tol &&
           std::abs(local.z()) <= half.z() + tol;
}

std::vector<Vec3> OrientedBox::corners() const {
    std::vector<Vec3> out;
    const RigidTransform t = pose();
    const Vec3 half = 0.5 * dims;
    for (int sx : {-1, 1}) {
        for (int sy : {-1, 1}) {
            for (int sz : {-1, 1}) {
                out.push_back(t.apply(Vec3(sx * half.x(), sy * half.y(), sz * half.z())));
            }
        }
    }
    return out;
}

void Frame::ensure_labels() {
    const std::size_t n = points.size();
    foreground.resize(n, 0);
    dynamic.resize(n, 0);
    instance.resize(n, 0);
}

void Frame::validate() const {
    for (const auto& p : points) {
        if (!p.allFinite()) {
            throw std::invalid_argument("Frame: non-finite point coordinate");
        }
    }
    const std::size_t n = points.size();
    auto check = [n](std::size_t m, const char* what) {
        if (m != 0 && m != n) {
            throw std::invalid_argument(std::string("Frame: label array size mismatch: ") + what);
        }
    };
    check(foreground.size(), "foreground");
    check(dynamic.size(), "dynamic");
    check(instance.size(), "instance");
    check(intensity.size(), "intensity");
    if (!instance.empty()) {
        for (std::size_t i = 0; i < n; ++i) {
            if (instance[i] != 0 && (foreground.empty() || foreground[i] == 0)) {
                throw std::invalid_argument("Frame: instance id set on a non-foreground point");
            }
        }
    }
    if (timestamp_index < 1) {
        throw std::invalid_argument("Frame: timestamp index must be >= 1");
    }
}

double FrameSequence::elapsed(std::size_t k) const {
    return static_cast<double>(frames.at(k).timestamp_index - frames.front().timestamp_index) *
           interval;
}

void FrameSequence::validate() const {
    if (!(interval > 0.0)) {
        throw std::invalid_argument("FrameSequence: interval must be positive");
    }
    for (std::size_t k = 0; k < frames.size(); ++k) {
        frames[k].validate();
        if (k > 0 && frames[k].timestamp_index <= frames[k - 1].timestamp_index) {
            throw std::invalid_argument("FrameSequence: frame indices must increase strictly");
        }
    }
}

FlowField FlowField::zeros_like(const FrameSequence& seq) {
    FlowField f;
    f.frames.reserve(seq.size());
    for (const auto& fr : seq.frames) {
        f.frames.emplace_back(fr.size(), Vec3::Zero());
    }
    return f;
}

const std::optional<RigidTransform>* ObjectMotionSet::find(std::uint32_t instance,
                                                           std::size_t frame) const {
    const auto it = motions.find(instance);
    if (it == motions.end() || frame >= it->second.size()) {
        return nullptr;
    }
    return &it->second[frame];
}

FlowField compose_scene_flow(const FrameSequence& seq, std::span<const RigidTransform> ego,
                             const ObjectMotionSet& objects, const FrameLabels& labels) {
    if (ego.size() != seq.size()) {
        throw std::invalid_argument("compose_scene_flow: need one ego transform per frame");
    }
    FlowField flow = FlowField::zeros_like(seq);
    for (std::size_t k = 0; k < seq.size(); ++k) {
        const Frame& frame = seq.frames[k];
        const bool labelled = k < labels.size() && !labels[k].empty();
        if (labelled && labels[k].size() != frame.size()) {
            throw std::invalid_argument("compose_scene_flow: label count differs from point count");
        }
        for (std::size_t i = 0; i < frame.size(); ++i) {
            const Vec3& x = frame.points[i];
            Vec3 moved = ego[k].apply(x);
            const std::uint32_t id = labelled ? labels[k][i] : 0U;
            if (id != 0) {
                const auto* tk = objects.find(id, k);
                if (tk == nullptr || !tk->has_value()) {
                    throw MissingObjectTransform(id, frame.timestamp_index);
                }
                moved = (*tk)->apply(moved);
            }
            flow.frames[k][i] = moved - x;
        }
    }
    return flow;
}

}  // namespace rigid_accum
