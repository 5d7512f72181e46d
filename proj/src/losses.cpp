#include "rigid_accum/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rigid_accum {

namespace {

constexpr double kClamp = 1e-7;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Eigen::Vector4d as_vec(const Eigen::Quaterniond& q) { return {q.w(), q.x(), q.y(), q.z()}; }

// Rotation of p by the normalised quaternion q/|q| and its Jacobian in q.
Vec3 rotate(const Eigen::Vector4d& q, const Vec3& p, Eigen::Matrix<double, 3, 4>* jac) {
    const double w = q(0);
    const Vec3 v = q.tail<3>();
    const double n = q.squaredNorm();
    const Vec3 a = (w * w - v.dot(v)) * p + 2.0 * v.dot(p) * v + 2.0 * w * v.cross(p);
    if (jac != nullptr) {
        Eigen::Matrix<double, 3, 4> da;
        da.col(0) = 2.0 * w * p + 2.0 * v.cross(p);
        Mat3 cross_p;
        cross_p << 0, -p.z(), p.y(), p.z(), 0, -p.x(), -p.y(), p.x(), 0;
        da.rightCols<3>() =
            -2.0 * p * v.transpose() + 2.0 * (v * p.transpose() + v.dot(p) * Mat3::Identity()) - 2.0 * w * cross_p;
        *jac = da / n - a * (2.0 * q.transpose()) / (n * n);
    }
    return a / n;
}

}  // namespace

LossValue weighted_bce(const Eigen::VectorXd& pred, const std::vector<std::uint8_t>& labels, double w_max) {
    const auto n = static_cast<std::size_t>(pred.size());
    if (n == 0) {
        throw EmptyInput("weighted_bce: empty input");
    }
    if (labels.size() != n) {
        throw std::invalid_argument("weighted_bce: label count does not match");
    }
    const auto n_pos = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
    const double n_neg = static_cast<double>(n) - n_pos;
    const double w_pos = n_pos > 0 ? std::min(std::sqrt(static_cast<double>(n) / n_pos), w_max) : 0.0;
    const double w_neg = n_neg > 0 ? std::min(std::sqrt(static_cast<double>(n) / n_neg), w_max) : 0.0;
    LossValue out;
    out.gradient = Eigen::VectorXd::Zero(pred.size());
    for (std::size_t i = 0; i < n; ++i) {
        const double raw = pred(static_cast<Eigen::Index>(i));
        const double p = std::clamp(raw, kClamp, 1.0 - kClamp);
        const bool clamped = raw != p;
        if (raw == kClamp || raw == 1.0 - kClamp) {
            out.kink = true;
        }
        double g = 0.0;
        if (labels[i]) {
            out.value -= w_pos * std::log(p);
            g = -w_pos / p;
        } else {
            out.value -= w_neg * std::log(1.0 - p);
            g = w_neg / (1.0 - p);
        }
        out.gradient(static_cast<Eigen::Index>(i)) = clamped ? 0.0 : g / static_cast<double>(n);
    }
    out.value /= static_cast<double>(n);
    return out;
}

LossValue lovasz_softmax_binary(const Eigen::VectorXd& scores, const std::vector<int>& labels) {
    const auto n = static_cast<std::size_t>(scores.size());
    if (n == 0) {
        throw EmptyInput("lovasz_softmax_binary: empty input");
    }
    if (labels.size() != n) {
        throw std::invalid_argument("lovasz_softmax_binary: label count does not match");
    }
    LossValue out;
    out.gradient = Eigen::VectorXd::Zero(scores.size());
    const auto positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    if (positives == 0.0) {
        out.flagged = true;
        return out;
    }
    std::vector<double> m(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 1 && labels[i] != -1) {
            throw std::invalid_argument("lovasz_softmax_binary: labels must be -1 or +1");
        }
        const double h = 1.0 - scores(static_cast<Eigen::Index>(i)) * labels[i];
        m[i] = std::max(h, 0.0);
        if (h == 0.0) {
            out.kink = true;
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return m[a] > m[b]; });
    for (std::size_t k = 1; k < n; ++k) {
        if (m[order[k]] == m[order[k - 1]] && m[order[k]] > 0.0) {
            out.kink = true;
        }
    }
    double cum_pos = 0.0;
    double cum_neg = 0.0;
    double prev = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = order[k];
        (labels[i] == 1 ? cum_pos : cum_neg) += 1.0;
        const double jaccard = 1.0 - (positives - cum_pos) / (positives + cum_neg);
        const double g = jaccard - prev;
        prev = jaccard;
        out.value += m[i] * g;
        if (m[i] > 0.0) {
            out.gradient(static_cast<Eigen::Index>(i)) = -static_cast<double>(labels[i]) * g;
        }
    }
    return out;
}

LossValue offset_loss(const std::vector<Vec3>& pred, const std::vector<Vec3>& target) {
    if (pred.empty()) {
        throw EmptyInput("offset_loss: empty input");
    }
    if (pred.size() != target.size()) {
        throw std::invalid_argument("offset_loss: sizes differ");
    }
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    LossValue out;
    out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * pred.size()));
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const Vec3 diff = pred[i] - target[i];
        Vec3 g = Vec3::Zero();
        double v = diff.lpNorm<1>();
        for (int a = 0; a < 3; ++a) {
            g(a) = sign(diff(a));
            if (diff(a) == 0.0) {
                out.kink = true;
            }
        }
        const double tn = target[i].norm();
        if (tn > 0.0) {
            const double pn = pred[i].norm();
            if (pn == 0.0) {
                v += 1.0;
                out.kink = true;
            } else {
                const Vec3 u = target[i] / tn;
                const double c = pred[i].dot(u) / pn;
                v += 1.0 - c;
                g -= (u - c * pred[i] / pn) / pn;
            }
        }
        out.value += v * inv_n;
        out.gradient.segment<3>(static_cast<Eigen::Index>(3 * i)) = g * inv_n;
    }
    return out;
}

LossValue pose_loss(const std::vector<PoseParams>& pred, const std::vector<RigidTransform>& target,
                    double lambda) {
    if (pred.empty()) {
        throw EmptyInput("pose_loss: empty input");
    }
    if (pred.size() != target.size()) {
        throw std::invalid_argument("pose_loss: sizes differ");
    }
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    LossValue out;
    out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(7 * pred.size()));
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const double qn = pred[k].q.norm();
        if (!(qn > 0.0)) {
            throw ZeroQuaternion("pose_loss: zero quaternion");
        }
        const Eigen::Vector4d n = pred[k].q / qn;
        Eigen::Vector4d qbar = as_vec(target[k].rotation());
        if (qbar.dot(n) < 0.0) {
            qbar = -qbar;
        }
        const Vec3 dt = pred[k].t - target[k].translation();
        const double tl = dt.norm();
        const Eigen::Vector4d dq = n - qbar;
        const double ql = dq.norm();
        out.value += (tl + lambda * ql) * inv_n;
        const auto base = static_cast<Eigen::Index>(7 * k);
        if (ql > 0.0) {
            const Eigen::Matrix4d jac = (Eigen::Matrix4d::Identity() - n * n.transpose()) / qn;
            out.gradient.segment<4>(base) = lambda * jac * dq / ql * inv_n;
        } else {
            out.kink = true;
        }
        if (tl > 0.0) {
            out.gradient.segment<3>(base + 4) = dt / tl * inv_n;
        } else {
            out.kink = true;
        }
    }
    return out;
}

LossValue trans_loss(const PoseParams& pred, const RigidTransform& target, std::span<const Vec3> points) {
    if (points.empty()) {
        throw EmptyInput("trans_loss: no pillars");
    }
    if (!(pred.q.norm() > 0.0)) {
        throw ZeroQuaternion("trans_loss: zero quaternion");
    }
    const double inv_n = 1.0 / static_cast<double>(points.size());
    LossValue out;
    out.gradient = Eigen::VectorXd::Zero(7);
    Eigen::Matrix<double, 3, 4> jac;
    for (const auto& p : points) {
        const Vec3 d = rotate(pred.q, p, &jac) + pred.t - target.apply(p);
        Vec3 s;
        for (int a = 0; a < 3; ++a) {
            s(a) = sign(d(a));
            if (d(a) == 0.0) {
                out.kink = true;
            }
        }
        out.value += d.lpNorm<1>() * inv_n;
        out.gradient.head<4>() += jac.transpose() * s * inv_n;
        out.gradient.tail<3>() += s * inv_n;
    }
    return out;
}

double total_loss(double ego, double fg, double motion, double offset, double object, const LossWeights& weights) {
    return ego + fg + motion + weights.offset * offset + weights.object * object;
}

GradCheck grad_check(const std::function<LossValue(const Eigen::VectorXd&)>& loss, const Eigen::VectorXd& x,
                     double h) {
    GradCheck out;
    const LossValue base = loss(x);
    out.kink = base.kink;
    if (base.gradient.size() != x.size()) {
        throw std::invalid_argument("grad_check: gradient size does not match input");
    }
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        xp(i) = x(i) + h;
        const LossValue up = loss(xp);
        xp(i) = x(i) - h;
        const LossValue down = loss(xp);
        xp(i) = x(i);
        out.kink = out.kink || up.kink || down.kink;
        const double numeric = (up.value - down.value) / (2.0 * h);
        const double analytic = base.gradient(i);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        out.max_relative_error = std::max(out.max_relative_error, std::abs(analytic - numeric) / denom);
    }
    return out;
}

Eigen::VectorXd flatten(const std::vector<PoseParams>& poses) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(7 * poses.size()));
    for (std::size_t k = 0; k < poses.size(); ++k) {
        x.segment<4>(static_cast<Eigen::Index>(7 * k)) = poses[k].q;
        x.segment<3>(static_cast<Eigen::Index>(7 * k + 4)) = poses[k].t;
    }
    return x;
}

std::vector<PoseParams> unflatten_poses(const Eigen::VectorXd& x) {
    if (x.size() % 7 != 0) {
        throw std::invalid_argument("unflatten_poses: size must be a multiple of 7");
    }
    std::vector<PoseParams> out(static_cast<std::size_t>(x.size() / 7));
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k].q = x.segment<4>(static_cast<Eigen::Index>(7 * k));
        out[k].t = x.segment<3>(static_cast<Eigen::Index>(7 * k + 4));
    }
    return out;
}

Eigen::VectorXd flatten(const std::vector<Vec3>& v) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(3 * v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        x.segment<3>(static_cast<Eigen::Index>(3 * i)) = v[i];
    }
    return x;
}

std::vector<Vec3> unflatten_points(const Eigen::VectorXd& x) {
    if (x.size() % 3 != 0) {
        throw std::invalid_argument("unflatten_points: size must be a multiple of 3");
    }
    std::vector<Vec3> out(static_cast<std::size_t>(x.size() / 3));
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x.segment<3>(static_cast<Eigen::Index>(3 * i));
    }
    return out;
}

}  // namespace rigid_accum
