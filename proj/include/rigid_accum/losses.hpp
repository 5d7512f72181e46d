#pragma once

#include "rigid_accum/core.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <vector>

namespace rigid_accum {

class ZeroQuaternion : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Loss value with the gradient with respect to the prediction input,
/// flattened in the layout documented per loss.
struct LossValue {
    double value = 0.0;
    Eigen::VectorXd gradient;
    /// Input sits on a non-differentiable point (tie, hinge or L1 kink).
    bool kink = false;
    /// Set when a convention replaced an undefined value (e.g. no positives).
    bool flagged = false;
};

/// Class-balanced binary cross-entropy. Each sample is weighted by
/// min(sqrt(n / n_class), w_max); predictions are clamped to [1e-7, 1 - 1e-7]
/// and the gradient is zero where clamping is active.
LossValue weighted_bce(const Eigen::VectorXd& pred, const std::vector<std::uint8_t>& labels,
                       double w_max = 50.0);

/// Binary Lovasz hinge over scores with labels in {-1, +1}. The gradient
/// holds the sort permutation fixed. No positive label gives value 0 and
/// `flagged`.
LossValue lovasz_softmax_binary(const Eigen::VectorXd& scores, const std::vector<int>& labels);

/// Mean over points of |d - g|_1 + 1 - cos(d, g). Gradient layout: 3 per
/// point. A zero prediction scores 1 on the directional term with zero
/// gradient; a zero target drops the directional term.
LossValue offset_loss(const std::vector<Vec3>& pred, const std::vector<Vec3>& target);

/// Per-frame pose prediction: un-normalised quaternion (w, x, y, z) and
/// translation.
struct PoseParams {
    Eigen::Vector4d q = Eigen::Vector4d(1, 0, 0, 0);
    Vec3 t = Vec3::Zero();
};

/// Mean over frames of |t_gt - t|_2 + lambda |q_gt - q/|q||_2, the target
/// quaternion flipped to the hemisphere of q. Gradient layout: 7 per frame
/// (q then t).
LossValue pose_loss(const std::vector<PoseParams>& pred, const std::vector<RigidTransform>& target,
                    double lambda = 50.0);

/// Mean over points of |T p - T_gt p|_1 with T given by un-normalised
/// quaternion and translation. Gradient layout: q (4) then t (3).
LossValue trans_loss(const PoseParams& pred, const RigidTransform& target, std::span<const Vec3> points);

struct LossWeights {
    double offset = 1.0;
    double object = 1.0;
};

/// L = L_ego + L_fg + L_motion + w_offset L_offset + w_obj L_obj.
double total_loss(double ego, double fg, double motion, double offset, double object,
                  const LossWeights& weights = {});

struct GradCheck {
    double max_relative_error = 0.0;
    /// The base point or a perturbed point reported a kink; the error is not
    /// meaningful there.
    bool kink = false;
};

/// Central differences with step h against the analytic gradient. Relative
/// error is |a - n| / max(|a|, |n|, 1e-8).
GradCheck grad_check(const std::function<LossValue(const Eigen::VectorXd&)>& loss, const Eigen::VectorXd& x,
                     double h = 1e-5);

/// Flattening helpers for pose parameters (7 per frame) and offsets (3 per point).
Eigen::VectorXd flatten(const std::vector<PoseParams>& poses);
std::vector<PoseParams> unflatten_poses(const Eigen::VectorXd& x);
Eigen::VectorXd flatten(const std::vector<Vec3>& v);
std::vector<Vec3> unflatten_points(const Eigen::VectorXd& x);

}  // namespace rigid_accum
