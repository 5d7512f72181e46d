#pragma once

#include "rigid_accum/core.hpp"
#include "rigid_accum/grid.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace rigid_accum {

class ZeroFeature : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InsufficientBackground : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Entropy-regularized assignment between N source and M target items, padded
/// with one slack row and one slack column (last row/column).
struct SoftAssignment {
    Eigen::MatrixXd matrix;
    int iterations = 0;
    double slack_cost = 0.0;

    Eigen::Index rows() const { return matrix.rows() - 1; }
    Eigen::Index cols() const { return matrix.cols() - 1; }
    /// Largest |sum - 1| over non-slack rows and non-slack columns.
    double marginal_deviation() const;
};

/// M[l, m] = 2 - 2 <f_l, g_m> over L2-normalized rows. Rows further than 1e-6
/// from unit norm are renormalized; zero rows throw ZeroFeature.
Eigen::MatrixXd build_cost_matrix(const Eigen::MatrixXd& source_features,
                                  const Eigen::MatrixXd& target_features);

/// Log-domain Sinkhorn over exp(-beta * M_padded). Each round normalizes the
/// non-slack rows, then the non-slack columns; the slack row is never row
/// normalized and the slack column never column normalized. When `trace` is
/// given, the marginal deviation after every round is appended to it.
SoftAssignment sinkhorn_log(const Eigen::MatrixXd& cost, double slack_cost, int iters,
                            double beta = 1.0, std::vector<double>* trace = nullptr);

struct Correspondences {
    PointList targets;
    std::vector<double> weights;
    /// Rows whose support was empty; weight 0, target = own position.
    std::vector<std::size_t> all_masked;
};

/// Soft correspondences restricted to pairs closer than `v_max * elapsed`.
Correspondences soft_correspondences(const SoftAssignment& s, std::span<const Vec3> source_centroids,
                                     std::span<const Vec3> target_centroids, double v_max,
                                     double elapsed);

/// Inlier loss: mean slack mass over the non-slack rows and columns, in [0, 1].
double inlier_score(const SoftAssignment& s);

/// Random Fourier embedding approximating a Gaussian kernel of bandwidth
/// `bandwidth` between feature rows. Deterministic for a fixed seed.
Eigen::MatrixXd embed_features(const Eigen::MatrixXd& features, int dim, double bandwidth,
                               std::uint64_t seed);

struct EgoConfig {
    GridSpec grid;
    std::size_t n_ego = 1024;
    double fg_threshold = 0.5;
    int sinkhorn_iters = 5;
    double slack_cost = 0.2;
    /// Inverse temperature applied to the cost matrix before normalization.
    double beta = 50.0;
    double v_max = 30.0;
    /// Match, align and re-pillarize this many times; round r starts from the
    /// estimate of round r-1.
    int rounds = 4;
    int embedding_dim = 128;
    double embedding_bandwidth = 0.25;
    /// Scale of the pillar point count appended to the matching descriptor;
    /// 0 leaves it out.
    double count_weight = 1.0;
    std::uint64_t embedding_seed = 0x5eedf00dULL;
    std::uint64_t seed = 0;
};

struct EgoDiagnostics {
    double inlier_score = 0.0;
    double mean_residual = 0.0;
    std::size_t source_pillars = 0;
    std::size_t target_pillars = 0;
    std::size_t all_masked = 0;
    int rounds = 0;
};

struct EgoEstimate {
    RigidTransform transform;
    EgoDiagnostics diagnostics;
};

/// Registers `source` onto `target` from background pillars (pillar
/// foreground score below the threshold). `elapsed` is the time between the
/// two frames and scales the support radius. Cached round-0 grids may be
/// passed in. Throws InsufficientBackground or DegenerateConfiguration.
EgoEstimate estimate_ego_motion(const Frame& source, const Frame& target,
                                std::span<const double> source_fg, std::span<const double> target_fg,
                                const Featurizer& featurizer, const EgoConfig& config, double elapsed,
                                const PillarGrid* source_grid = nullptr,
                                const PillarGrid* target_grid = nullptr);

}  // namespace rigid_accum
