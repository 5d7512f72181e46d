#include "rigid_accum/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <utility>

namespace rigid_accum {

namespace {

double log_sum_exp(const double* data, Eigen::Index n, Eigen::Index stride) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
        mx = std::max(mx, data[i * stride]);
    }
    if (!std::isfinite(mx)) {
        return mx;
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        acc += std::exp(data[i * stride] - mx);
    }
    return mx + std::log(acc);
}

Eigen::MatrixXd normalized_rows(const Eigen::MatrixXd& f) {
    Eigen::MatrixXd out = f;
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
        const double n = f.row(r).norm();
        if (n == 0.0 || !std::isfinite(n)) {
            throw ZeroFeature("build_cost_matrix: feature row " + std::to_string(r) + " has zero norm");
        }
        if (std::abs(n - 1.0) > 1e-6) {
            out.row(r) /= n;
        }
    }
    return out;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct PillarSet {
    std::vector<std::size_t> cells;
    PointList centroids;
    Eigen::MatrixXd features;
};

/// Occupied cells whose max member foreground score is below the threshold,
/// subsampled without replacement to at most `n` cells.
PillarSet background_pillars(const PillarGrid& grid, std::span<const double> fg, double threshold,
                             std::size_t n, std::uint64_t seed, double count_weight) {
    std::vector<double> cell_score(grid.counts.size(), 0.0);
    if (!fg.empty()) {
        for (std::size_t i = 0; i < grid.point_cell.size(); ++i) {
            const auto c = grid.point_cell[i];
            if (c >= 0) {
                cell_score[static_cast<std::size_t>(c)] =
                    std::max(cell_score[static_cast<std::size_t>(c)], fg[i]);
            }
        }
    }
    std::vector<std::size_t> candidates;
    for (std::size_t c = 0; c < grid.counts.size(); ++c) {
        if (grid.counts[c] > 0 && cell_score[c] < threshold) {
            candidates.push_back(c);
        }
    }
    PillarSet out;
    if (candidates.size() > n) {
        // Priority depends on the cell and the seed only, so two grids in the
        // same coordinates keep the same cells.
        std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
        keyed.reserve(candidates.size());
        for (const std::size_t c : candidates) {
            keyed.emplace_back(mix_seed(seed, c), c);
        }
        std::nth_element(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(n), keyed.end());
        keyed.resize(n);
        for (const auto& kc : keyed) {
            out.cells.push_back(kc.second);
        }
        std::sort(out.cells.begin(), out.cells.end());
    } else {
        out.cells = std::move(candidates);
    }
    // The point count is appended so that pillars whose membership changed
    // stop matching even when the pooled maximum did not move.
    const auto dim = static_cast<Eigen::Index>(grid.feature_dim);
    out.features.resize(static_cast<Eigen::Index>(out.cells.size()), dim + (count_weight > 0.0 ? 1 : 0));
    for (std::size_t k = 0; k < out.cells.size(); ++k) {
        out.centroids.push_back(grid.centroids[out.cells[k]]);
        const auto f = grid.feature(out.cells[k]);
        for (std::size_t d = 0; d < f.size(); ++d) {
            out.features(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d)) = f[d];
        }
        if (count_weight > 0.0) {
            out.features(static_cast<Eigen::Index>(k), dim) = count_weight * grid.counts[out.cells[k]];
        }
    }
    return out;
}

}  // namespace

double SoftAssignment::marginal_deviation() const {
    double dev = 0.0;
    const Eigen::Index n = rows();
    const Eigen::Index m = cols();
    for (Eigen::Index l = 0; l < n; ++l) {
        dev = std::max(dev, std::abs(matrix.row(l).sum() - 1.0));
    }
    for (Eigen::Index c = 0; c < m; ++c) {
        dev = std::max(dev, std::abs(matrix.col(c).sum() - 1.0));
    }
    return dev;
}

Eigen::MatrixXd build_cost_matrix(const Eigen::MatrixXd& source_features,
                                  const Eigen::MatrixXd& target_features) {
    if (source_features.cols() != target_features.cols()) {
        throw std::invalid_argument("build_cost_matrix: feature dimensions differ");
    }
    const Eigen::MatrixXd a = normalized_rows(source_features);
    const Eigen::MatrixXd b = normalized_rows(target_features);
    Eigen::MatrixXd m = (2.0 - 2.0 * (a * b.transpose()).array()).matrix();
    return m.cwiseMax(0.0).cwiseMin(4.0);
}

SoftAssignment sinkhorn_log(const Eigen::MatrixXd& cost, double slack_cost, int iters, double beta,
                            std::vector<double>* trace) {
    if (iters < 1) {
        throw std::invalid_argument("sinkhorn_log: iters must be >= 1");
    }
    if (!cost.allFinite()) {
        throw std::invalid_argument("sinkhorn_log: cost matrix must be finite");
    }
    const Eigen::Index n = cost.rows();
    const Eigen::Index m = cost.cols();
    // Column-major storage: a column is contiguous, a row has stride n + 1.
    Eigen::MatrixXd la = Eigen::MatrixXd::Constant(n + 1, m + 1, -beta * slack_cost);
    la.topLeftCorner(n, m) = -beta * cost;

    SoftAssignment s;
    s.slack_cost = slack_cost;
    const Eigen::Index ld = n + 1;
    for (int it = 0; it < iters; ++it) {
        for (Eigen::Index l = 0; l < n; ++l) {
            const double z = log_sum_exp(la.data() + l, m + 1, ld);
            for (Eigen::Index c = 0; c <= m; ++c) {
                la(l, c) -= z;
            }
        }
        for (Eigen::Index c = 0; c < m; ++c) {
            const double z = log_sum_exp(la.data() + c * ld, n + 1, 1);
            la.col(c).array() -= z;
        }
        if (trace != nullptr) {
            s.matrix = la.array().exp().matrix();
            trace->push_back(s.marginal_deviation());
        }
    }
    s.matrix = la.array().exp().matrix();
    s.iterations = iters;
    return s;
}

Correspondences soft_correspondences(const SoftAssignment& s, std::span<const Vec3> source_centroids,
                                     std::span<const Vec3> target_centroids, double v_max,
                                     double elapsed) {
    const auto n = static_cast<std::size_t>(s.rows());
    const auto m = static_cast<std::size_t>(s.cols());
    if (source_centroids.size() != n || target_centroids.size() != m) {
        throw std::invalid_argument("soft_correspondences: centroid counts do not match the assignment");
    }
    const double radius = v_max * elapsed;
    Correspondences out;
    out.targets.resize(n);
    out.weights.resize(n, 0.0);
    for (std::size_t l = 0; l < n; ++l) {
        double w = 0.0;
        Vec3 acc = Vec3::Zero();
        for (std::size_t c = 0; c < m; ++c) {
            if ((source_centroids[l] - target_centroids[c]).norm() < radius) {
                const double v = s.matrix(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(c));
                w += v;
                acc += v * target_centroids[c];
            }
        }
        if (w > 0.0) {
            out.weights[l] = w;
            out.targets[l] = acc / w;
        } else {
            out.targets[l] = source_centroids[l];
            out.all_masked.push_back(l);
        }
    }
    return out;
}

double inlier_score(const SoftAssignment& s) {
    const Eigen::Index n = s.rows();
    const Eigen::Index m = s.cols();
    if (n + m == 0) {
        return 0.0;
    }
    const double block = s.matrix.topLeftCorner(n, m).sum();
    // Each non-slack entry counts once toward its row and once toward its column.
    const double v = (static_cast<double>(n + m) - 2.0 * block) / static_cast<double>(n + m);
    return std::clamp(v, 0.0, 1.0);
}

Eigen::MatrixXd embed_features(const Eigen::MatrixXd& features, int dim, double bandwidth,
                               std::uint64_t seed) {
    if (dim <= 0) {
        return features;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0 / bandwidth);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    Eigen::MatrixXd w(features.cols(), dim);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            w(i, j) = normal(rng);
        }
    }
    Eigen::RowVectorXd b(dim);
    for (int j = 0; j < dim; ++j) {
        b(j) = phase(rng);
    }
    Eigen::MatrixXd proj = features * w;
    proj.rowwise() += b;
    return (proj.array().cos() * std::sqrt(2.0 / dim)).matrix();
}

EgoEstimate estimate_ego_motion(const Frame& source, const Frame& target,
                                std::span<const double> source_fg, std::span<const double> target_fg,
                                const Featurizer& featurizer, const EgoConfig& config, double elapsed,
                                const PillarGrid* source_grid, const PillarGrid* target_grid) {
    if (!source_fg.empty() && source_fg.size() != source.size()) {
        throw std::invalid_argument("estimate_ego_motion: source scores do not match point count");
    }
    if (!target_fg.empty() && target_fg.size() != target.size()) {
        throw std::invalid_argument("estimate_ego_motion: target scores do not match point count");
    }
    const PillarGrid target_owned =
        target_grid != nullptr ? PillarGrid{} : pillarize(target, config.grid, featurizer);
    const PillarGrid& tgrid = target_grid != nullptr ? *target_grid : target_owned;
    const PillarSet tp =
        background_pillars(tgrid, target_fg, config.fg_threshold, config.n_ego, config.seed,
                           config.count_weight);
    if (tp.cells.size() < 3) {
        throw InsufficientBackground("estimate_ego_motion: fewer than 3 background pillars in target");
    }
    const Eigen::MatrixXd tfeat = embed_features(tp.features, config.embedding_dim,
                                                 config.embedding_bandwidth, config.embedding_seed);

    EgoEstimate est;
    est.diagnostics.target_pillars = tp.cells.size();
    RigidTransform current;
    for (int round = 0; round < std::max(1, config.rounds); ++round) {
        PillarGrid moved;
        const PillarGrid* sgrid = nullptr;
        if (round == 0 && source_grid != nullptr) {
            sgrid = source_grid;
        } else {
            Frame aligned = source;
            aligned.points = current.apply(source.points);
            moved = pillarize(aligned, config.grid, featurizer);
            sgrid = &moved;
        }
        const PillarSet sp =
            background_pillars(*sgrid, source_fg, config.fg_threshold, config.n_ego, config.seed,
                           config.count_weight);
        if (sp.cells.size() < 3) {
            throw InsufficientBackground("estimate_ego_motion: fewer than 3 background pillars in source");
        }
        const Eigen::MatrixXd sfeat = embed_features(sp.features, config.embedding_dim,
                                                     config.embedding_bandwidth, config.embedding_seed);
        const Eigen::MatrixXd cost = build_cost_matrix(sfeat, tfeat);
        const SoftAssignment s = sinkhorn_log(cost, config.slack_cost, config.sinkhorn_iters, config.beta);
        const Correspondences corr =
            soft_correspondences(s, sp.centroids, tp.centroids, config.v_max, elapsed);
        const RigidTransform delta = kabsch_weighted(sp.centroids, corr.targets, corr.weights);
        current = compose(delta, current);

        double wsum = 0.0;
        double rsum = 0.0;
        for (std::size_t l = 0; l < sp.centroids.size(); ++l) {
            wsum += corr.weights[l];
            rsum += corr.weights[l] * (delta.apply(sp.centroids[l]) - corr.targets[l]).norm();
        }
        est.diagnostics.inlier_score = inlier_score(s);
        est.diagnostics.mean_residual = wsum > 0.0 ? rsum / wsum : 0.0;
        est.diagnostics.source_pillars = sp.cells.size();
        est.diagnostics.all_masked = corr.all_masked.size();
        est.diagnostics.rounds = round + 1;
    }
    est.transform = current;
    return est;
}

}  // namespace rigid_accum
