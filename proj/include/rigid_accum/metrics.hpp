#pragma once

#include "rigid_accum/assoc.hpp"
#include "rigid_accum/core.hpp"
#include "rigid_accum/segmenter.hpp"

#include <limits>
#include <map>
#include <vector>

namespace rigid_accum {

class EmptyMask : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NoGtClusters : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// EPE in meters, the rest in percent.
struct FlowMetrics {
    double epe_avg = 0.0;
    double epe_med = 0.0;
    double acc_s = 0.0;
    double acc_r = 0.0;
    double outliers = 0.0;
    double routliers = 0.0;
    std::size_t count = 0;
};

enum class Averaging {
    /// Metrics per source frame, then the mean over frames.
    PerFrame,
    /// All masked points of the scene pooled together.
    Pooled,
};

/// Flow metrics over masked points of the source frames (frame 0 is the
/// target and is skipped). Frames without masked points are left out of the
/// frame average. Throws EmptyMask when nothing is masked.
FlowMetrics flow_metrics(const FlowField& pred, const FlowField& gt, const FrameMasks& mask,
                         Averaging averaging = Averaging::PerFrame);

/// Unweighted mean of per-scene metrics; counts are summed.
FlowMetrics average_metrics(const std::vector<FlowMetrics>& scenes);

struct AssocMetrics {
    double wcov = 0.0;
    std::map<double, double> recall;
    std::map<double, double> precision;
};

/// Clusters are the sets of (frame, index) sharing a non-zero id. WCov is the
/// size-weighted mean over GT clusters of the best IoU with any prediction.
/// Recall at t is the fraction of GT clusters with some IoU >= t, precision
/// the same for predicted clusters (0 when there are none).
AssocMetrics assoc_metrics(const FrameLabels& pred, const FrameLabels& gt,
                           const std::vector<double>& thresholds = {0.5, 0.6, 0.7, 0.8, 0.9});

/// Empirical CDF with strict-less-than counting.
class Ecdf {
public:
    explicit Ecdf(std::vector<double> values);
    double operator()(double x) const;
    /// Distinct values v with ECDF just above v, i.e. |{o <= v}| / n.
    std::vector<std::pair<double, double>> steps() const;
    std::size_t size() const { return sorted_.size(); }

private:
    std::vector<double> sorted_;
};

/// |x| <= half_extent, |y| <= half_extent and z > ground_z.
std::vector<std::uint8_t> eval_region_mask(std::span<const Vec3> points, double half_extent = 32.0,
                                           double ground_z = -std::numeric_limits<double>::infinity());

}  // namespace rigid_accum
