#include "rigid_accum/metrics.hpp"

#include <algorithm>
#include <limits>

namespace rigid_accum {

namespace {

struct Accum {
    std::vector<double> epe;
    double acc_s = 0.0;
    double acc_r = 0.0;
    double outliers = 0.0;
    double routliers = 0.0;

    void add(const Vec3& p, const Vec3& g) {
        const double e = (p - g).norm();
        const double rel = e / std::max(g.norm(), 1e-9);
        epe.push_back(e);
        acc_s += (e < 0.05 || rel < 0.05) ? 1.0 : 0.0;
        acc_r += (e < 0.10 || rel < 0.10) ? 1.0 : 0.0;
        outliers += (e > 0.30 || rel > 0.10) ? 1.0 : 0.0;
        routliers += (e > 0.30 && rel > 0.30) ? 1.0 : 0.0;
    }

    FlowMetrics finish() {
        FlowMetrics m;
        const auto n = static_cast<double>(epe.size());
        m.count = epe.size();
        double sum = 0.0;
        for (const double e : epe) {
            sum += e;
        }
        m.epe_avg = sum / n;
        const auto mid = epe.begin() + static_cast<std::ptrdiff_t>((epe.size() - 1) / 2);
        std::nth_element(epe.begin(), mid, epe.end());
        m.epe_med = *mid;
        m.acc_s = 100.0 * acc_s / n;
        m.acc_r = 100.0 * acc_r / n;
        m.outliers = 100.0 * outliers / n;
        m.routliers = 100.0 * routliers / n;
        return m;
    }
};

}  // namespace

FlowMetrics flow_metrics(const FlowField& pred, const FlowField& gt, const FrameMasks& mask, Averaging averaging) {
    if (pred.size() != gt.size() || mask.size() != gt.size()) {
        throw std::invalid_argument("flow_metrics: frame counts differ");
    }
    std::vector<FlowMetrics> frames;
    Accum pooled;
    for (std::size_t k = 1; k < gt.size(); ++k) {
        if (pred.frames[k].size() != gt.frames[k].size() || mask[k].size() != gt.frames[k].size()) {
            throw std::invalid_argument("flow_metrics: per-frame sizes differ");
        }
        Accum acc;
        for (std::size_t i = 0; i < gt.frames[k].size(); ++i) {
            if (mask[k][i]) {
                acc.add(pred.frames[k][i], gt.frames[k][i]);
                pooled.add(pred.frames[k][i], gt.frames[k][i]);
            }
        }
        if (!acc.epe.empty()) {
            frames.push_back(acc.finish());
        }
    }
    if (pooled.epe.empty()) {
        throw EmptyMask("flow_metrics: no masked points");
    }
    if (averaging == Averaging::Pooled) {
        return pooled.finish();
    }
    return average_metrics(frames);
}

FlowMetrics average_metrics(const std::vector<FlowMetrics>& scenes) {
    if (scenes.empty()) {
        throw EmptyMask("average_metrics: nothing to average");
    }
    FlowMetrics m;
    for (const auto& s : scenes) {
        m.epe_avg += s.epe_avg;
        m.epe_med += s.epe_med;
        m.acc_s += s.acc_s;
        m.acc_r += s.acc_r;
        m.outliers += s.outliers;
        m.routliers += s.routliers;
        m.count += s.count;
    }
    const auto n = static_cast<double>(scenes.size());
    m.epe_avg /= n;
    m.epe_med /= n;
    m.acc_s /= n;
    m.acc_r /= n;
    m.outliers /= n;
    m.routliers /= n;
    return m;
}

AssocMetrics assoc_metrics(const FrameLabels& pred, const FrameLabels& gt, const std::vector<double>& thresholds) {
    if (pred.size() != gt.size()) {
        throw std::invalid_argument("assoc_metrics: frame counts differ");
    }
    std::map<std::uint32_t, double> gt_size;
    std::map<std::uint32_t, double> pred_size;
    std::map<std::pair<std::uint32_t, std::uint32_t>, double> inter;
    for (std::size_t k = 0; k < gt.size(); ++k) {
        if (pred[k].size() != gt[k].size()) {
            throw std::invalid_argument("assoc_metrics: per-frame sizes differ");
        }
        for (std::size_t i = 0; i < gt[k].size(); ++i) {
            const std::uint32_t g = gt[k][i];
            const std::uint32_t p = pred[k][i];
            if (g != 0) {
                gt_size[g] += 1.0;
            }
            if (p != 0) {
                pred_size[p] += 1.0;
            }
            if (g != 0 && p != 0) {
                inter[{g, p}] += 1.0;
            }
        }
    }
    if (gt_size.empty()) {
        throw NoGtClusters("assoc_metrics: ground truth has no clusters");
    }
    std::map<std::uint32_t, double> best_gt;
    std::map<std::uint32_t, double> best_pred;
    for (const auto& [key, n] : inter) {
        const double iou = n / (gt_size[key.first] + pred_size[key.second] - n);
        best_gt[key.first] = std::max(best_gt[key.first], iou);
        best_pred[key.second] = std::max(best_pred[key.second], iou);
    }
    AssocMetrics out;
    double total = 0.0;
    for (const auto& [g, size] : gt_size) {
        total += size;
        out.wcov += size * best_gt[g];
    }
    out.wcov /= total;
    for (const double t : thresholds) {
        double hit = 0.0;
        for (const auto& [g, size] : gt_size) {
            hit += best_gt[g] >= t ? 1.0 : 0.0;
        }
        out.recall[t] = hit / static_cast<double>(gt_size.size());
        double phit = 0.0;
        for (const auto& [p, size] : pred_size) {
            phit += best_pred[p] >= t ? 1.0 : 0.0;
        }
        out.precision[t] = pred_size.empty() ? 0.0 : phit / static_cast<double>(pred_size.size());
    }
    return out;
}

Ecdf::Ecdf(std::vector<double> values) : sorted_(std::move(values)) {
    if (sorted_.empty()) {
        throw EmptyInput("Ecdf: empty input");
    }
    std::sort(sorted_.begin(), sorted_.end());
}

double Ecdf::operator()(double x) const {
    const auto below = std::lower_bound(sorted_.begin(), sorted_.end(), x) - sorted_.begin();
    return static_cast<double>(below) / static_cast<double>(sorted_.size());
}

std::vector<std::pair<double, double>> Ecdf::steps() const {
    std::vector<std::pair<double, double>> out;
    const auto n = static_cast<double>(sorted_.size());
    for (std::size_t i = 0; i < sorted_.size(); ++i) {
        if (i + 1 == sorted_.size() || sorted_[i + 1] != sorted_[i]) {
            out.emplace_back(sorted_[i], static_cast<double>(i + 1) / n);
        }
    }
    return out;
}

std::vector<std::uint8_t> eval_region_mask(std::span<const Vec3> points, double half_extent, double ground_z) {
    std::vector<std::uint8_t> out(points.size(), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec3& p = points[i];
        out[i] = std::abs(p.x()) <= half_extent && std::abs(p.y()) <= half_extent && p.z() > ground_z ? 1 : 0;
    }
    return out;
}

}  // namespace rigid_accum
