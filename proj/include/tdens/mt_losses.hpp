#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tdens/types.hpp"

namespace tdens {

/// Default weight of the count term in the combined loss.
inline constexpr double kDefaultCountLossWeight = 0.1;

/// Default outlier threshold for the robust count loss, in vehicles.
inline constexpr double kDefaultHuberDelta = 5.0;

/// Frame count split into the integral of the density map plus a learned
/// offset supplied by the caller.
struct CountPrediction {
    double base_count = 0.0;
    double offset = 0.0;
    double total = 0.0; ///< base_count + offset, maintained exactly
};

inline CountPrediction residual_count(const DensityMap& density, double offset) {
    CountPrediction p;
    p.base_count = density.sum();
    p.offset = offset;
    p.total = p.base_count + offset;
    return p;
}

struct DensityLoss {
    double loss = 0.0;
    std::vector<Matrix> grads; ///< d loss / d pred_i, same shape as pred_i
};

/// Pixelwise squared-error loss over a batch of density maps:
///   loss = (1/2N) sum_i sum_p (pred_i(p) - gt_i(p))^2
///   grad_i(p) = (1/N) (pred_i(p) - gt_i(p))
inline DensityLoss density_loss(const std::vector<Matrix>& pred_maps,
                                const std::vector<Matrix>& gt_maps) {
    const std::size_t n = pred_maps.size();
    if (n == 0) throw std::invalid_argument("density_loss: empty batch");
    if (gt_maps.size() != n) throw std::invalid_argument("density_loss: batch size mismatch");
    DensityLoss out;
    out.grads.reserve(n);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (pred_maps[i].rows() != gt_maps[i].rows() || pred_maps[i].cols() != gt_maps[i].cols())
            throw std::invalid_argument("density_loss: map shape mismatch");
        const Matrix diff = pred_maps[i] - gt_maps[i];
        out.loss += 0.5 * inv_n * diff.squaredNorm();
        out.grads.push_back(inv_n * diff);
    }
    return out;
}

struct HuberLoss {
    double loss = 0.0;
    double dloss_dest = 0.0; ///< derivative with respect to the estimate
};

/// Robust count loss with error e = est - true:
///   |e| <= delta:  e^2 / 2          derivative e
///   |e| >  delta:  delta*|e| - delta^2/2   derivative +-delta
/// Quadratic near zero, linear in the tails, C^1 at the transition.
inline HuberLoss huber_count_loss(double est, double true_count, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("huber_count_loss: delta must be positive");
    const double e = est - true_count;
    HuberLoss out;
    if (std::abs(e) <= delta) {
        out.loss = 0.5 * e * e;
        out.dloss_dest = e;
    } else {
        out.loss = delta * std::abs(e) - 0.5 * delta * delta;
        out.dloss_dest = e > 0.0 ? delta : -delta;
    }
    return out;
}

/// Combined objective: density term plus lambda times the mean per-frame
/// count loss. An empty count batch contributes nothing.
inline double total_loss(double density_term, const std::vector<double>& count_terms,
                         double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be non-negative");
    if (count_terms.empty()) return density_term;
    double sum = 0.0;
    for (double c : count_terms) sum += c;
    return density_term + lambda * sum / static_cast<double>(count_terms.size());
}

} // namespace tdens
