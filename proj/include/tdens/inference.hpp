#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdens/optimizer.hpp"
#include "tdens/types.hpp"

namespace tdens {

/// Block predictions for one frame. Densities are non-negative by
/// definition, so counting uses the clamped values; the raw linear outputs
/// stay available to make the clamp's effect measurable.
struct BlockPrediction {
    Vector raw;     ///< w_j . x_j
    Vector clamped; ///< max(0, raw)
};

inline BlockPrediction predict_blocks(const WeightMatrix& W, const FeatureMatrix& X) {
    BlockPrediction p;
    p.raw = predict_raw(W, X);
    p.clamped = p.raw.cwiseMax(0.0);
    return p;
}

/// Integrate block densities to a frame-level count.
inline double count_from_blocks(const Vector& block_densities) {
    return block_densities.sum();
}

/// Vehicles per unit region length.
inline double traffic_density(double count, const Roi& roi) {
    if (!(roi.region_length > 0.0))
        throw std::invalid_argument("traffic_density: region length must be positive");
    return count / roi.region_length;
}

struct FrameEval {
    std::string frame_id;
    double true_count = 0.0;
    double est_count = 0.0;
};

struct EvalResult {
    double mae = 0.0; ///< mean |est - true|
    double mse = 0.0; ///< mean (est - true)^2
    double ara = 0.0; ///< 1 - mean(|est - true| / max(true, 1))
    std::vector<FrameEval> per_frame;
};

/// Count metrics over a set of frames. The relative-error denominator is
/// guarded by max(true, 1) so zero-vehicle frames stay well-defined.
inline EvalResult evaluate(const std::vector<std::string>& frame_ids,
                           const std::vector<double>& true_counts,
                           const std::vector<double>& est_counts) {
    const std::size_t n = true_counts.size();
    if (n == 0) throw std::invalid_argument("evaluate: empty input");
    if (est_counts.size() != n || (!frame_ids.empty() && frame_ids.size() != n))
        throw std::invalid_argument("evaluate: length mismatch");
    EvalResult res;
    double abs_sum = 0.0, sq_sum = 0.0, rel_sum = 0.0;
    res.per_frame.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double e = est_counts[i] - true_counts[i];
        abs_sum += std::abs(e);
        sq_sum += e * e;
        rel_sum += std::abs(e) / std::max(true_counts[i], 1.0);
        res.per_frame.push_back(
            FrameEval{frame_ids.empty() ? std::string() : frame_ids[i], true_counts[i], est_counts[i]});
    }
    const double dn = static_cast<double>(n);
    res.mae = abs_sum / dn;
    res.mse = sq_sum / dn;
    res.ara = 1.0 - rel_sum / dn;
    return res;
}

inline EvalResult evaluate(const std::vector<double>& true_counts,
                           const std::vector<double>& est_counts) {
    return evaluate({}, true_counts, est_counts);
}

} // namespace tdens
