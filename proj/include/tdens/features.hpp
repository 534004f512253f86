#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tdens/types.hpp"

namespace tdens {

/// Foreground mask from background differencing, one entry per pixel.
struct FgMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits; ///< 1 = foreground

    bool at(int x, int y) const {
        return bits[static_cast<std::size_t>(y) * width + x] != 0;
    }
};

/// Block feature layout: intensity histogram | orientation histogram |
/// foreground ratio | bias, K = intensity_bins + orient_bins + flags.
struct FeatureConfig {
    int intensity_bins = 8;
    int orient_bins = 8;
    bool include_fg_ratio = true;
    bool include_bias = true;
};

inline int feature_dim(const FeatureConfig& cfg) {
    return cfg.intensity_bins + cfg.orient_bins + (cfg.include_fg_ratio ? 1 : 0) +
           (cfg.include_bias ? 1 : 0);
}

inline void validate_feature_config(const FeatureConfig& cfg) {
    if (cfg.intensity_bins < 2 || cfg.orient_bins < 2)
        throw std::invalid_argument("feature config: histogram bins must be at least 2");
}

/// mask[p] = 1 iff |frame[p] - background[p]| > threshold.
inline FgMask background_subtract(const Frame& frame, const Frame& background, int threshold) {
    if (!frame.same_size(background))
        throw std::invalid_argument("background_subtract: dimension mismatch");
    if (threshold <= 0 || threshold >= 255)
        throw std::invalid_argument("background_subtract: threshold must be in (0,255)");
    FgMask mask;
    mask.width = frame.width;
    mask.height = frame.height;
    mask.bits.resize(frame.pixels.size());
    for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
        const int diff = static_cast<int>(frame.pixels[i]) - static_cast<int>(background.pixels[i]);
        mask.bits[i] = (diff > threshold || -diff > threshold) ? 1 : 0;
    }
    return mask;
}

namespace detail {

/// Intensity gradient with central differences; frame borders fall back to
/// one-sided differences so every pixel has a well-defined gradient.
inline void pixel_gradient(const Frame& f, int x, int y, double& gx, double& gy) {
    const auto v = [&](int px, int py) { return static_cast<double>(f.at(px, py)); };
    if (x == 0)
        gx = v(1, y) - v(0, y);
    else if (x == f.width - 1)
        gx = v(x, y) - v(x - 1, y);
    else
        gx = 0.5 * (v(x + 1, y) - v(x - 1, y));
    if (y == 0)
        gy = v(x, 1) - v(x, 0);
    else if (y == f.height - 1)
        gy = v(x, y) - v(x, y - 1);
    else
        gy = 0.5 * (v(x, y + 1) - v(x, y - 1));
}

} // namespace detail

/// Per-block descriptors over the foreground pixels of each block:
///   (a) L1-normalized intensity histogram (all-zero when the block has no
///       foreground),
///   (b) L1-normalized gradient-orientation histogram, votes weighted by
///       gradient magnitude, bins uniform over [0, 2pi) starting at angle 0,
///       no interpolation; zero-magnitude pixels cast no vote,
///   (c) foreground ratio |fg ∩ B_j| / |B_j|,
///   (d) constant bias 1.
/// Every entry lies in [0, 1].
inline FeatureMatrix extract_block_features(const Frame& frame, const FgMask& mask,
                                            const BlockGrid& grid, const FeatureConfig& cfg) {
    validate_feature_config(cfg);
    if (frame.width != mask.width || frame.height != mask.height)
        throw std::invalid_argument("extract_block_features: frame/mask dimension mismatch");
    const RectI& roi = grid.roi.rect;
    if (roi.x0 < 0 || roi.y0 < 0 || roi.x1 > frame.width || roi.y1 > frame.height)
        throw std::invalid_argument("extract_block_features: grid ROI not contained in the frame");

    const int K = feature_dim(cfg);
    const int ib = cfg.intensity_bins;
    const int ob = cfg.orient_bins;
    constexpr double two_pi = 6.283185307179586476925286766559;
    FeatureMatrix X = FeatureMatrix::Zero(grid.block_count(), K);

    for (int j = 0; j < grid.block_count(); ++j) {
        const RectI r = grid.block_rect(j);
        int fg_count = 0;
        double mag_total = 0.0;
        for (int y = r.y0; y < r.y1; ++y) {
            for (int x = r.x0; x < r.x1; ++x) {
                if (!mask.at(x, y)) continue;
                ++fg_count;
                const int bin = static_cast<int>(frame.at(x, y)) * ib / 256;
                X(j, bin) += 1.0;
                double gx, gy;
                detail::pixel_gradient(frame, x, y, gx, gy);
                const double mag = std::sqrt(gx * gx + gy * gy);
                if (mag > 0.0) {
                    double angle = std::atan2(gy, gx);
                    if (angle < 0.0) angle += two_pi;
                    int obin = static_cast<int>(angle / two_pi * ob);
                    if (obin >= ob) obin = ob - 1; // guard the angle == 2pi rounding edge
                    X(j, ib + obin) += mag;
                    mag_total += mag;
                }
            }
        }
        if (fg_count > 0)
            X.row(j).segment(0, ib) /= static_cast<double>(fg_count);
        if (mag_total > 0.0)
            X.row(j).segment(ib, ob) /= mag_total;
        int col = ib + ob;
        if (cfg.include_fg_ratio) {
            const double block_pixels = static_cast<double>(r.width()) * r.height();
            X(j, col++) = fg_count / block_pixels;
        }
        if (cfg.include_bias) X(j, col) = 1.0;
    }
    return X;
}

/// FNV-1a 64-bit hash.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = UINT64_C(0xcbf29ce484222325);
    for (char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= UINT64_C(0x100000001b3);
    }
    return h;
}

/// Hash of everything that shapes the block features — histogram layout,
/// background threshold, block size. Stored in model files so evaluation
/// with a different feature pipeline fails loudly instead of silently
/// producing garbage.
inline std::uint64_t feature_pipeline_hash(const FeatureConfig& cfg, int bg_threshold,
                                           int block_w, int block_h) {
    std::string canon = "feat-v1|ib=" + std::to_string(cfg.intensity_bins) +
                        "|ob=" + std::to_string(cfg.orient_bins) +
                        "|fg=" + std::to_string(cfg.include_fg_ratio ? 1 : 0) +
                        "|bias=" + std::to_string(cfg.include_bias ? 1 : 0) +
                        "|thr=" + std::to_string(bg_threshold) +
                        "|bw=" + std::to_string(block_w) +
                        "|bh=" + std::to_string(block_h);
    return fnv1a64(canon);
}

} // namespace tdens
