#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tdens/types.hpp"

namespace tdens {

/// Ground-truth density from bounding boxes: each box spreads a unit of mass
/// uniformly over its own area, D(p) = sum over covering boxes of 1/A(o).
///
/// Boxes reaching outside the frame are clipped for rasterization, but 1/A
/// keeps the ORIGINAL box area, so a vehicle half outside the frame
/// contributes half a count. A box with no frame overlap signals a bad
/// annotation and is rejected.
inline DensityMap box_density(int width, int height, const std::vector<BBox>& boxes) {
    DensityMap map = make_density_map(width, height);
    for (const BBox& b : boxes) {
        if (!b.valid())
            throw std::invalid_argument("box_density: degenerate box");
        const int cx0 = std::max(b.x0, 0);
        const int cy0 = std::max(b.y0, 0);
        const int cx1 = std::min(b.x1, width);
        const int cy1 = std::min(b.y1, height);
        if (cx0 >= cx1 || cy0 >= cy1)
            throw std::invalid_argument("box_density: box does not intersect the frame");
        const double mass = 1.0 / static_cast<double>(b.area());
        for (int y = cy0; y < cy1; ++y)
            for (int x = cx0; x < cx1; ++x)
                map.at(x, y) += mass;
    }
    return map;
}

/// Per-block density: out[j] is the density mass inside block j. Summing all
/// blocks reproduces the ROI total because the blocks tile the ROI.
inline Vector block_density(const DensityMap& map, const BlockGrid& grid) {
    const RectI& roi = grid.roi.rect;
    if (roi.x0 < 0 || roi.y0 < 0 || roi.x1 > map.width || roi.y1 > map.height)
        throw std::invalid_argument("block_density: grid ROI not contained in the map");
    Vector out(grid.block_count());
    for (int j = 0; j < grid.block_count(); ++j) {
        const RectI r = grid.block_rect(j);
        double s = 0.0;
        for (int y = r.y0; y < r.y1; ++y)
            for (int x = r.x0; x < r.x1; ++x)
                s += map.at(x, y);
        out[j] = s;
    }
    return out;
}

/// Ground-truth density from point annotations: one 2D Gaussian per center,
/// truncated at 4*sigma and renormalized over its in-frame support so every
/// kernel integrates to exactly 1 — even for centers near the border.
inline DensityMap gaussian_density(int width, int height,
                                   const std::vector<std::pair<double, double>>& centers,
                                   double sigma) {
    if (!(sigma > 0.0))
        throw std::invalid_argument("gaussian_density: sigma must be positive");
    DensityMap map = make_density_map(width, height);
    const double radius = 4.0 * sigma;
    const double r2 = radius * radius;
    const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    for (const auto& [cx, cy] : centers) {
        if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
            throw std::invalid_argument("gaussian_density: center outside the frame");
        const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(cx + radius)));
        const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(cy + radius)));
        std::vector<double> kernel;
        kernel.reserve(static_cast<std::size_t>(x1 - x0 + 1) * (y1 - y0 + 1));
        double total = 0.0;
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - cx;
                const double dy = y - cy;
                const double d2 = dx * dx + dy * dy;
                const double v = d2 <= r2 ? std::exp(-d2 * inv_two_sigma2) : 0.0;
                kernel.push_back(v);
                total += v;
            }
        }
        // total > 0 always: the center pixel itself is within 4*sigma.
        std::size_t idx = 0;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                map.at(x, y) += kernel[idx++] / total;
    }
    return map;
}

} // namespace tdens
