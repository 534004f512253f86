#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tdens {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Per-frame block features: J rows (one per block), K columns.
using FeatureMatrix = Eigen::MatrixXd;

/// Stacked block regressors: K x J, column j is the weight vector of block j.
using WeightMatrix = Eigen::MatrixXd;

/// Single-channel 8-bit raster, row-major.
struct Frame {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(int x, int y) const {
        return pixels[static_cast<std::size_t>(y) * width + x];
    }
    std::uint8_t& at(int x, int y) {
        return pixels[static_cast<std::size_t>(y) * width + x];
    }
    bool same_size(const Frame& o) const {
        return width == o.width && height == o.height;
    }
    bool operator==(const Frame&) const = default;
};

inline Frame make_frame(int width, int height, std::uint8_t fill = 0) {
    if (width < 1 || height < 1)
        throw std::invalid_argument("frame dimensions must be at least 1x1");
    Frame f;
    f.width = width;
    f.height = height;
    f.pixels.assign(static_cast<std::size_t>(width) * height, fill);
    return f;
}

/// Half-open integer rectangle [x0, x1) x [y0, y1).
struct RectI {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool valid() const { return x1 > x0 && y1 > y0; }
    bool operator==(const RectI&) const = default;
};

/// Vehicle bounding box in half-open pixel coordinates, so the area is an
/// exact integer.
struct BBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    std::int64_t area() const {
        return static_cast<std::int64_t>(x1 - x0) * (y1 - y0);
    }
    bool valid() const { return x1 > x0 && y1 > y0; }
    bool operator==(const BBox&) const = default;
};

/// All boxes annotated on one frame. `boxes` may be empty.
struct Annotation {
    std::string frame_id;
    std::vector<BBox> boxes;
};

/// Region of interest plus its physical length (e.g. meters), the divisor
/// that turns a vehicle count into a traffic density.
struct Roi {
    RectI rect;
    double region_length = 1.0;
};

/// Non-negative per-pixel field whose integral over a region is the vehicle
/// count in that region.
struct DensityMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    double at(int x, int y) const {
        return values[static_cast<std::size_t>(y) * width + x];
    }
    double& at(int x, int y) {
        return values[static_cast<std::size_t>(y) * width + x];
    }
    double sum() const {
        return std::accumulate(values.begin(), values.end(), 0.0);
    }
};

inline DensityMap make_density_map(int width, int height) {
    if (width < 1 || height < 1)
        throw std::invalid_argument("density map dimensions must be at least 1x1");
    DensityMap m;
    m.width = width;
    m.height = height;
    m.values.assign(static_cast<std::size_t>(width) * height, 0.0);
    return m;
}

inline Matrix to_matrix(const DensityMap& m) {
    Matrix out(m.height, m.width);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            out(y, x) = m.at(x, y);
    return out;
}

/// Partition of the ROI into rows x cols rectangular blocks, indexed
/// j = row * cols + col. Edge blocks absorb the remainder, so every ROI pixel
/// belongs to exactly one block and no density mass is lost.
struct BlockGrid {
    Roi roi;
    int block_w = 0;
    int block_h = 0;
    int rows = 0;
    int cols = 0;

    int block_count() const { return rows * cols; }

    RectI block_rect(int j) const {
        const int row = j / cols;
        const int col = j % cols;
        RectI r;
        r.x0 = roi.rect.x0 + col * block_w;
        r.y0 = roi.rect.y0 + row * block_h;
        r.x1 = std::min(r.x0 + block_w, roi.rect.x1);
        r.y1 = std::min(r.y0 + block_h, roi.rect.y1);
        return r;
    }
};

inline BlockGrid make_block_grid(const Roi& roi, int block_w, int block_h) {
    if (!roi.rect.valid())
        throw std::invalid_argument("ROI rectangle is empty");
    if (roi.region_length <= 0.0)
        throw std::invalid_argument("ROI region length must be positive");
    if (block_w < 1 || block_h < 1)
        throw std::invalid_argument("block size must be at least 1x1");
    BlockGrid g;
    g.roi = roi;
    g.block_w = block_w;
    g.block_h = block_h;
    g.cols = (roi.rect.width() + block_w - 1) / block_w;
    g.rows = (roi.rect.height() + block_h - 1) / block_h;
    return g;
}

/// Solver settings for the rank-constrained block regression.
struct Hyperparams {
    double alpha = 1e-4;      ///< Frobenius-norm penalty weight
    double beta = 0.0;        ///< L1 penalty weight
    int rank = 2;             ///< rank bound on the weight matrix
    double eta = 1e-2;        ///< subgradient step size
    int max_iters = 500;
    int restarts = 1;
    double tol = 1e-6;        ///< relative objective change for convergence
    std::uint64_t seed = 0;
    bool accelerated = true;  ///< Nesterov-style extrapolation on/off
    bool step_decay = false;  ///< eta / sqrt(k) schedule instead of a constant step
};

} // namespace tdens
