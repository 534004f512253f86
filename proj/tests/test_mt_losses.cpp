#include <cmath>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "tdens/mt_losses.hpp"
#include "tdens/rng.hpp"

using namespace tdens;

namespace {

std::vector<Matrix> random_maps(Xorshift64Star& rng, std::size_t n, int rows, int cols) {
    std::vector<Matrix> maps;
    for (std::size_t i = 0; i < n; ++i) {
        Matrix m(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                m(r, c) = rng.uniform(0.0, 0.5);
        maps.push_back(m);
    }
    return maps;
}

} // namespace

TEST(ResidualCount, OffsetZeroIsMapSum) {
    DensityMap d = make_density_map(3, 2);
    d.values = {0.5, 0.25, 0.25, 1.0, 0.0, 2.0};
    const CountPrediction p = residual_count(d, 0.0);
    EXPECT_DOUBLE_EQ(p.base_count, 4.0);
    EXPECT_DOUBLE_EQ(p.offset, 0.0);
    EXPECT_DOUBLE_EQ(p.total, 4.0);
}

TEST(ResidualCount, ZeroMapCarriesOffset) {
    const DensityMap d = make_density_map(4, 4);
    const CountPrediction p = residual_count(d, 2.5);
    EXPECT_DOUBLE_EQ(p.base_count, 0.0);
    EXPECT_DOUBLE_EQ(p.total, 2.5);
}

TEST(ResidualCount, LinearInMapAndOffset) {
    Xorshift64Star rng(71);
    DensityMap d = make_density_map(5, 3);
    for (auto& v : d.values) v = rng.uniform(0.0, 1.0);
    DensityMap scaled = d;
    for (auto& v : scaled.values) v *= 3.0;
    const double base = residual_count(d, 0.0).total;
    EXPECT_NEAR(residual_count(scaled, 1.25).total, 3.0 * base + 1.25, 1e-12);
    EXPECT_DOUBLE_EQ(residual_count(d, 7.0).total,
                     residual_count(d, 0.0).base_count + 7.0);
}

TEST(DensityLoss, PerfectPredictionIsZero) {
    Xorshift64Star rng(72);
    const std::vector<Matrix> maps = random_maps(rng, 3, 4, 5);
    const DensityLoss l = density_loss(maps, maps);
    EXPECT_DOUBLE_EQ(l.loss, 0.0);
    for (const Matrix& g : l.grads) EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(DensityLoss, SinglePixelHandValue) {
    Matrix pred(1, 1), gt(1, 1);
    pred(0, 0) = 3.0;
    gt(0, 0) = 1.0;
    const DensityLoss l = density_loss({pred}, {gt});
    EXPECT_DOUBLE_EQ(l.loss, 2.0); // 0.5 * (3-1)^2
    EXPECT_DOUBLE_EQ(l.grads[0](0, 0), 2.0);
}

TEST(DensityLoss, BatchAveraging) {
    Matrix a(1, 1), b(1, 1), z(1, 1);
    a(0, 0) = 2.0;
    b(0, 0) = 4.0;
    z(0, 0) = 0.0;
    const DensityLoss l = density_loss({a, b}, {z, z});
    EXPECT_DOUBLE_EQ(l.loss, (0.5 * 4.0 + 0.5 * 16.0) / 2.0);
    EXPECT_DOUBLE_EQ(l.grads[0](0, 0), 1.0); // (1/N)(pred-gt) with N=2
    EXPECT_DOUBLE_EQ(l.grads[1](0, 0), 2.0);
}

TEST(DensityLoss, GradientMatchesFiniteDifferences) {
    Xorshift64Star rng(73);
    std::vector<Matrix> pred = random_maps(rng, 2, 3, 4);
    const std::vector<Matrix> gt = random_maps(rng, 2, 3, 4);
    const DensityLoss l = density_loss(pred, gt);
    const double h = 1e-6;
    for (int p = 0; p < 50; ++p) {
        const std::size_t i = rng.uniform_int(2);
        const int r = static_cast<int>(rng.uniform_int(3));
        const int c = static_cast<int>(rng.uniform_int(4));
        std::vector<Matrix> up = pred, dn = pred;
        up[i](r, c) += h;
        dn[i](r, c) -= h;
        const double fd =
            (density_loss(up, gt).loss - density_loss(dn, gt).loss) / (2.0 * h);
        EXPECT_NEAR(l.grads[i](r, c), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST(DensityLoss, NonNegativeAndZeroOnlyAtEquality) {
    Xorshift64Star rng(74);
    const std::vector<Matrix> gt = random_maps(rng, 2, 3, 3);
    std::vector<Matrix> pred = gt;
    pred[1](2, 2) += 1e-3;
    EXPECT_GT(density_loss(pred, gt).loss, 0.0);
}

TEST(DensityLoss, RejectsBadBatches) {
    Matrix a = Matrix::Zero(2, 2);
    Matrix b = Matrix::Zero(2, 3);
    EXPECT_THROW(density_loss({}, {}), std::invalid_argument);
    EXPECT_THROW(density_loss({a}, {a, a}), std::invalid_argument);
    EXPECT_THROW(density_loss({a}, {b}), std::invalid_argument);
}

TEST(HuberLoss, QuadraticBranch) {
    const HuberLoss l = huber_count_loss(10.5, 10.0, 1.0);
    EXPECT_DOUBLE_EQ(l.loss, 0.125);
    EXPECT_DOUBLE_EQ(l.dloss_dest, 0.5);
}

TEST(HuberLoss, LinearBranch) {
    const HuberLoss l = huber_count_loss(12.0, 10.0, 1.0);
    EXPECT_DOUBLE_EQ(l.loss, 1.5); // 1*2 - 0.5
    EXPECT_DOUBLE_EQ(l.dloss_dest, 1.0);
    const HuberLoss neg = huber_count_loss(8.0, 10.0, 1.0);
    EXPECT_DOUBLE_EQ(neg.loss, 1.5);
    EXPECT_DOUBLE_EQ(neg.dloss_dest, -1.0);
}

TEST(HuberLoss, ContinuousAtThreshold) {
    const double delta = 2.5;
    for (double side : {-1.0, 1.0}) {
        const double at = huber_count_loss(side * delta, 0.0, delta).loss;
        EXPECT_DOUBLE_EQ(at, 0.5 * delta * delta);
        const double lo = huber_count_loss(side * (delta - 1e-9), 0.0, delta).loss;
        const double hi = huber_count_loss(side * (delta + 1e-9), 0.0, delta).loss;
        EXPECT_NEAR(lo, at, 1e-8);
        EXPECT_NEAR(hi, at, 1e-8);
        // derivative is continuous too
        const double dlo = huber_count_loss(side * (delta - 1e-9), 0.0, delta).dloss_dest;
        const double dhi = huber_count_loss(side * (delta + 1e-9), 0.0, delta).dloss_dest;
        EXPECT_NEAR(dlo, side * delta, 1e-8);
        EXPECT_NEAR(dhi, side * delta, 1e-8);
    }
}

TEST(HuberLoss, BoundedByHalfSquaredError) {
    Xorshift64Star rng(75);
    const double delta = 5.0;
    for (int t = 0; t < 200; ++t) {
        const double e = rng.uniform(-20.0, 20.0);
        const HuberLoss l = huber_count_loss(e, 0.0, delta);
        EXPECT_LE(l.loss, 0.5 * e * e + 1e-12);
        if (std::abs(e) <= delta)
            EXPECT_DOUBLE_EQ(l.loss, 0.5 * e * e);
        else
            EXPECT_LT(l.loss, 0.5 * e * e);
    }
}

TEST(HuberLoss, DerivativeMatchesFiniteDifferences) {
    Xorshift64Star rng(76);
    const double delta = 3.0;
    const double h = 1e-5;
    for (int t = 0; t < 50; ++t) {
        double est = rng.uniform(-10.0, 10.0);
        // keep clear of the kink where the second derivative jumps
        if (std::abs(std::abs(est) - delta) < 10 * h) est += 20 * h;
        const HuberLoss l = huber_count_loss(est, 0.0, delta);
        const double fd = (huber_count_loss(est + h, 0.0, delta).loss -
                           huber_count_loss(est - h, 0.0, delta).loss) /
                          (2.0 * h);
        EXPECT_NEAR(l.dloss_dest, fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST(HuberLoss, RejectsNonPositiveDelta) {
    EXPECT_THROW(huber_count_loss(1.0, 0.0, 0.0), std::invalid_argument);
    EXPECT_THROW(huber_count_loss(1.0, 0.0, -2.0), std::invalid_argument);
}

TEST(TotalLoss, LambdaZeroDropsCountTerm) {
    EXPECT_DOUBLE_EQ(total_loss(1.75, {10.0, 20.0}, 0.0), 1.75);
}

TEST(TotalLoss, HandComputedCombination) {
    EXPECT_DOUBLE_EQ(total_loss(1.0, {2.0, 4.0}, 0.1), 1.3);
}

TEST(TotalLoss, EmptyCountBatchContributesNothing) {
    EXPECT_DOUBLE_EQ(total_loss(0.5, {}, 0.1), 0.5);
}

TEST(TotalLoss, DefaultsMatchDocumentedSettings) {
    EXPECT_DOUBLE_EQ(kDefaultCountLossWeight, 0.1);
    EXPECT_DOUBLE_EQ(kDefaultHuberDelta, 5.0);
}

TEST(TotalLoss, RejectsNegativeLambda) {
    EXPECT_THROW(total_loss(1.0, {1.0}, -0.1), std::invalid_argument);
}
