#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tdens/mt_losses.hpp"
#include "tdens/optimizer.hpp"
#include "tdens/rng.hpp"
#include "tdens/types.hpp"

/// Central finite-difference verification of every analytic gradient in the
/// library. Used by the unit tests and by the `check-grad` CLI subcommand.

namespace tdens {

struct CheckOptions {
    double tol = 1e-5;     ///< max allowed relative error
    double fd_step = 1e-5; ///< central-difference step
    std::uint64_t seed = 12345;
    int points = 50;       ///< random points per suite
    /// Test fixture: deliberately flip the sign of the robust count-loss
    /// derivative so the harness itself can be shown to catch a bad gradient.
    bool inject_huber_sign_flip = false;
};

struct CheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    int points = 0;
    bool pass = false;
};

struct CheckResult {
    std::vector<CheckEntry> entries;
    bool all_pass = true;
    std::string worst_name;
    double worst_err = 0.0;
};

namespace detail {

/// Norm-level relative error between an analytic and a finite-difference
/// gradient, guarded against both being ~0.
inline double rel_err(double analytic, double fd) {
    const double denom = std::max(std::abs(analytic) + std::abs(fd), 1e-12);
    return std::abs(analytic - fd) / denom;
}

inline double rel_err(const Matrix& analytic, const Matrix& fd) {
    const double denom = std::max(analytic.norm() + fd.norm(), 1e-12);
    return (analytic - fd).norm() / denom;
}

inline TrainSet random_train_set(Xorshift64Star& rng, Eigen::Index n, Eigen::Index j,
                                 Eigen::Index k) {
    TrainSet t;
    t.D.resize(n, j);
    for (Eigen::Index i = 0; i < n; ++i) {
        FeatureMatrix x(j, k);
        for (Eigen::Index r = 0; r < j; ++r)
            for (Eigen::Index c = 0; c < k; ++c)
                x(r, c) = rng.uniform(-1.0, 1.0);
        t.X.push_back(std::move(x));
        for (Eigen::Index c = 0; c < j; ++c)
            t.D(i, c) = rng.uniform(0.0, 2.0);
    }
    return t;
}

/// Check the regression subgradient at `points` random configurations.
/// When `positive_entries` is set, weights are kept away from zero so the
/// L1 term is differentiable at the sampled point and within the FD step.
inline CheckEntry check_subgradient(const CheckOptions& opt, bool with_l1) {
    CheckEntry entry;
    entry.name = with_l1 ? "regression subgradient (l1 on)" : "regression subgradient (l1 off)";
    entry.points = opt.points;
    Xorshift64Star rng(opt.seed, with_l1 ? 2 : 1);
    for (int p = 0; p < opt.points; ++p) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.uniform_int(3));
        const Eigen::Index j = 2 + static_cast<Eigen::Index>(rng.uniform_int(3));
        const Eigen::Index k = 2 + static_cast<Eigen::Index>(rng.uniform_int(3));
        const TrainSet train = random_train_set(rng, n, j, k);
        const double alpha = rng.uniform(0.0, 0.1);
        const double beta = with_l1 ? rng.uniform(1e-4, 1e-2) : 0.0;
        WeightMatrix W(k, j);
        for (Eigen::Index r = 0; r < k; ++r)
            for (Eigen::Index c = 0; c < j; ++c) {
                if (with_l1) {
                    // magnitude well above the FD step, random sign
                    const double mag = rng.uniform(0.1, 1.0);
                    W(r, c) = rng.uniform01() < 0.5 ? -mag : mag;
                } else {
                    W(r, c) = rng.uniform(-1.0, 1.0);
                }
            }
        const Matrix analytic = subgradient(W, train, alpha, beta);
        Matrix fd(k, j);
        for (Eigen::Index r = 0; r < k; ++r)
            for (Eigen::Index c = 0; c < j; ++c) {
                WeightMatrix w_hi = W, w_lo = W;
                w_hi(r, c) += opt.fd_step;
                w_lo(r, c) -= opt.fd_step;
                fd(r, c) = (objective(w_hi, train, alpha, beta) -
                            objective(w_lo, train, alpha, beta)) /
                           (2.0 * opt.fd_step);
            }
        entry.max_rel_err = std::max(entry.max_rel_err, rel_err(analytic, fd));
    }
    entry.pass = entry.max_rel_err <= opt.tol;
    return entry;
}

inline CheckEntry check_density_loss(const CheckOptions& opt) {
    CheckEntry entry;
    entry.name = "density loss gradient";
    entry.points = opt.points;
    Xorshift64Star rng(opt.seed, 3);
    for (int p = 0; p < opt.points; ++p) {
        const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.uniform_int(3));
        const Eigen::Index rows = 2 + static_cast<Eigen::Index>(rng.uniform_int(3));
        const Eigen::Index cols = 2 + static_cast<Eigen::Index>(rng.uniform_int(3));
        std::vector<Matrix> pred, gt;
        for (Eigen::Index i = 0; i < n; ++i) {
            Matrix a(rows, cols), b(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r)
                for (Eigen::Index c = 0; c < cols; ++c) {
                    a(r, c) = rng.uniform(0.0, 2.0);
                    b(r, c) = rng.uniform(0.0, 2.0);
                }
            pred.push_back(std::move(a));
            gt.push_back(std::move(b));
        }
        const DensityLoss dl = density_loss(pred, gt);
        for (Eigen::Index i = 0; i < n; ++i) {
            Matrix fd(pred[static_cast<std::size_t>(i)].rows(),
                      pred[static_cast<std::size_t>(i)].cols());
            for (Eigen::Index r = 0; r < fd.rows(); ++r)
                for (Eigen::Index c = 0; c < fd.cols(); ++c) {
                    std::vector<Matrix> hi = pred, lo = pred;
                    hi[static_cast<std::size_t>(i)](r, c) += opt.fd_step;
                    lo[static_cast<std::size_t>(i)](r, c) -= opt.fd_step;
                    fd(r, c) = (density_loss(hi, gt).loss - density_loss(lo, gt).loss) /
                               (2.0 * opt.fd_step);
                }
            entry.max_rel_err = std::max(
                entry.max_rel_err, rel_err(dl.grads[static_cast<std::size_t>(i)], fd));
        }
    }
    entry.pass = entry.max_rel_err <= opt.tol;
    return entry;
}

inline CheckEntry check_huber(const CheckOptions& opt) {
    CheckEntry entry;
    entry.name = "robust count loss derivative";
    entry.points = opt.points;
    Xorshift64Star rng(opt.seed, 4);
    for (int p = 0; p < opt.points; ++p) {
        const double delta = rng.uniform(0.5, 5.0);
        double est, tc;
        do {
            tc = rng.uniform(0.0, 20.0);
            est = tc + rng.uniform(-3.0 * delta, 3.0 * delta);
            // keep the sample away from the quadratic/linear transition so the
            // central difference never straddles the kink
        } while (std::abs(std::abs(est - tc) - delta) < 10.0 * opt.fd_step);
        double analytic = huber_count_loss(est, tc, delta).dloss_dest;
        if (opt.inject_huber_sign_flip) analytic = -analytic;
        const double fd = (huber_count_loss(est + opt.fd_step, tc, delta).loss -
                           huber_count_loss(est - opt.fd_step, tc, delta).loss) /
                          (2.0 * opt.fd_step);
        entry.max_rel_err = std::max(entry.max_rel_err, rel_err(analytic, fd));
    }
    entry.pass = entry.max_rel_err <= opt.tol;
    return entry;
}

inline CheckEntry check_total_loss(const CheckOptions& opt) {
    CheckEntry entry;
    entry.name = "combined loss partials";
    entry.points = opt.points;
    Xorshift64Star rng(opt.seed, 5);
    for (int p = 0; p < opt.points; ++p) {
        const double lambda = rng.uniform(0.0, 1.0);
        const std::size_t n = 1 + rng.uniform_int(5);
        std::vector<double> counts(n);
        for (double& c : counts) c = rng.uniform(0.0, 3.0);
        const double density_term = rng.uniform(0.0, 3.0);
        // partial wrt the density term is 1
        {
            const double fd = (total_loss(density_term + opt.fd_step, counts, lambda) -
                               total_loss(density_term - opt.fd_step, counts, lambda)) /
                              (2.0 * opt.fd_step);
            entry.max_rel_err = std::max(entry.max_rel_err, rel_err(1.0, fd));
        }
        // partial wrt each count term is lambda / n
        const double analytic = lambda / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> hi = counts, lo = counts;
            hi[i] += opt.fd_step;
            lo[i] -= opt.fd_step;
            const double fd = (total_loss(density_term, hi, lambda) -
                               total_loss(density_term, lo, lambda)) /
                              (2.0 * opt.fd_step);
            if (analytic == 0.0 && std::abs(fd) <= 1e-12) continue; // lambda == 0 edge
            entry.max_rel_err = std::max(entry.max_rel_err, rel_err(analytic, fd));
        }
    }
    entry.pass = entry.max_rel_err <= opt.tol;
    return entry;
}

} // namespace detail

/// Run every finite-difference suite and report per-suite worst errors.
inline CheckResult run_gradient_checks(const CheckOptions& opt) {
    CheckResult result;
    result.entries.push_back(detail::check_subgradient(opt, false));
    result.entries.push_back(detail::check_subgradient(opt, true));
    result.entries.push_back(detail::check_density_loss(opt));
    result.entries.push_back(detail::check_huber(opt));
    result.entries.push_back(detail::check_total_loss(opt));
    for (const CheckEntry& e : result.entries) {
        if (!e.pass) result.all_pass = false;
        if (e.max_rel_err >= result.worst_err) {
            result.worst_err = e.max_rel_err;
            result.worst_name = e.name;
        }
    }
    return result;
}

} // namespace tdens
