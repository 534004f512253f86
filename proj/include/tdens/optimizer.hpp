#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "tdens/errors.hpp"
#include "tdens/rng.hpp"
#include "tdens/types.hpp"

namespace tdens {

/// Supervised data for the block regression: per-frame feature matrices and
/// the matching block densities.
struct TrainSet {
    std::vector<FeatureMatrix> X; ///< N matrices, each J x K
    Matrix D;                     ///< N x J ground-truth block densities
};

struct FitReport {
    WeightMatrix W;                              ///< best weights, rank <= hp.rank
    std::vector<double> objective_trace;         ///< winning restart; [0] is the initial objective
    int iterations = 0;                          ///< gradient steps taken by the winner
    int restart_index = 0;                       ///< which restart won
    bool converged = false;                      ///< stopped on tolerance rather than max_iters
    std::vector<std::vector<double>> all_traces; ///< one trace per restart
};

inline void validate_train_set(const TrainSet& train) {
    const auto n = static_cast<Eigen::Index>(train.X.size());
    if (n == 0) throw std::invalid_argument("train set is empty");
    if (train.D.rows() != n)
        throw std::invalid_argument("train set: D rows do not match the number of frames");
    const Eigen::Index j = train.X[0].rows();
    const Eigen::Index k = train.X[0].cols();
    if (train.D.cols() != j)
        throw std::invalid_argument("train set: D columns do not match the block count");
    for (const FeatureMatrix& x : train.X)
        if (x.rows() != j || x.cols() != k)
            throw std::invalid_argument("train set: inconsistent feature dimensions");
}

/// Raw per-block linear predictions for one frame: out[j] = w_j . x_j.
inline Vector predict_raw(const WeightMatrix& W, const FeatureMatrix& X) {
    if (W.cols() != X.rows() || W.rows() != X.cols())
        throw std::invalid_argument("predict_raw: weight/feature shape mismatch");
    return (X.array() * W.transpose().array()).rowwise().sum();
}

/// Regularized least-squares objective over all frames and blocks:
///   (1/2N) sum_i sum_j (w_j . x_j^(i) - D_ij)^2 + alpha*||W||_F^2 + beta*|W|_1
inline double objective(const WeightMatrix& W, const TrainSet& train, double alpha, double beta) {
    validate_train_set(train);
    const auto n = static_cast<Eigen::Index>(train.X.size());
    double sse = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vector r = predict_raw(W, train.X[static_cast<std::size_t>(i)]) -
                         train.D.row(i).transpose();
        sse += r.squaredNorm();
    }
    return sse / (2.0 * static_cast<double>(n)) + alpha * W.squaredNorm() +
           beta * W.cwiseAbs().sum();
}

/// Subgradient of the objective. Column j:
///   (1/N) sum_i (w_j . x_j^(i) - D_ij) x_j^(i) + 2*alpha*w_j + beta*sgn(w_j)
/// where sgn maps entries >= 0 to +1 and negative entries to -1 (the zero
/// entries take the +1 element of the subdifferential).
inline Matrix subgradient(const WeightMatrix& W, const TrainSet& train, double alpha, double beta) {
    validate_train_set(train);
    const auto n = static_cast<Eigen::Index>(train.X.size());
    Matrix g = Matrix::Zero(W.rows(), W.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const FeatureMatrix& x = train.X[static_cast<std::size_t>(i)];
        const Vector r = predict_raw(W, x) - train.D.row(i).transpose();
        g.noalias() += x.transpose() * r.asDiagonal();
    }
    g /= static_cast<double>(n);
    g += 2.0 * alpha * W;
    if (beta != 0.0) {
        for (Eigen::Index c = 0; c < W.cols(); ++c)
            for (Eigen::Index r = 0; r < W.rows(); ++r)
                g(r, c) += W(r, c) >= 0.0 ? beta : -beta;
    }
    return g;
}

/// Frobenius-nearest matrix of rank <= r: keep the top r singular triplets
/// and zero the rest (Eckart–Young).
inline Matrix rank_project(const Matrix& A, int r) {
    if (r < 1 || r > std::min(A.rows(), A.cols()))
        throw std::invalid_argument("rank_project: rank r must satisfy 1 <= r <= min(rows, cols)");
    Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success)
        throw std::runtime_error("rank_project: SVD did not converge");
    const Vector& s = svd.singularValues();
    return svd.matrixU().leftCols(r) * s.head(r).asDiagonal() *
           svd.matrixV().leftCols(r).transpose();
}

/// Momentum scalar recurrence t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2.
inline double momentum_next(double t) {
    return 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
}

namespace detail {

/// Consecutive iterations with relative objective change below tol required
/// before a run is declared converged.
inline constexpr int kConvergenceWindow = 5;

struct SingleRun {
    WeightMatrix W;
    std::vector<double> trace;
    int iterations = 0;
    bool converged = false;
};

inline SingleRun apsd_single_run(const TrainSet& train, const Hyperparams& hp,
                                 std::uint64_t restart) {
    const Eigen::Index k_dim = train.X[0].cols();
    const Eigen::Index j_dim = train.X[0].rows();

    Xorshift64Star rng(hp.seed, restart);
    WeightMatrix w0(k_dim, j_dim);
    for (Eigen::Index r = 0; r < k_dim; ++r)
        for (Eigen::Index c = 0; c < j_dim; ++c)
            w0(r, c) = rng.uniform(-0.01, 0.01);

    SingleRun run;
    run.W = rank_project(w0, hp.rank);
    Matrix a = run.W; // extrapolated point the gradient is taken at
    double t = 1.0;
    run.trace.push_back(objective(run.W, train, hp.alpha, hp.beta));

    int small_changes = 0;
    for (int k = 1; k <= hp.max_iters; ++k) {
        const double step = hp.step_decay ? hp.eta / std::sqrt(static_cast<double>(k)) : hp.eta;
        const Matrix g = subgradient(a, train, hp.alpha, hp.beta);
        const WeightMatrix w_next = rank_project(a - step * g, hp.rank);
        const double t_next = momentum_next(t);
        if (hp.accelerated)
            a = w_next + ((t - 1.0) / t_next) * (w_next - run.W);
        else
            a = w_next;
        t = t_next;

        const double obj = objective(w_next, train, hp.alpha, hp.beta);
        if (!std::isfinite(obj))
            throw DivergenceError("apsd_fit: non-finite objective at iteration " +
                                  std::to_string(k) + " (step size too large?)");
        const double prev = run.trace.back();
        run.trace.push_back(obj);
        run.W = w_next;
        run.iterations = k;

        const double rel = std::abs(obj - prev) / std::max(std::abs(prev), 1e-12);
        small_changes = rel < hp.tol ? small_changes + 1 : 0;
        if (small_changes >= kConvergenceWindow) {
            run.converged = true;
            break;
        }
    }
    return run;
}

} // namespace detail

inline void validate_hyperparams(const Hyperparams& hp, Eigen::Index k_dim, Eigen::Index j_dim) {
    if (hp.alpha < 0.0 || hp.beta < 0.0)
        throw std::invalid_argument("hyperparams: alpha and beta must be non-negative");
    if (hp.rank < 1 || hp.rank > std::min(k_dim, j_dim))
        throw std::invalid_argument("hyperparams: rank r must satisfy 1 <= r <= min(K, J)");
    if (!(hp.eta > 0.0)) throw std::invalid_argument("hyperparams: eta must be positive");
    if (hp.max_iters < 1) throw std::invalid_argument("hyperparams: max_iters must be at least 1");
    if (hp.restarts < 1) throw std::invalid_argument("hyperparams: restarts must be at least 1");
    if (!(hp.tol > 0.0)) throw std::invalid_argument("hyperparams: tol must be positive");
}

/// Accelerated projected subgradient descent with random restarts.
///
/// Each restart starts from i.i.d. uniform [-0.01, 0.01] entries projected to
/// rank <= r, then iterates: subgradient step at the extrapolated point,
/// rank projection, momentum update, Nesterov-style extrapolation
///   a_{k+1} = w_{k+1} + ((t_k - 1) / t_{k+1}) (w_{k+1} - w_k).
/// Restart streams are derived from (hp.seed, restart index), so increasing
/// hp.restarts only appends candidate runs; the winner is the restart with
/// the lowest final objective.
inline FitReport apsd_fit(const TrainSet& train, const Hyperparams& hp) {
    validate_train_set(train);
    validate_hyperparams(hp, train.X[0].cols(), train.X[0].rows());

    FitReport report;
    double best = std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < hp.restarts; ++restart) {
        detail::SingleRun run =
            detail::apsd_single_run(train, hp, static_cast<std::uint64_t>(restart));
        report.all_traces.push_back(run.trace);
        if (run.trace.back() < best) {
            best = run.trace.back();
            report.W = std::move(run.W);
            report.objective_trace = std::move(run.trace);
            report.iterations = run.iterations;
            report.restart_index = restart;
            report.converged = run.converged;
        }
    }
    return report;
}

// -------------------------------------------------------------------------
// Hyperparameter selection by k-fold cross-validation
// -------------------------------------------------------------------------

struct CvGrid {
    std::vector<double> alphas{1e-4, 1e-3, 1e-2};
    std::vector<double> betas{0.0, 1e-4, 1e-3};
    std::vector<int> ranks{1, 2, 4};
    int folds = 5;
};

struct CvEntry {
    double alpha = 0.0;
    double beta = 0.0;
    int rank = 0;
    double score = 0.0; ///< mean validation MSE over folds (block densities)
};

struct CvResult {
    Hyperparams best;            ///< base hyperparams with the winning combo filled in
    std::vector<CvEntry> table;  ///< every combo, grid order
};

/// Grid search over (alpha, beta, rank). Frame i goes to fold i mod folds;
/// the score is the validation mean squared error of raw block predictions,
/// averaged over folds. Ties keep the earliest grid entry, so the outcome is
/// deterministic.
inline CvResult cross_validate(const TrainSet& train, const Hyperparams& base, const CvGrid& grid) {
    validate_train_set(train);
    const int n = static_cast<int>(train.X.size());
    if (grid.folds < 2) throw std::invalid_argument("cross_validate: need at least 2 folds");
    if (n < grid.folds) throw std::invalid_argument("cross_validate: fewer frames than folds");
    if (grid.alphas.empty() || grid.betas.empty() || grid.ranks.empty())
        throw std::invalid_argument("cross_validate: empty grid");

    CvResult result;
    double best_score = std::numeric_limits<double>::infinity();
    for (double alpha : grid.alphas) {
        for (double beta : grid.betas) {
            for (int rank : grid.ranks) {
                Hyperparams hp = base;
                hp.alpha = alpha;
                hp.beta = beta;
                hp.rank = rank;
                double score_sum = 0.0;
                for (int fold = 0; fold < grid.folds; ++fold) {
                    TrainSet fit_set, val_set;
                    std::vector<Eigen::Index> val_rows;
                    for (int i = 0; i < n; ++i) {
                        if (i % grid.folds == fold) {
                            val_set.X.push_back(train.X[static_cast<std::size_t>(i)]);
                            val_rows.push_back(i);
                        } else {
                            fit_set.X.push_back(train.X[static_cast<std::size_t>(i)]);
                        }
                    }
                    fit_set.D.resize(static_cast<Eigen::Index>(fit_set.X.size()), train.D.cols());
                    val_set.D.resize(static_cast<Eigen::Index>(val_set.X.size()), train.D.cols());
                    Eigen::Index fi = 0, vi = 0;
                    for (int i = 0; i < n; ++i) {
                        if (i % grid.folds == fold)
                            val_set.D.row(vi++) = train.D.row(i);
                        else
                            fit_set.D.row(fi++) = train.D.row(i);
                    }
                    const FitReport fit = apsd_fit(fit_set, hp);
                    double sse = 0.0;
                    for (std::size_t v = 0; v < val_set.X.size(); ++v) {
                        const Vector r = predict_raw(fit.W, val_set.X[v]) -
                                         val_set.D.row(static_cast<Eigen::Index>(v)).transpose();
                        sse += r.squaredNorm();
                    }
                    score_sum += sse / (static_cast<double>(val_set.X.size()) *
                                        static_cast<double>(train.D.cols()));
                }
                const double score = score_sum / grid.folds;
                result.table.push_back(CvEntry{alpha, beta, rank, score});
                if (score < best_score) {
                    best_score = score;
                    result.best = hp;
                }
            }
        }
    }
    return result;
}

} // namespace tdens
