#pragma once

// Accuracy metrics for emulated time series and Monte Carlo cross-validation
// splits for file-backed datasets.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dynemu/errors.hpp"
#include "dynemu/rng.hpp"

namespace dynemu {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Sum of squared errors normalized by the series' variation around its
// temporal mean. Constant truth series have no scale to normalize by.
inline double nmspe(const Vector& y, const Vector& yhat) {
    if (y.size() != yhat.size() || y.size() == 0)
        throw argument_error("nmspe: length mismatch");
    const double ybar = y.mean();
    const double den = (y.array() - ybar).square().sum();
    if (!(den > 0.0))
        throw degenerate_denominator_error("nmspe: truth series is constant");
    return (y - yhat).squaredNorm() / den;
}

// Gaussian predictive score (higher is better):
//   -(1/L) sum (y-yhat)^2/var - (1/L) sum log var.
inline double proper_score(const Vector& y, const Vector& yhat, const Vector& var) {
    if (y.size() != yhat.size() || y.size() != var.size() || y.size() == 0)
        throw argument_error("proper_score: length mismatch");
    if (!(var.array() > 0.0).all())
        throw argument_error("proper_score: variances must be positive");
    const double L = static_cast<double>(y.size());
    return -((y - yhat).array().square() / var.array()).sum() / L -
           var.array().log().sum() / L;
}

struct ScoreReport {
    Vector per_point_nmspe;  // NaN for excluded (constant-truth) points
    Vector per_point_score;  // NaN when no variances were supplied
    double mean_nmspe = std::numeric_limits<double>::quiet_NaN();
    double log_mean_nmspe = std::numeric_limits<double>::quiet_NaN();  // natural log
    double mean_score = std::numeric_limits<double>::quiet_NaN();
    Eigen::Index scored = 0;
    Eigen::Index excluded = 0;  // constant-truth points left out of mean_nmspe
};

// Column-wise scores of predictions against truth; pass an empty var matrix
// to skip the proper score.
inline ScoreReport score_report(const Matrix& truth, const Matrix& pred,
                                const Matrix& var = Matrix()) {
    if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
        throw argument_error("score_report: prediction/truth shape mismatch");
    const bool with_var = var.size() > 0;
    if (with_var && (var.rows() != truth.rows() || var.cols() != truth.cols()))
        throw argument_error("score_report: variance shape mismatch");
    const Eigen::Index M = truth.cols();
    ScoreReport r;
    r.per_point_nmspe = Vector::Constant(M, std::numeric_limits<double>::quiet_NaN());
    r.per_point_score = Vector::Constant(M, std::numeric_limits<double>::quiet_NaN());
    double nm_sum = 0.0, sc_sum = 0.0;
    Eigen::Index nm_count = 0, sc_count = 0;
    for (Eigen::Index c = 0; c < M; ++c) {
        try {
            r.per_point_nmspe(c) = nmspe(truth.col(c), pred.col(c));
            nm_sum += r.per_point_nmspe(c);
            ++nm_count;
        } catch (const degenerate_denominator_error&) {
            ++r.excluded;
        }
        if (with_var) {
            r.per_point_score(c) = proper_score(truth.col(c), pred.col(c), var.col(c));
            sc_sum += r.per_point_score(c);
            ++sc_count;
        }
    }
    r.scored = nm_count;
    if (nm_count > 0) {
        r.mean_nmspe = nm_sum / static_cast<double>(nm_count);
        r.log_mean_nmspe = std::log(r.mean_nmspe);
    }
    if (sc_count > 0) r.mean_score = sc_sum / static_cast<double>(sc_count);
    return r;
}

struct CvSplit {
    std::vector<int> train;
    std::vector<int> test;
};

// R random train/test partitions of 0..N-1 at the given ratio (default 4:1).
// The same seed yields the same splits.
inline std::vector<CvSplit> mc_cv_splits(Eigen::Index N, int ratio_train, int ratio_test,
                                         Eigen::Index R, std::uint64_t seed) {
    if (N < 2) throw argument_error("mc_cv_splits: need at least two points");
    if (ratio_train < 1 || ratio_test < 1)
        throw argument_error("mc_cv_splits: ratio parts must be positive");
    if (R < 1) throw argument_error("mc_cv_splits: need at least one split");
    rng_engine eng(seed);
    std::vector<int> perm(static_cast<std::size_t>(N));
    std::vector<CvSplit> out;
    out.reserve(static_cast<std::size_t>(R));
    const double frac = static_cast<double>(ratio_train) /
                        static_cast<double>(ratio_train + ratio_test);
    Eigen::Index n_train = static_cast<Eigen::Index>(
        std::llround(static_cast<double>(N) * frac));
    n_train = std::max<Eigen::Index>(1, std::min(N - 1, n_train));
    for (Eigen::Index r = 0; r < R; ++r) {
        for (Eigen::Index i = 0; i < N; ++i) perm[static_cast<std::size_t>(i)] = static_cast<int>(i);
        shuffle(perm, eng);
        CvSplit s;
        s.train.assign(perm.begin(), perm.begin() + n_train);
        s.test.assign(perm.begin() + n_train, perm.end());
        std::sort(s.train.begin(), s.train.end());
        std::sort(s.test.begin(), s.test.end());
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace dynemu
