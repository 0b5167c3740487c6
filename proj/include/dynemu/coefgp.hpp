#pragma once

// Scalar Gaussian-process machinery for one SVD coefficient series: the
// anisotropic Gaussian correlation, the marginal log posterior of the
// correlation ranges under an inverse-Gamma variance and a Gamma prior on the
// inverse ranges, MAP estimation of the ranges, and the Student-t predictive
// of the coefficient at a new input.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "dynemu/errors.hpp"
#include "dynemu/linalg.hpp"
#include "dynemu/optimize.hpp"

namespace dynemu {

struct CorrParams {
    Vector theta;  // one positive range per input dimension
};

struct PriorSpec {
    double alpha_i = 0.0;  // coefficient-variance inverse-Gamma shape
    double beta_i = 0.0;   // coefficient-variance inverse-Gamma scale
    double alpha = 0.0;    // residual-variance inverse-Gamma shape
    double beta = 0.0;     // residual-variance inverse-Gamma scale
    double theta_shape = 1.5;  // Gamma shape on 1/theta_j
    double theta_scale = 0.0;  // Gamma scale on 1/theta_j; 0 = derive per fit
};

// 0.95 quantile of Gamma(3/2, scale 1) (= half the chi-square_3 quantile).
inline constexpr double kGammaShape32Q95 = 3.9073639516255895;

inline double gauss_corr(const Vector& x1, const Vector& x2, const Vector& theta) {
    if (x1.size() != x2.size() || x1.size() != theta.size())
        throw argument_error("gauss_corr: dimension mismatch");
    double s = 0.0;
    for (Eigen::Index d = 0; d < theta.size(); ++d) {
        double diff = x1(d) - x2(d);
        s += theta(d) * diff * diff;
    }
    return std::exp(-s);
}

// Unit-diagonal correlation matrix of the design rows.
inline Matrix corr_matrix(const Matrix& X, const Vector& theta) {
    const Eigen::Index n = X.rows();
    Matrix K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        K(i, i) = 1.0;
        for (Eigen::Index j = 0; j < i; ++j) {
            double s = 0.0;
            for (Eigen::Index d = 0; d < X.cols(); ++d) {
                double diff = X(i, d) - X(j, d);
                s += theta(d) * diff * diff;
            }
            K(i, j) = K(j, i) = std::exp(-s);
        }
    }
    return K;
}

// Correlations of one point against the design rows.
inline Vector corr_cross(const Matrix& X, const Vector& x0, const Vector& theta) {
    if (x0.size() != X.cols() || theta.size() != X.cols())
        throw argument_error("corr_cross: dimension mismatch");
    const Eigen::Index n = X.rows();
    Vector k0(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = 0.0;
        for (Eigen::Index d = 0; d < X.cols(); ++d) {
            double diff = X(i, d) - x0(d);
            s += theta(d) * diff * diff;
        }
        k0(i) = std::exp(-s);
    }
    return k0;
}

inline double max_sq_dist(const Matrix& X) {
    double m = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < i; ++j)
            m = std::max(m, (X.row(i) - X.row(j)).squaredNorm());
    return m;
}

// Gamma scale on 1/theta placing the design's largest squared pairwise
// distance at the prior's 95th percentile.
inline double theta_prior_scale(const Matrix& X, const PriorSpec& prior) {
    if (prior.theta_scale > 0.0) return prior.theta_scale;
    double dmax2 = max_sq_dist(X);
    if (!(dmax2 > 0.0)) return 1.0;
    return dmax2 / kGammaShape32Q95;
}

// log density of theta when 1/theta_j ~ Gamma(shape, scale), iid over j.
inline double log_theta_prior(const Vector& theta, double shape, double scale) {
    double lp = 0.0;
    const double norm = -std::lgamma(shape) - shape * std::log(scale);
    for (Eigen::Index d = 0; d < theta.size(); ++d) {
        if (!(theta(d) > 0.0)) return -std::numeric_limits<double>::infinity();
        lp += norm - (shape + 1.0) * std::log(theta(d)) - 1.0 / (scale * theta(d));
    }
    return lp;
}

namespace detail {

// Per-fit cache of squared coordinate differences; keeps repeated posterior
// evaluations vectorized. Falls back to on-the-fly loops for large n.
struct CorrWorkspace {
    const Matrix& X;
    std::vector<Matrix> dsq;

    explicit CorrWorkspace(const Matrix& X_) : X(X_) {
        const Eigen::Index n = X.rows(), q = X.cols();
        if (n * n * q <= (1 << 23)) {
            dsq.reserve(q);
            for (Eigen::Index d = 0; d < q; ++d) {
                Matrix D(n, n);
                for (Eigen::Index i = 0; i < n; ++i) {
                    D(i, i) = 0.0;
                    for (Eigen::Index j = 0; j < i; ++j) {
                        double diff = X(i, d) - X(j, d);
                        D(i, j) = D(j, i) = diff * diff;
                    }
                }
                dsq.push_back(std::move(D));
            }
        }
    }

    Matrix corr(const Vector& theta) const {
        if (dsq.empty()) return corr_matrix(X, theta);
        const Eigen::Index n = X.rows();
        Matrix S = Matrix::Zero(n, n);
        for (Eigen::Index d = 0; d < theta.size(); ++d) S += theta(d) * dsq[d];
        return (-S.array()).exp();
    }
};

struct PosteriorEval {
    double lp;
    double psi;
};

// Marginal log posterior of theta and, when grad is non-null, its gradient in
// theta. The determinant term needs the explicit inverse; the psi term only
// needs K^-1 v.
inline PosteriorEval posterior_eval(const Vector& theta, const Vector& v,
                                    const CorrWorkspace& ws, const PriorSpec& prior,
                                    double eta, double scale, Vector* grad) {
    const Eigen::Index n = v.size();
    const Eigen::Index q = theta.size();
    Matrix K = ws.corr(theta);
    SpdFactor F = spd_factorize(K, eta);
    Vector w = F.solve(v);
    double psi = std::max(v.dot(w), 1e-300);
    double lp = -0.5 * F.log_det -
                0.5 * (prior.alpha_i + static_cast<double>(n)) *
                    std::log(0.5 * (prior.beta_i + psi)) +
                log_theta_prior(theta, prior.theta_shape, scale);
    if (grad) {
        Matrix Kinv = F.inverse();
        Matrix M1 = Kinv.cwiseProduct(K);
        Matrix M2 = (w * w.transpose()).cwiseProduct(K);
        const double c2 =
            0.5 * (prior.alpha_i + static_cast<double>(n)) / (prior.beta_i + psi);
        for (Eigen::Index d = 0; d < q; ++d) {
            double s1, s2;
            if (!ws.dsq.empty()) {
                s1 = M1.cwiseProduct(ws.dsq[d]).sum();
                s2 = M2.cwiseProduct(ws.dsq[d]).sum();
            } else {
                s1 = s2 = 0.0;
                for (Eigen::Index i = 0; i < n; ++i)
                    for (Eigen::Index j = 0; j < i; ++j) {
                        double diff = ws.X(i, d) - ws.X(j, d);
                        double dd = diff * diff;
                        s1 += 2.0 * dd * M1(i, j);
                        s2 += 2.0 * dd * M2(i, j);
                    }
            }
            (*grad)(d) = 0.5 * s1 - c2 * s2 - (prior.theta_shape + 1.0) / theta(d) +
                         1.0 / (scale * theta(d) * theta(d));
        }
    }
    return {lp, psi};
}

}  // namespace detail

inline double log_posterior_theta(const Vector& theta, const Vector& v,
                                  const Matrix& X, const PriorSpec& prior,
                                  double eta) {
    if (X.rows() != v.size())
        throw argument_error("log_posterior_theta: design/series length mismatch");
    if (theta.size() != X.cols())
        throw argument_error("log_posterior_theta: theta dimension mismatch");
    detail::CorrWorkspace ws(X);
    return detail::posterior_eval(theta, v, ws, prior, eta,
                                  theta_prior_scale(X, prior), nullptr)
        .lp;
}

struct CoefGpFit {
    CorrParams theta_hat;
    SpdFactor factor;   // Cholesky of K(theta_hat) + eta*I
    double psi = 0;     // v^T K^-1 v
    Vector kinv_v;      // K^-1 v
    Vector v;           // coefficient series the fit conditions on
    PriorSpec prior;
    Eigen::Index n_points = 0;
    double eta = 0;
    double prior_scale = 0;  // resolved Gamma scale on 1/theta
    double log_post = 0;     // attained log posterior
};

// Default multistart set: the prior mode of theta and one decade either side.
inline std::vector<CorrParams> default_starts(const Matrix& X, const PriorSpec& prior) {
    const double scale = theta_prior_scale(X, prior);
    const double mode = 1.0 / ((prior.theta_shape + 1.0) * scale);
    const Eigen::Index q = X.cols();
    std::vector<CorrParams> s;
    s.push_back({Vector::Constant(q, mode)});
    s.push_back({Vector::Constant(q, 10.0 * mode)});
    s.push_back({Vector::Constant(q, 0.1 * mode)});
    return s;
}

// MAP estimate of the correlation ranges. The search runs on log(theta) with
// analytic gradients; the attained posterior never falls below any start's.
inline CoefGpFit map_theta(const Vector& v, const Matrix& X, const PriorSpec& prior,
                           double eta, std::vector<CorrParams> starts = {}) {
    const Eigen::Index n = X.rows();
    const Eigen::Index q = X.cols();
    if (n < 2) throw argument_error("map_theta: needs at least two design points");
    if (v.size() != n) throw argument_error("map_theta: design/series length mismatch");
    if (eta < 0.0) throw argument_error("map_theta: eta must be non-negative");
    if (starts.empty()) starts = default_starts(X, prior);
    for (const auto& s : starts)
        if (s.theta.size() != q || !(s.theta.array() > 0.0).all())
            throw argument_error("map_theta: start must be positive with q entries");

    const double scale = theta_prior_scale(X, prior);
    const double mode = 1.0 / ((prior.theta_shape + 1.0) * scale);
    detail::CorrWorkspace ws(X);

    auto objective = [&](const Vector& z, Vector* grad) -> double {
        Vector theta = z.array().exp();
        try {
            auto ev = detail::posterior_eval(theta, v, ws, prior, eta, scale, grad);
            if (grad) *grad = -grad->cwiseProduct(theta);
            return -ev.lp;
        } catch (const singular_error&) {
            if (grad) grad->setZero();
            return std::numeric_limits<double>::infinity();
        }
    };

    const Vector lo = Vector::Constant(q, std::log(mode) - 6.0 * std::log(10.0));
    const Vector hi = Vector::Constant(q, std::log(mode) + 6.0 * std::log(10.0));
    BoxMinResult best;
    for (const auto& s : starts) {
        BoxMinResult r =
            minimize_box(objective, Vector(s.theta.array().log()), lo, hi);
        if (r.f < best.f) best = r;
    }
    if (!std::isfinite(best.f))
        throw error("map_theta: posterior not finite at any start");

    CoefGpFit fit;
    fit.theta_hat.theta = best.x.array().exp();
    Matrix K = ws.corr(fit.theta_hat.theta);
    fit.factor = spd_factorize(K, eta);
    fit.kinv_v = fit.factor.solve(v);
    fit.v = v;
    fit.psi = std::max(v.dot(fit.kinv_v), 1e-300);
    fit.prior = prior;
    fit.n_points = n;
    fit.eta = eta;
    fit.prior_scale = scale;
    fit.log_post = -best.f;
    return fit;
}

struct CoefPrediction {
    double mean = 0;
    double scale2 = 0;  // squared scale of the t predictive, never negative
    double dof = 0;
};

inline CoefPrediction predict_coef(const Vector& x0, const CoefGpFit& fit,
                                   const Matrix& X) {
    if (X.rows() != fit.n_points)
        throw argument_error("predict_coef: design does not match fit");
    Vector k0 = corr_cross(X, x0, fit.theta_hat.theta);
    Vector u = fit.factor.solve(k0);
    double rho = (1.0 + fit.eta) - k0.dot(u);
    if (rho < 0.0) rho = 0.0;
    CoefPrediction p;
    p.mean = k0.dot(fit.kinv_v);
    p.scale2 = (fit.prior.beta_i + fit.psi) * rho /
               (fit.prior.alpha_i + static_cast<double>(fit.n_points));
    p.dof = static_cast<double>(fit.n_points) + fit.prior.alpha_i;
    return p;
}

}  // namespace dynemu
