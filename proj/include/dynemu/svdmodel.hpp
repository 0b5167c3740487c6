#pragma once

// SVD-based emulator for time-series simulator output: centers the response
// matrix per time point, truncates its SVD by cumulative singular-value mass,
// fits one scalar GP per retained coefficient series, and combines the
// coefficient predictives into a per-time-point mean and variance.

#include <Eigen/Dense>
#include <chrono>
#include <string>
#include <vector>

#include "dynemu/coefgp.hpp"
#include "dynemu/errors.hpp"
#include "dynemu/linalg.hpp"

namespace dynemu {

struct SvdBasis {
    Matrix U_star;  // L x p
    Vector d;       // p retained singular values
    Matrix V_star;  // N x p, columns are the coefficient series
    Matrix B;       // L x p, U_star * diag(d)
    Eigen::Index p = 0;
    Eigen::Index k = 0;  // min(N, L)
    double gamma = 0;
};

// Truncate the SVD of a (centered) response matrix at the smallest p whose
// cumulative singular-value fraction exceeds gamma.
inline SvdBasis build_basis(const Matrix& Yc, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw argument_error("build_basis: gamma must lie in (0, 1)");
    SvdResult s = svd(Yc);
    const double total = s.d.sum();
    if (!(total > 0.0))
        throw degenerate_response_error("build_basis: response is zero after centering");
    Eigen::Index p = s.d.size();
    double cum = 0.0;
    for (Eigen::Index m = 0; m < s.d.size(); ++m) {
        cum += s.d(m);
        if (cum / total > gamma) {
            p = m + 1;
            break;
        }
    }
    SvdBasis b;
    b.U_star = s.U.leftCols(p);
    b.d = s.d.head(p);
    b.V_star = s.V.leftCols(p);
    b.B = b.U_star * b.d.asDiagonal();
    b.p = p;
    b.k = s.d.size();
    b.gamma = gamma;
    return b;
}

struct SvdGpModel {
    SvdBasis basis;
    std::vector<CoefGpFit> coef_fits;  // one per retained coefficient
    double sigma2_hat = 0;
    Matrix design;         // N x q training inputs
    Vector response_mean;  // length L, added back at prediction
    double eta = 0;
    PriorSpec prior;
};

struct FitOptions {
    // Start list overrides per coefficient index; bases beyond the list get
    // the default multistart set.
    std::vector<CorrParams> warm_starts;
};

struct FitTimings {
    double svd_s = 0;
    double theta_s = 0;
};

inline SvdGpModel fit_svdgp(const Matrix& X, const Matrix& Y, double gamma,
                            const PriorSpec& prior, double eta,
                            const FitOptions& opts = {},
                            FitTimings* timings = nullptr) {
    const Eigen::Index N = X.rows();
    const Eigen::Index L = Y.rows();
    if (Y.cols() != N)
        throw argument_error("fit_svdgp: response columns (" + std::to_string(Y.cols()) +
                             ") must match design rows (" + std::to_string(N) + ")");
    if (N < 2) throw argument_error("fit_svdgp: needs at least two training runs");
    if (!X.allFinite() || !Y.allFinite())
        throw argument_error("fit_svdgp: non-finite training data");

    auto t0 = std::chrono::steady_clock::now();
    SvdGpModel m;
    m.response_mean = Y.rowwise().mean();
    Matrix Yc = Y.colwise() - m.response_mean;
    m.basis = build_basis(Yc, gamma);
    auto t1 = std::chrono::steady_clock::now();

    m.coef_fits.reserve(m.basis.p);
    for (Eigen::Index i = 0; i < m.basis.p; ++i) {
        std::vector<CorrParams> starts;
        if (static_cast<std::size_t>(i) < opts.warm_starts.size())
            starts = {opts.warm_starts[static_cast<std::size_t>(i)]};
        try {
            m.coef_fits.push_back(map_theta(m.basis.V_star.col(i), X, prior, eta, starts));
        } catch (const error& e) {
            throw error("fit_svdgp: coefficient " + std::to_string(i) + ": " + e.what());
        }
    }
    auto t2 = std::chrono::steady_clock::now();

    double rss = (Yc - m.basis.B * m.basis.V_star.transpose()).squaredNorm();
    m.sigma2_hat = (rss + prior.beta) /
                   (static_cast<double>(N) * static_cast<double>(L) + prior.alpha + 2.0);
    m.design = X;
    m.eta = eta;
    m.prior = prior;
    if (timings) {
        timings->svd_s += std::chrono::duration<double>(t1 - t0).count();
        timings->theta_s += std::chrono::duration<double>(t2 - t1).count();
    }
    return m;
}

struct PredictiveSummary {
    Vector mean;  // length L
    Vector var;   // length L, componentwise >= sigma2_hat
};

inline PredictiveSummary predict(const SvdGpModel& m, const Vector& x0) {
    if (x0.size() != m.design.cols())
        throw argument_error("predict: input dimension mismatch");
    if (!x0.allFinite()) throw argument_error("predict: non-finite input");
    const Eigen::Index p = m.basis.p;
    Vector chat(p), s2(p);
    for (Eigen::Index i = 0; i < p; ++i) {
        CoefPrediction c = predict_coef(x0, m.coef_fits[static_cast<std::size_t>(i)],
                                        m.design);
        chat(i) = c.mean;
        s2(i) = c.scale2;
    }
    PredictiveSummary out;
    out.mean = m.basis.B * chat + m.response_mean;
    out.var = (m.basis.B.array().square().matrix() * s2).array() + m.sigma2_hat;
    return out;
}

}  // namespace dynemu
