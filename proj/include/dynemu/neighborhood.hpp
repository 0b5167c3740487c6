#pragma once

// Greedy per-prediction-point neighborhood construction. Starting from the
// nearest neighbors of the prediction input, each iteration refits the local
// SVD-GP and appends the candidate that minimizes the closed-form expected
// squared prediction error J; the expectation over the candidate's unseen
// coefficient values is already integrated out, so scoring one candidate
// costs O(k^2) given the cached per-coefficient factors.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <limits>
#include <numeric>
#include <vector>

#include "dynemu/errors.hpp"
#include "dynemu/rng.hpp"
#include "dynemu/svdmodel.hpp"

namespace dynemu {

// Indices of the m nearest design rows to x0, ordered by distance, ties by
// lower row index.
inline std::vector<int> knn(const Matrix& X, const Vector& x0, Eigen::Index m) {
    const Eigen::Index N = X.rows();
    if (m < 1 || m > N) throw argument_error("knn: m must lie in [1, N]");
    if (x0.size() != X.cols()) throw argument_error("knn: dimension mismatch");
    if (!x0.allFinite()) throw argument_error("knn: non-finite query point");
    std::vector<std::pair<double, int>> order(static_cast<std::size_t>(N));
    for (Eigen::Index i = 0; i < N; ++i)
        order[static_cast<std::size_t>(i)] = {(X.row(i).transpose() - x0).squaredNorm(),
                                              static_cast<int>(i)};
    std::sort(order.begin(), order.end());
    std::vector<int> idx(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) idx[static_cast<std::size_t>(i)] = order[static_cast<std::size_t>(i)].second;
    return idx;
}

struct SearchScheme {
    enum class Kind { exhaustive, limit };
    Kind kind = Kind::limit;
    // 0 = derive per iteration: m_lim = min(N - k, 10 n), r_lim = min(N - k - m_lim, n).
    Eigen::Index m_lim = 0;
    Eigen::Index r_lim = 0;
};

struct LocalState {
    Vector x0;
    std::vector<int> selected;  // global row indices, insertion order
    Matrix local_X;             // k x q, rows follow `selected`
    Matrix local_Y;             // L x k
    SvdGpModel model;           // fit on the local data
    Eigen::Index n_target = 0;
    std::vector<int> p_history;  // retained p after each refit
    const Matrix* global_X = nullptr;
    const Matrix* global_Y = nullptr;
};

struct JEvaluation {
    int candidate_index = -1;
    double j_value = std::numeric_limits<double>::infinity();
    Vector per_basis_terms;  // d_i^2 * integrated coefficient variance
};

namespace detail {

// (beta_i + (a+k)/(a+k-1) psi) / (a+k): the x0- and candidate-independent
// part of the integrated coefficient variance at stage k.
inline double j_variance_coef(const CoefGpFit& fit) {
    const double ak = fit.prior.alpha_i + static_cast<double>(fit.n_points);
    if (!(ak > 1.0))
        throw argument_error("j_criterion: needs alpha_i + k > 1 (k >= 2)");
    return (fit.prior.beta_i + ak / (ak - 1.0) * fit.psi) / ak;
}

}  // namespace detail

// Closed-form expected squared prediction error at x0 after hypothetically
// adding design row `candidate`. A non-positive Schur complement marks the
// candidate as degenerate (infinite J) rather than failing.
inline JEvaluation j_criterion(const Vector& x0, int candidate, const LocalState& st) {
    const SvdGpModel& m = st.model;
    const Matrix& LX = m.design;  // rows the current fit conditions on
    const Eigen::Index L = st.local_Y.rows();
    if (!st.global_X) throw state_error("j_criterion: state has no global design");
    if (candidate < 0 || candidate >= st.global_X->rows())
        throw argument_error("j_criterion: candidate index out of range");
    Vector xc = st.global_X->row(candidate);
    JEvaluation ev;
    ev.candidate_index = candidate;
    ev.per_basis_terms = Vector::Zero(m.basis.p);
    double j = m.sigma2_hat * static_cast<double>(L);
    for (Eigen::Index i = 0; i < m.basis.p; ++i) {
        const CoefGpFit& fit = m.coef_fits[static_cast<std::size_t>(i)];
        const Vector& theta = fit.theta_hat.theta;
        Vector a = corr_cross(LX, x0, theta);
        Vector w0 = fit.factor.solve(a);
        double rho0 = (1.0 + m.eta) - a.dot(w0);
        Vector kc = corr_cross(LX, xc, theta);
        PartitionedInverse pi;
        try {
            pi = partitioned_inverse_update(fit.factor, kc, 1.0 + m.eta);
        } catch (const degeneracy_error&) {
            ev.j_value = std::numeric_limits<double>::infinity();
            return ev;
        }
        double b = gauss_corr(x0, xc, theta);
        double t = b - kc.dot(w0);
        double rho = rho0 - t * t / pi.phi;
        if (rho < 0.0) rho = 0.0;
        double term = m.basis.d(i) * m.basis.d(i) * rho * detail::j_variance_coef(fit);
        ev.per_basis_terms(i) = term;
        j += term;
    }
    ev.j_value = j;
    return ev;
}

namespace detail {

// Batched J values for a candidate list; same math as j_criterion with the
// per-basis solves hoisted out of the candidate loop.
inline std::vector<double> j_values_batch(const LocalState& st,
                                          const std::vector<int>& cands) {
    const SvdGpModel& m = st.model;
    const Matrix& GX = *st.global_X;
    const Matrix& LX = m.design;
    const Eigen::Index k = LX.rows();
    const Eigen::Index q = LX.cols();
    const Eigen::Index C = static_cast<Eigen::Index>(cands.size());
    const Eigen::Index L = st.local_Y.rows();

    // Squared coordinate differences, local rows x candidates, per dimension,
    // shared across bases; likewise x0 against candidates.
    std::vector<Matrix> dsq(static_cast<std::size_t>(q));
    Matrix x0sq(q, C);
    for (Eigen::Index d = 0; d < q; ++d) {
        Matrix& D = dsq[static_cast<std::size_t>(d)];
        D.resize(k, C);
        for (Eigen::Index c = 0; c < C; ++c) {
            double xc = GX(cands[static_cast<std::size_t>(c)], d);
            for (Eigen::Index r = 0; r < k; ++r) {
                double diff = LX(r, d) - xc;
                D(r, c) = diff * diff;
            }
            double d0 = st.x0(d) - xc;
            x0sq(d, c) = d0 * d0;
        }
    }

    std::vector<double> j(static_cast<std::size_t>(C),
                          m.sigma2_hat * static_cast<double>(L));
    for (Eigen::Index i = 0; i < m.basis.p; ++i) {
        const CoefGpFit& fit = m.coef_fits[static_cast<std::size_t>(i)];
        const Vector& theta = fit.theta_hat.theta;
        Vector a = corr_cross(LX, st.x0, theta);
        Vector w0 = fit.factor.solve(a);
        const double rho0 = (1.0 + m.eta) - a.dot(w0);
        Matrix S = Matrix::Zero(k, C);
        for (Eigen::Index d = 0; d < q; ++d) S += theta(d) * dsq[static_cast<std::size_t>(d)];
        Matrix Kc = (-S.array()).exp();
        Matrix A = fit.factor.inverse();
        Matrix U = A * Kc;
        Vector b = (-(theta.transpose() * x0sq).array()).exp();
        Vector t = b - Kc.transpose() * w0;
        const double coef = m.basis.d(i) * m.basis.d(i) * j_variance_coef(fit);
        for (Eigen::Index c = 0; c < C; ++c) {
            double phi = (1.0 + m.eta) - Kc.col(c).dot(U.col(c));
            if (!(phi > 0.0)) {
                j[static_cast<std::size_t>(c)] = std::numeric_limits<double>::infinity();
                continue;
            }
            double rho = rho0 - t(c) * t(c) / phi;
            if (rho < 0.0) rho = 0.0;
            j[static_cast<std::size_t>(c)] += coef * rho;
        }
    }
    return j;
}

}  // namespace detail

// Pick the next design row to add: exhaustive sweep of all unselected rows,
// or the limited scheme (nearest m_lim plus r_lim uniform random others).
// Ties and the random subset are deterministic given the engine state.
inline int select_next(const LocalState& st, const SearchScheme& scheme,
                       rng_engine& eng) {
    if (!st.global_X) throw state_error("select_next: state has no global design");
    const Eigen::Index N = st.global_X->rows();
    const Eigen::Index k = static_cast<Eigen::Index>(st.selected.size());
    std::vector<char> taken(static_cast<std::size_t>(N), 0);
    for (int s : st.selected) taken[static_cast<std::size_t>(s)] = 1;
    std::vector<int> unselected;
    unselected.reserve(static_cast<std::size_t>(N - k));
    for (Eigen::Index i = 0; i < N; ++i)
        if (!taken[static_cast<std::size_t>(i)]) unselected.push_back(static_cast<int>(i));
    if (unselected.empty()) throw state_error("select_next: no unselected candidates");

    Eigen::Index m_lim = scheme.m_lim > 0 ? scheme.m_lim
                                          : std::min<Eigen::Index>(N - k, 10 * st.n_target);
    Eigen::Index r_lim = scheme.r_lim > 0
                             ? scheme.r_lim
                             : std::min<Eigen::Index>(N - k - std::min(m_lim, N - k),
                                                      st.n_target);
    std::vector<int> cands;
    if (scheme.kind == SearchScheme::Kind::exhaustive ||
        m_lim + r_lim >= static_cast<Eigen::Index>(unselected.size())) {
        cands = unselected;
    } else {
        std::vector<std::pair<double, int>> order;
        order.reserve(unselected.size());
        for (int i : unselected)
            order.push_back({(st.global_X->row(i).transpose() - st.x0).squaredNorm(), i});
        std::sort(order.begin(), order.end());
        cands.reserve(static_cast<std::size_t>(m_lim + r_lim));
        for (Eigen::Index c = 0; c < m_lim; ++c)
            cands.push_back(order[static_cast<std::size_t>(c)].second);
        // Partial Fisher-Yates over the remainder for the random slice.
        std::vector<int> rest;
        rest.reserve(unselected.size() - static_cast<std::size_t>(m_lim));
        for (std::size_t c = static_cast<std::size_t>(m_lim); c < order.size(); ++c)
            rest.push_back(order[c].second);
        for (Eigen::Index r = 0; r < r_lim; ++r) {
            std::size_t pick = static_cast<std::size_t>(r) +
                               static_cast<std::size_t>(uniform_below(
                                   eng, rest.size() - static_cast<std::size_t>(r)));
            std::swap(rest[static_cast<std::size_t>(r)], rest[pick]);
            cands.push_back(rest[static_cast<std::size_t>(r)]);
        }
    }

    std::vector<double> j = detail::j_values_batch(st, cands);
    int best_idx = -1;
    double best_j = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cands.size(); ++c) {
        if (j[c] < best_j || (j[c] == best_j && cands[c] < best_idx)) {
            best_j = j[c];
            best_idx = cands[c];
        }
    }
    if (best_idx < 0) {
        // Every candidate hit the degeneracy guard; take the nearest one.
        double bd = std::numeric_limits<double>::infinity();
        for (int i : cands) {
            double d2 = (st.global_X->row(i).transpose() - st.x0).squaredNorm();
            if (d2 < bd || (d2 == bd && i < best_idx)) {
                bd = d2;
                best_idx = i;
            }
        }
    }
    return best_idx;
}

struct NeighborhoodTimings {
    double neighborhood_s = 0;
    double svd_s = 0;
    double theta_s = 0;
};

// Greedy neighborhood growth from the n0 nearest rows to n rows, refitting
// the local model each iteration; n0 = n degenerates to the plain nearest-
// neighbor fit. The final model always uses the default multistart set.
inline LocalState build_neighborhood(const Matrix& X, const Matrix& Y, const Vector& x0,
                                     Eigen::Index n, Eigen::Index n0, double gamma,
                                     const PriorSpec& prior, double eta,
                                     const SearchScheme& scheme, rng_engine& eng,
                                     NeighborhoodTimings* timings = nullptr) {
    const Eigen::Index N = X.rows();
    if (Y.cols() != N) throw argument_error("build_neighborhood: design/response mismatch");
    if (!(n0 >= 2 && n0 <= n && n <= N))
        throw argument_error("build_neighborhood: need 2 <= n0 <= n <= N");

    auto tick = [] { return std::chrono::steady_clock::now(); };
    auto t0 = tick();
    LocalState st;
    st.x0 = x0;
    st.n_target = n;
    st.global_X = &X;
    st.global_Y = &Y;
    st.selected = knn(X, x0, n0);
    // Fit in ascending row order: a full-size neighborhood then sees the
    // training matrix exactly as the global fit does, bit for bit.
    std::sort(st.selected.begin(), st.selected.end());
    st.local_X.resize(n, X.cols());
    st.local_Y.resize(Y.rows(), n);
    for (Eigen::Index i = 0; i < n0; ++i) {
        st.local_X.row(i) = X.row(st.selected[static_cast<std::size_t>(i)]);
        st.local_Y.col(i) = Y.col(st.selected[static_cast<std::size_t>(i)]);
    }
    if (timings) timings->neighborhood_s += std::chrono::duration<double>(tick() - t0).count();

    FitTimings ft;
    FitOptions warm;
    for (Eigen::Index k = n0; k < n; ++k) {
        auto xb = st.local_X.topRows(k);
        auto yb = st.local_Y.leftCols(k);
        st.model = fit_svdgp(xb, yb, gamma, prior, eta, warm, &ft);
        st.p_history.push_back(static_cast<int>(st.model.basis.p));

        auto t1 = tick();
        int next = select_next(st, scheme, eng);
        if (timings) timings->neighborhood_s += std::chrono::duration<double>(tick() - t1).count();

        st.local_X.row(k) = X.row(next);
        st.local_Y.col(k) = Y.col(next);
        st.selected.push_back(next);
        warm.warm_starts.clear();
        for (const auto& f : st.model.coef_fits) warm.warm_starts.push_back(f.theta_hat);
    }
    st.model = fit_svdgp(st.local_X, st.local_Y, gamma, prior, eta, FitOptions{}, &ft);
    st.p_history.push_back(static_cast<int>(st.model.basis.p));
    if (timings) {
        timings->svd_s += ft.svd_s;
        timings->theta_s += ft.theta_s;
    }
    return st;
}

}  // namespace dynemu
