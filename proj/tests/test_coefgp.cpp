// Tests for the per-coefficient GP: correlation kernels, the theta prior and
// its scale rule, the marginal log posterior (hand-derived two-point oracle
// plus dense linear-algebra oracle plus finite-difference gradients), MAP
// estimation, and the t predictive.

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "dynemu/coefgp.hpp"
#include "dynemu/rng.hpp"

using dynemu::Matrix;
using dynemu::Vector;

namespace {

Matrix random_design(Eigen::Index n, Eigen::Index q, dynemu::rng_engine& eng) {
    Matrix X(n, q);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < q; ++j) X(i, j) = dynemu::uniform01(eng);
    return X;
}

Vector random_vector(Eigen::Index n, dynemu::rng_engine& eng) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = dynemu::normal01(eng);
    return v;
}

// Fit with all hyperparameters pinned by hand; bypasses the optimizer so the
// predictive can be probed at a chosen theta.
dynemu::CoefGpFit pinned_fit(const Matrix& X, const Vector& v, const Vector& theta,
                             double eta, const dynemu::PriorSpec& prior) {
    dynemu::CoefGpFit f;
    f.theta_hat.theta = theta;
    f.factor = dynemu::spd_factorize(dynemu::corr_matrix(X, theta), eta);
    f.kinv_v = f.factor.solve(v);
    f.v = v;
    f.psi = std::max(v.dot(f.kinv_v), 1e-300);
    f.prior = prior;
    f.n_points = X.rows();
    f.eta = eta;
    f.prior_scale = dynemu::theta_prior_scale(X, prior);
    return f;
}

// Regularized lower incomplete gamma at shape 3/2, in closed form.
double gamma32_cdf(double x) {
    return std::erf(std::sqrt(x)) -
           2.0 / std::sqrt(M_PI) * std::sqrt(x) * std::exp(-x);
}

}  // namespace

TEST_CASE("gauss_corr: unit distance at theta 2 gives exp(-2)") {
    Vector a(1), b(1), t(1);
    a << 0.0;
    b << 1.0;
    t << 2.0;
    REQUIRE(dynemu::gauss_corr(a, b, t) == Catch::Approx(0.1353352832366127).epsilon(1e-15));
    REQUIRE(dynemu::gauss_corr(a, a, t) == 1.0);
}

TEST_CASE("gauss_corr: dimension mismatch throws") {
    Vector a(2), b(1), t(2);
    a << 0, 0;
    b << 1;
    t << 1, 1;
    REQUIRE_THROWS_AS(dynemu::gauss_corr(a, b, t), dynemu::argument_error);
}

TEST_CASE("corr_matrix: symmetric, unit diagonal, matches cross correlations") {
    dynemu::rng_engine eng(101);
    Matrix X = random_design(9, 3, eng);
    Vector theta(3);
    theta << 0.5, 2.0, 7.0;
    Matrix K = dynemu::corr_matrix(X, theta);
    REQUIRE((K - K.transpose()).cwiseAbs().maxCoeff() == 0.0);
    for (Eigen::Index i = 0; i < 9; ++i) REQUIRE(K(i, i) == 1.0);
    for (Eigen::Index j = 0; j < 9; ++j) {
        Vector kj = dynemu::corr_cross(X, X.row(j).transpose(), theta);
        REQUIRE((kj - K.col(j)).cwiseAbs().maxCoeff() < 1e-15);
    }
    dynemu::detail::CorrWorkspace ws(X);
    REQUIRE((ws.corr(theta) - K).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("corr_matrix: nugget keeps random designs positive definite") {
    dynemu::rng_engine eng(102);
    for (int rep = 0; rep < 500; ++rep) {
        Eigen::Index n = 2 + static_cast<Eigen::Index>(dynemu::uniform_below(eng, 49));
        Eigen::Index q = 1 + static_cast<Eigen::Index>(dynemu::uniform_below(eng, 5));
        Matrix X = random_design(n, q, eng);
        if (n > 3 && rep % 5 == 0) X.row(1) = X.row(0);  // exact duplicate
        Vector theta(q);
        for (Eigen::Index d = 0; d < q; ++d)
            theta(d) = 0.1 + 50.0 * dynemu::uniform01(eng);
        Matrix K = dynemu::corr_matrix(X, theta);
        K.diagonal().array() += 1e-6;
        Eigen::SelfAdjointEigenSolver<Matrix> es(K);
        REQUIRE(es.eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("theta_prior_scale: explicit scale wins, otherwise distance rule") {
    Matrix X(3, 1);
    X << 0.0, 1.0, 3.0;
    dynemu::PriorSpec p;
    REQUIRE(dynemu::theta_prior_scale(X, p) ==
            Catch::Approx(9.0 / dynemu::kGammaShape32Q95).epsilon(1e-15));
    p.theta_scale = 0.25;
    REQUIRE(dynemu::theta_prior_scale(X, p) == 0.25);
    Matrix one = Matrix::Zero(1, 2);
    p.theta_scale = 0.0;
    REQUIRE(dynemu::theta_prior_scale(one, p) == 1.0);
}

TEST_CASE("theta prior: scale constant is the Gamma(3/2) 95th percentile") {
    REQUIRE(gamma32_cdf(dynemu::kGammaShape32Q95) == Catch::Approx(0.95).epsilon(1e-12));
    // Strictly bracketed: nudging the point moves the mass across 0.95.
    REQUIRE(gamma32_cdf(dynemu::kGammaShape32Q95 - 1e-8) < 0.95);
    REQUIRE(gamma32_cdf(dynemu::kGammaShape32Q95 + 1e-8) > 0.95);
}

TEST_CASE("log_theta_prior: closed form, iid over dimensions, zero rejected") {
    double shape = 1.5, scale = 2.0;
    Vector t1(1);
    t1 << 0.7;
    double ref = -std::lgamma(shape) - shape * std::log(scale) -
                 (shape + 1.0) * std::log(0.7) - 1.0 / (scale * 0.7);
    REQUIRE(dynemu::log_theta_prior(t1, shape, scale) == Catch::Approx(ref).epsilon(1e-14));
    Vector t2 = Vector::Constant(2, 0.7);
    REQUIRE(dynemu::log_theta_prior(t2, shape, scale) ==
            Catch::Approx(2.0 * ref).epsilon(1e-14));
    Vector bad(1);
    bad << 0.0;
    REQUIRE(dynemu::log_theta_prior(bad, shape, scale) ==
            -std::numeric_limits<double>::infinity());
}

TEST_CASE("log_posterior_theta: two-point posterior in closed form") {
    // X = {0, 1} in one dimension, v = (1, -1)/sqrt(2), no nugget. Then
    // psi = 1/(1 - e^-theta) and |K| = 1 - e^-2theta, so every term of the
    // posterior is available by hand.
    Matrix X(2, 1);
    X << 0.0, 1.0;
    Vector v(2);
    v << 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0);
    dynemu::PriorSpec prior;
    prior.theta_scale = 1.0;
    for (double theta : {0.3, 1.0, 2.5, 6.0}) {
        double psi = 1.0 / (1.0 - std::exp(-theta));
        double ref = -0.5 * std::log(1.0 - std::exp(-2.0 * theta)) -
                     std::log(0.5 * psi) - std::lgamma(1.5) -
                     2.5 * std::log(theta) - 1.0 / theta;
        Vector t(1);
        t << theta;
        REQUIRE(dynemu::log_posterior_theta(t, v, X, prior, 0.0) ==
                Catch::Approx(ref).epsilon(1e-10));
    }
}

TEST_CASE("log_posterior_theta: matches a dense-algebra recomputation") {
    dynemu::rng_engine eng(103);
    const double eta = 1e-6;
    dynemu::PriorSpec prior;
    prior.alpha_i = 1.0;
    prior.beta_i = 0.5;
    for (int rep = 0; rep < 30; ++rep) {
        Eigen::Index n = 3 + static_cast<Eigen::Index>(dynemu::uniform_below(eng, 20));
        Eigen::Index q = 1 + static_cast<Eigen::Index>(dynemu::uniform_below(eng, 4));
        Matrix X = random_design(n, q, eng);
        Vector v = random_vector(n, eng);
        Vector theta(q);
        for (Eigen::Index d = 0; d < q; ++d)
            theta(d) = 0.2 + 8.0 * dynemu::uniform01(eng);

        Matrix K = dynemu::corr_matrix(X, theta);
        K.diagonal().array() += eta;
        Eigen::SelfAdjointEigenSolver<Matrix> es(K);
        double logdet = es.eigenvalues().array().log().sum();
        double psi = v.dot(K.ldlt().solve(v));
        double scale = dynemu::theta_prior_scale(X, prior);
        double ref = -0.5 * logdet -
                     0.5 * (prior.alpha_i + static_cast<double>(n)) *
                         std::log(0.5 * (prior.beta_i + psi)) +
                     dynemu::log_theta_prior(theta, prior.theta_shape, scale);
        REQUIRE(dynemu::log_posterior_theta(theta, v, X, prior, eta) ==
                Catch::Approx(ref).epsilon(1e-9));
    }
}

TEST_CASE("log_posterior_theta: prior factor separates from the likelihood") {
    dynemu::rng_engine eng(104);
    Matrix X = random_design(10, 2, eng);
    Vector v = random_vector(10, eng);
    Vector theta = Vector::Constant(2, 1.7);
    dynemu::PriorSpec p1, p2;
    p1.theta_scale = 0.5;
    p2.theta_scale = 4.0;
    double like1 = dynemu::log_posterior_theta(theta, v, X, p1, 1e-6) -
                   dynemu::log_theta_prior(theta, p1.theta_shape, 0.5);
    double like2 = dynemu::log_posterior_theta(theta, v, X, p2, 1e-6) -
                   dynemu::log_theta_prior(theta, p2.theta_shape, 4.0);
    REQUIRE(like1 == Catch::Approx(like2).epsilon(1e-10));
}

TEST_CASE("posterior gradient: matches central finite differences") {
    dynemu::rng_engine eng(105);
    dynemu::PriorSpec prior;
    prior.alpha_i = 2.0;
    prior.beta_i = 1.0;
    const double eta = 1e-6;
    for (int rep = 0; rep < 20; ++rep) {
        Eigen::Index n = 4 + static_cast<Eigen::Index>(dynemu::uniform_below(eng, 12));
        Eigen::Index q = 1 + static_cast<Eigen::Index>(dynemu::uniform_below(eng, 3));
        // Keep design points apart: a near-singular correlation matrix makes
        // the finite-difference reference itself unreliable.
        Matrix X = random_design(n, q, eng);
        for (bool crowded = true; crowded;) {
            crowded = false;
            for (Eigen::Index a = 0; a < n && !crowded; ++a)
                for (Eigen::Index b = a + 1; b < n && !crowded; ++b)
                    crowded = (X.row(a) - X.row(b)).norm() < 0.02;
            if (crowded) X = random_design(n, q, eng);
        }
        Vector v = random_vector(n, eng);
        Vector theta(q);
        for (Eigen::Index d = 0; d < q; ++d)
            theta(d) = 0.5 + 4.0 * dynemu::uniform01(eng);
        double scale = 1.3;
        dynemu::detail::CorrWorkspace ws(X);
        Vector grad(q);
        dynemu::detail::posterior_eval(theta, v, ws, prior, eta, scale, &grad);
        auto lp_at = [&](const Vector& t) {
            return dynemu::detail::posterior_eval(t, v, ws, prior, eta, scale, nullptr).lp;
        };
        for (Eigen::Index d = 0; d < q; ++d) {
            double h = 3e-5 * theta(d);
            Vector t1 = theta, t2 = theta, t3 = theta, t4 = theta;
            t1(d) += h;
            t2(d) -= h;
            t3(d) += 2.0 * h;
            t4(d) -= 2.0 * h;
            double fd =
                (8.0 * (lp_at(t1) - lp_at(t2)) - (lp_at(t3) - lp_at(t4))) / (12.0 * h);
            REQUIRE(grad(d) == Catch::Approx(fd).epsilon(5e-5).margin(1e-7));
        }
    }
}

TEST_CASE("default_starts: prior mode and one decade either side") {
    Matrix X(2, 2);
    X << 0, 0, 1, 1;
    dynemu::PriorSpec prior;
    prior.theta_scale = 0.8;
    auto starts = dynemu::default_starts(X, prior);
    double mode = 1.0 / (2.5 * 0.8);
    REQUIRE(starts.size() == 3);
    REQUIRE(starts[0].theta.size() == 2);
    REQUIRE(starts[0].theta(0) == Catch::Approx(mode).epsilon(1e-15));
    REQUIRE(starts[1].theta(1) == Catch::Approx(10.0 * mode).epsilon(1e-15));
    REQUIRE(starts[2].theta(0) == Catch::Approx(0.1 * mode).epsilon(1e-15));
}

TEST_CASE("map_theta: attained posterior dominates every start") {
    dynemu::rng_engine eng(106);
    dynemu::PriorSpec prior;
    for (int rep = 0; rep < 5; ++rep) {
        Matrix X = random_design(12, 2, eng);
        Vector v = random_vector(12, eng);
        dynemu::CoefGpFit fit = dynemu::map_theta(v, X, prior, 1e-6);
        for (const auto& s : dynemu::default_starts(X, prior)) {
            double at_start = dynemu::log_posterior_theta(s.theta, v, X, prior, 1e-6);
            REQUIRE(fit.log_post >= at_start - 1e-9);
        }
        REQUIRE(fit.log_post ==
                Catch::Approx(dynemu::log_posterior_theta(fit.theta_hat.theta, v, X,
                                                          prior, 1e-6))
                    .epsilon(1e-9));
    }
}

TEST_CASE("map_theta: recovers the generating range on most draws") {
    // 1-D GP draws with theta* = 4; the MAP estimate should land within a
    // factor of four on nearly every seed.
    dynemu::PriorSpec prior;
    const double eta = 1e-6;
    const Eigen::Index n = 100;
    Vector theta_star(1);
    theta_star << 4.0;
    int hits = 0;
    for (unsigned seed = 0; seed < 20; ++seed) {
        dynemu::rng_engine eng(dynemu::derive_seed(900, seed));
        Matrix X = random_design(n, 1, eng);
        Matrix K = dynemu::corr_matrix(X, theta_star);
        K.diagonal().array() += eta;
        Eigen::LLT<Matrix> llt(K);
        Vector v = llt.matrixL() * random_vector(n, eng);
        dynemu::CoefGpFit fit = dynemu::map_theta(v, X, prior, eta);
        double t = fit.theta_hat.theta(0);
        if (t >= 1.0 && t <= 16.0) ++hits;
    }
    REQUIRE(hits >= 18);
}

TEST_CASE("map_theta: duplicate design rows survive with the nugget") {
    dynemu::rng_engine eng(107);
    Matrix X = random_design(10, 2, eng);
    X.row(5) = X.row(2);
    Vector v = random_vector(10, eng);
    dynemu::CoefGpFit fit = dynemu::map_theta(v, X, dynemu::PriorSpec{}, 1e-6);
    REQUIRE(std::isfinite(fit.log_post));
    REQUIRE(std::isfinite(fit.psi));
    REQUIRE(fit.psi > 0.0);
}

TEST_CASE("map_theta: input validation") {
    Matrix X(1, 1);
    X << 0.0;
    Vector v(1);
    v << 1.0;
    REQUIRE_THROWS_AS(dynemu::map_theta(v, X, dynemu::PriorSpec{}, 1e-6),
                      dynemu::argument_error);
    Matrix X2(3, 1);
    X2 << 0, 0.5, 1;
    REQUIRE_THROWS_AS(dynemu::map_theta(v, X2, dynemu::PriorSpec{}, 1e-6),
                      dynemu::argument_error);
    Vector v3(3);
    v3 << 1, 2, 3;
    REQUIRE_THROWS_AS(dynemu::map_theta(v3, X2, dynemu::PriorSpec{}, -0.5),
                      dynemu::argument_error);
}

TEST_CASE("predict_coef: interpolates the series without a nugget") {
    Matrix X(6, 1);
    X << 0.0, 0.2, 0.4, 0.6, 0.8, 1.0;
    Vector v(6);
    v << 1.0, -0.5, 0.25, 2.0, -1.0, 0.5;
    Vector theta(1);
    theta << 3.0;
    dynemu::PriorSpec prior;
    dynemu::CoefGpFit fit = pinned_fit(X, v, theta, 0.0, prior);
    for (Eigen::Index j = 0; j < 6; ++j) {
        auto p = dynemu::predict_coef(X.row(j).transpose(), fit, X);
        REQUIRE(p.mean == Catch::Approx(v(j)).margin(1e-9));
        REQUIRE(p.scale2 >= 0.0);
        REQUIRE(p.scale2 < 1e-10);
        REQUIRE(p.dof == 6.0);
    }
}

TEST_CASE("predict_coef: far point reverts to zero mean and the prior spread") {
    Matrix X(6, 1);
    X << 0.0, 0.2, 0.4, 0.6, 0.8, 1.0;
    Vector v(6);
    v << 1.0, -0.5, 0.25, 2.0, -1.0, 0.5;
    Vector theta(1);
    theta << 3.0;
    dynemu::PriorSpec prior;
    prior.alpha_i = 2.0;
    prior.beta_i = 0.5;
    const double eta = 1e-6;
    dynemu::CoefGpFit fit = pinned_fit(X, v, theta, eta, prior);
    Vector far(1);
    far << 100.0;
    auto p = dynemu::predict_coef(far, fit, X);
    REQUIRE(std::abs(p.mean) < 1e-12);
    REQUIRE(p.scale2 ==
            Catch::Approx((prior.beta_i + fit.psi) * (1.0 + eta) / (prior.alpha_i + 6.0))
                .epsilon(1e-10));
    REQUIRE(p.dof == 8.0);
}

TEST_CASE("predict_coef: spread shrinks under a mean-consistent added point") {
    dynemu::rng_engine eng(108);
    dynemu::PriorSpec prior;
    const double eta = 1e-6;
    for (int rep = 0; rep < 50; ++rep) {
        Matrix X = random_design(8, 2, eng);
        Vector v = random_vector(8, eng);
        Vector theta(2);
        theta << 1.0 + 3.0 * dynemu::uniform01(eng), 1.0 + 3.0 * dynemu::uniform01(eng);
        dynemu::CoefGpFit fit = pinned_fit(X, v, theta, eta, prior);

        Vector xnew = random_design(1, 2, eng).row(0).transpose();
        auto at_new = dynemu::predict_coef(xnew, fit, X);

        Matrix X2(9, 2);
        X2 << X, xnew.transpose();
        Vector v2(9);
        v2 << v, at_new.mean;
        dynemu::CoefGpFit fit2 = pinned_fit(X2, v2, theta, eta, prior);
        REQUIRE(fit2.psi == Catch::Approx(fit.psi).epsilon(1e-8));

        Vector probe = random_design(1, 2, eng).row(0).transpose();
        auto p1 = dynemu::predict_coef(probe, fit, X);
        auto p2 = dynemu::predict_coef(probe, fit2, X2);
        // Conditioning on one more row can only tighten the correlation part,
        // and psi is unchanged by construction, so the spread cannot grow.
        REQUIRE(p2.scale2 <= p1.scale2 * (1.0 + 1e-8) + 1e-12);
    }
}

TEST_CASE("predict_coef: design size mismatch throws") {
    Matrix X(4, 1);
    X << 0, 0.3, 0.6, 1.0;
    Vector v(4);
    v << 1, 2, 3, 4;
    Vector theta(1);
    theta << 2.0;
    dynemu::CoefGpFit fit = pinned_fit(X, v, theta, 1e-6, dynemu::PriorSpec{});
    Matrix wrong(3, 1);
    wrong << 0, 0.5, 1.0;
    Vector x0(1);
    x0 << 0.5;
    REQUIRE_THROWS_AS(dynemu::predict_coef(x0, fit, wrong), dynemu::argument_error);
}

TEST_CASE("map_theta: invariant to permuting the design rows") {
    dynemu::rng_engine eng(109);
    Matrix X = random_design(40, 2, eng);
    Vector v = random_vector(40, eng);
    dynemu::PriorSpec prior;
    dynemu::CoefGpFit a = dynemu::map_theta(v, X, prior, 1e-6);

    std::vector<Eigen::Index> perm(40);
    for (Eigen::Index i = 0; i < 40; ++i) perm[i] = i;
    dynemu::shuffle(perm, eng);
    Matrix Xp(40, 2);
    Vector vp(40);
    for (Eigen::Index i = 0; i < 40; ++i) {
        Xp.row(i) = X.row(perm[i]);
        vp(i) = v(perm[i]);
    }
    dynemu::CoefGpFit b = dynemu::map_theta(vp, Xp, prior, 1e-6);
    REQUIRE(std::abs(a.log_post - b.log_post) < 1e-7 * (1.0 + std::abs(a.log_post)));
    for (Eigen::Index d = 0; d < 2; ++d)
        REQUIRE(b.theta_hat.theta(d) ==
                Catch::Approx(a.theta_hat.theta(d)).epsilon(1e-3));
}
