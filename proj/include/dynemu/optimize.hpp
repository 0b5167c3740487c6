#pragma once

// Box-constrained dense BFGS for very low dimensional smooth objectives.
// The callable is evaluated as f(x, grad*) where grad == nullptr requests the
// objective value only (used by the line search). Fully deterministic.

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace dynemu {

struct BoxMinResult {
    Eigen::VectorXd x;
    double f = std::numeric_limits<double>::infinity();
    int iterations = 0;
};

template <typename F>
BoxMinResult minimize_box(F&& func, Eigen::VectorXd x, const Eigen::VectorXd& lo,
                          const Eigen::VectorXd& hi, int max_iter = 200,
                          double gtol = 1e-9, double ftol = 1e-14) {
    using Eigen::MatrixXd;
    using Eigen::VectorXd;
    const Eigen::Index q = x.size();
    auto clamp = [&](VectorXd z) {
        for (Eigen::Index i = 0; i < z.size(); ++i)
            z(i) = std::min(hi(i), std::max(lo(i), z(i)));
        return z;
    };
    x = clamp(x);
    VectorXd g(q);
    double f = func(x, &g);
    MatrixXd H = MatrixXd::Identity(q, q);
    BoxMinResult res{x, f, 0};
    for (int it = 0; it < max_iter; ++it) {
        if (!std::isfinite(f)) break;
        if (g.lpNorm<Eigen::Infinity>() < gtol) break;
        VectorXd d = -(H * g);
        if (d.dot(g) > -1e-14 * d.norm() * g.norm()) {
            H.setIdentity();
            d = -g;
        }
        double step = 1.0;
        VectorXd xn;
        double fn = f;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            xn = clamp(x + step * d);
            if ((xn - x).lpNorm<Eigen::Infinity>() == 0.0) break;
            fn = func(xn, nullptr);
            if (std::isfinite(fn) && fn <= f + 1e-4 * g.dot(xn - x)) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        VectorXd gn(q);
        fn = func(xn, &gn);
        VectorXd s = xn - x;
        VectorXd y = gn - g;
        double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            VectorXd Hy = H * y;
            H += ((sy + y.dot(Hy)) / (sy * sy)) * (s * s.transpose()) -
                 (Hy * s.transpose() + s * Hy.transpose()) / sy;
        }
        bool tiny = std::abs(f - fn) <= ftol * (1.0 + std::abs(f));
        x = xn;
        f = fn;
        g = gn;
        res.iterations = it + 1;
        if (tiny) break;
    }
    res.x = x;
    res.f = f;
    return res;
}

}  // namespace dynemu
