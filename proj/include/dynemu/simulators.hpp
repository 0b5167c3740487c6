#pragma once

// Built-in dynamic test simulators, Latin hypercube designs over their input
// domains, and dataset loading for user-supplied CSV pairs.

#include <Eigen/Dense>
#include <cmath>
#include <iostream>
#include <string>

#include "dynemu/errors.hpp"
#include "dynemu/io.hpp"
#include "dynemu/rng.hpp"

namespace dynemu {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct TimeGrid {
    double start = 0;
    double end = 1;
    Eigen::Index length = 2;

    Vector points() const {
        if (!(start < end)) throw argument_error("TimeGrid: start must precede end");
        if (length < 2) throw argument_error("TimeGrid: needs at least two points");
        Vector t(length);
        const double step = (end - start) / static_cast<double>(length - 1);
        for (Eigen::Index j = 0; j < length; ++j)
            t(j) = start + static_cast<double>(j) * step;
        return t;
    }
};

struct InputDomain {
    Matrix bounds;  // q x 2, lower/upper per dimension

    Eigen::Index dim() const { return bounds.rows(); }

    void validate() const {
        if (bounds.cols() != 2 || bounds.rows() < 1)
            throw argument_error("InputDomain: bounds must be q x 2");
        for (Eigen::Index d = 0; d < bounds.rows(); ++d)
            if (!(bounds(d, 0) < bounds(d, 1)))
                throw argument_error("InputDomain: lower bound must precede upper in dimension " +
                                     std::to_string(d + 1));
    }

    bool contains(const Vector& x) const {
        if (x.size() != bounds.rows()) return false;
        for (Eigen::Index d = 0; d < bounds.rows(); ++d)
            if (x(d) < bounds(d, 0) || x(d) > bounds(d, 1)) return false;
        return true;
    }
};

inline InputDomain forrester_domain() {
    Matrix b(3, 2);
    b << 4, 10, 4, 20, 1, 7;
    return {b};
}

inline TimeGrid forrester_grid() { return {1.0, 2.0, 200}; }

inline InputDomain environ_domain() {
    Matrix b(5, 2);
    b << 7, 13, 0.02, 0.12, 0.01, 3, 30.01, 30.295, 0, 3;
    return {b};
}

inline TimeGrid environ_grid() { return {0.3, 60.0, 200}; }

// f(x, t) = (x1 t - 2)^2 sin(x2 t - x3). Inputs outside the reference domain
// are evaluated anyway, with a warning.
inline Vector forrester(const Vector& x, const TimeGrid& grid) {
    if (x.size() != 3) throw argument_error("forrester: expects 3 inputs");
    if (!forrester_domain().contains(x))
        std::cerr << "warning: forrester input outside reference domain\n";
    Vector t = grid.points();
    Vector f(t.size());
    for (Eigen::Index j = 0; j < t.size(); ++j) {
        double a = x(0) * t(j) - 2.0;
        f(j) = a * a * std::sin(x(1) * t(j) - x(2));
    }
    return f;
}

// Pollutant concentration from two spills along a channel:
//   f(x, t) = M/sqrt(D t) exp(-s^2/(4 D t))
//           + M/sqrt(D (t - tau)) exp(-(s - L)^2/(4 D (t - tau)))  for t > tau,
// with x = (M, D, L, tau, s). The second spill contributes only once t clears
// tau by a small guard, keeping the 1/sqrt factor finite.
inline Vector environ(const Vector& x, const TimeGrid& grid) {
    if (x.size() != 5) throw argument_error("environ: expects 5 inputs");
    if (!environ_domain().contains(x))
        std::cerr << "warning: environ input outside reference domain\n";
    const double mass = x(0), diff = x(1), loc = x(2), tau = x(3), s = x(4);
    Vector t = grid.points();
    Vector f(t.size());
    for (Eigen::Index j = 0; j < t.size(); ++j) {
        if (!(t(j) > 0.0))
            throw argument_error("environ: time points must be positive");
        double v = mass / std::sqrt(diff * t(j)) * std::exp(-s * s / (4.0 * diff * t(j)));
        double dt = t(j) - tau;
        if (dt > 1e-12) {
            double r = s - loc;
            v += mass / std::sqrt(diff * dt) * std::exp(-r * r / (4.0 * diff * dt));
        }
        f(j) = v;
    }
    return f;
}

// Latin hypercube design: each dimension gets an independent random
// permutation of the n strata with a uniform jitter inside each stratum.
// Bitwise reproducible for a given seed.
inline Matrix lhd(Eigen::Index n, const InputDomain& dom, std::uint64_t seed) {
    if (n < 1) throw argument_error("lhd: n must be positive");
    dom.validate();
    const Eigen::Index q = dom.dim();
    rng_engine eng(seed);
    Matrix X(n, q);
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (Eigen::Index d = 0; d < q; ++d) {
        for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = static_cast<int>(i);
        shuffle(perm, eng);
        const double lo = dom.bounds(d, 0);
        const double w = (dom.bounds(d, 1) - lo) / static_cast<double>(n);
        for (Eigen::Index i = 0; i < n; ++i)
            X(i, d) = lo + (static_cast<double>(perm[static_cast<std::size_t>(i)]) +
                            uniform01(eng)) * w;
    }
    return X;
}

// Evaluates a built-in simulator on each design row; columns follow rows.
template <typename Sim>
Matrix evaluate_rows(Sim&& sim, const Matrix& X, const TimeGrid& grid) {
    Matrix Y(grid.length, X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) Y.col(i) = sim(X.row(i).transpose(), grid);
    return Y;
}

struct Dataset {
    Matrix design;    // N x q
    Matrix response;  // L x N, column j belongs to design row j
};

inline Dataset load_dataset(const std::string& design_path,
                            const std::string& response_path) {
    Dataset d{read_csv_matrix(design_path), read_csv_matrix(response_path)};
    if (d.response.cols() != d.design.rows())
        throw parse_error("load_dataset: response has " + std::to_string(d.response.cols()) +
                          " columns but design has " + std::to_string(d.design.rows()) +
                          " rows; they must match");
    return d;
}

}  // namespace dynemu
