#pragma once

// Dense kernels used by the emulator: singular value decomposition with a
// deterministic sign convention, Cholesky factorization of shifted
// correlation matrices, and the O(k^2) partitioned-inverse update for a
// symmetric system grown by one row/column.

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "dynemu/errors.hpp"

namespace dynemu {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SvdResult {
    Matrix U;  // L x k, orthonormal columns
    Vector d;  // k, non-increasing, non-negative
    Matrix V;  // N x k, orthonormal columns
};

// Thin SVD of an L x N matrix, k = min(L, N). Columns are ordered by
// non-increasing singular value and the sign of each (U, V) column pair is
// fixed so that the largest-magnitude entry of the U column is positive
// (first such entry on exact ties). Bitwise reproducible for equal input.
inline SvdResult svd(const Matrix& Y) {
    if (Y.size() == 0) throw argument_error("svd: empty matrix");
    if (!Y.allFinite()) throw argument_error("svd: input has non-finite entries");
    Eigen::BDCSVD<Matrix> dec(Y, Eigen::ComputeThinU | Eigen::ComputeThinV);
    SvdResult r{dec.matrixU(), dec.singularValues(), dec.matrixV()};
    for (Eigen::Index i = 0; i < r.d.size(); ++i) {
        Eigen::Index arg = 0;
        double best = -1.0;
        for (Eigen::Index t = 0; t < r.U.rows(); ++t) {
            double a = std::abs(r.U(t, i));
            if (a > best) {
                best = a;
                arg = t;
            }
        }
        if (r.U(arg, i) < 0.0) {
            r.U.col(i) = -r.U.col(i);
            r.V.col(i) = -r.V.col(i);
        }
    }
    return r;
}

// Cholesky factor of K + eta*I for symmetric positive definite input.
struct SpdFactor {
    Eigen::Index dimension = 0;
    Matrix factor;       // lower triangular, K + eta*I = factor * factor^T
    double log_det = 0;  // log|K + eta*I| = 2 * sum(log(diag(factor)))

    Vector solve(const Vector& b) const {
        Vector y = factor.triangularView<Eigen::Lower>().solve(b);
        return factor.transpose().triangularView<Eigen::Upper>().solve(y);
    }

    Matrix solve(const Matrix& B) const {
        Matrix y = factor.triangularView<Eigen::Lower>().solve(B);
        return factor.transpose().triangularView<Eigen::Upper>().solve(y);
    }

    Matrix inverse() const {
        return solve(Matrix(Matrix::Identity(dimension, dimension)));
    }
};

inline SpdFactor spd_factorize(const Matrix& K, double eta) {
    if (K.rows() != K.cols() || K.rows() == 0)
        throw argument_error("spd_factorize: matrix must be square and non-empty");
    if (eta < 0.0) throw argument_error("spd_factorize: eta must be non-negative");
    Matrix A = K;
    A.diagonal().array() += eta;
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() != Eigen::Success) {
        // Re-run a scalar Cholesky to report which leading minor failed.
        const Eigen::Index n = A.rows();
        Matrix L = Matrix::Zero(n, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            double s = A(j, j) - L.row(j).head(j).squaredNorm();
            if (!(s > 0.0))
                throw singular_error(
                    "spd_factorize: matrix not positive definite at pivot " +
                        std::to_string(j),
                    static_cast<int>(j));
            L(j, j) = std::sqrt(s);
            for (Eigen::Index i = j + 1; i < n; ++i)
                L(i, j) = (A(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
        }
        throw singular_error("spd_factorize: factorization failed", -1);
    }
    SpdFactor f;
    f.dimension = A.rows();
    f.factor = llt.matrixL();
    f.log_det = 2.0 * f.factor.diagonal().array().log().sum();
    return f;
}

// One-column growth of an SPD system. Given the factor of K (k x k), the new
// off-diagonal column k_vec and the new diagonal entry, exposes the blocks of
//   K~^-1 = [ K^-1 + phi g g^T , g ; g^T , 1/phi ],
// g = -K^-1 k_vec / phi, phi = diag_new - k_vec^T K^-1 k_vec, at O(k^2) cost.
struct PartitionedInverse {
    const SpdFactor* base = nullptr;
    Vector g;
    double phi = 0;

    // K~^-1 * [w_head; w_tail]
    Vector apply(const Vector& w) const {
        const Eigen::Index k = g.size();
        if (w.size() != k + 1)
            throw argument_error("PartitionedInverse::apply: length mismatch");
        Vector head = w.head(k);
        Vector out(k + 1);
        out.head(k) = base->solve(head) + g * (phi * g.dot(head) + w(k));
        out(k) = g.dot(head) + w(k) / phi;
        return out;
    }

    // Dense (k+1) x (k+1) inverse, for verification at small sizes.
    Matrix assemble() const {
        const Eigen::Index k = g.size();
        Matrix M(k + 1, k + 1);
        M.topLeftCorner(k, k) = base->inverse() + phi * g * g.transpose();
        M.topRightCorner(k, 1) = g;
        M.bottomLeftCorner(1, k) = g.transpose();
        M(k, k) = 1.0 / phi;
        return M;
    }
};

inline PartitionedInverse partitioned_inverse_update(const SpdFactor& base,
                                                     const Vector& k_vec,
                                                     double diag_new) {
    if (k_vec.size() != base.dimension)
        throw argument_error("partitioned_inverse_update: column length mismatch");
    Vector u = base.solve(k_vec);
    double phi = diag_new - k_vec.dot(u);
    if (!(phi > 0.0))
        throw degeneracy_error(
            "partitioned_inverse_update: non-positive Schur complement (phi = " +
            std::to_string(phi) + ")");
    PartitionedInverse p;
    p.base = &base;
    p.g = -u / phi;
    p.phi = phi;
    return p;
}

}  // namespace dynemu
