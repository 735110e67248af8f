#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "sdcl/errors.hpp"
#include "sdcl/matrix.hpp"

namespace sdcl {

/// Thin SVD of a d x p matrix: f = u * diag(s) * v', with u d x r, v p x r,
/// r = min(d, p), and s sorted descending. Columns of u and v are orthonormal.
/// Sign convention: the largest-magnitude entry of each column of u is
/// non-negative (u and v columns are flipped together, so the factorization
/// is unchanged).
struct ThinSvd {
    Matrix u;
    std::vector<double> s;
    Matrix v;
};

namespace detail {

inline double offdiag_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix: a = v * diag(lam) * v'.
/// Overwrites `a`; eigenvalues land on its diagonal, unsorted.
inline void jacobi_eigh(Matrix& a, Matrix& v, int max_sweeps, double rel_tol) {
    const std::size_t n = a.rows();
    v = Matrix::identity(n);
    const double anorm = a.frobenius_norm();
    const double tol = rel_tol * anorm;

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        if (offdiag_norm(a) <= tol) return;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= 1e-18 * anorm) {
                    a(p, q) = a(q, p) = 0.0;
                    continue;
                }
                const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                const double app = a(p, p);
                const double aqq = a(q, q);
                a(p, p) = app - t * apq;
                a(q, q) = aqq + t * apq;
                a(p, q) = a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    if (k == p || k == q) continue;
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = a(p, k) = c * akp - s * akq;
                    a(k, q) = a(q, k) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    if (offdiag_norm(a) > tol) {
        double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            dmax = std::max(dmax, std::abs(a(i, i)));
            dmin = std::min(dmin, std::abs(a(i, i)));
        }
        throw NumericError(
            "jacobi_eigh: no convergence after " + std::to_string(max_sweeps) +
            " sweeps; off-diagonal norm " + std::to_string(offdiag_norm(a)) +
            " vs tolerance " + std::to_string(tol) + "; diagonal magnitude range [" +
            std::to_string(dmin) + ", " + std::to_string(dmax) + "]");
    }
}

/// Index of the column of `u` (d x taken columns) least covered by the
/// orthonormal columns already present, i.e. the coordinate axis with the
/// largest residual after projection.
inline std::size_t least_covered_axis(const Matrix& u, std::size_t ncols) {
    std::size_t best = 0;
    double best_cov = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < u.rows(); ++k) {
        double cov = 0.0;
        for (std::size_t j = 0; j < ncols; ++j) cov += u(k, j) * u(k, j);
        if (cov < best_cov) {
            best_cov = cov;
            best = k;
        }
    }
    return best;
}

/// Thin SVD for d >= p. No sign canonicalization here; the caller does it.
inline ThinSvd thin_svd_tall(const Matrix& f, int max_sweeps, double rel_tol) {
    const std::size_t d = f.rows();
    const std::size_t p = f.cols();

    Matrix gram = f.transpose() * f;
    Matrix evecs;
    jacobi_eigh(gram, evecs, max_sweeps, rel_tol);

    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return gram(a, a) > gram(b, b);
    });

    ThinSvd out;
    out.s.resize(p);
    out.v = Matrix(p, p);
    for (std::size_t j = 0; j < p; ++j) {
        const std::size_t src = order[j];
        out.s[j] = std::sqrt(std::max(gram(src, src), 0.0));
        for (std::size_t i = 0; i < p; ++i) out.v(i, j) = evecs(i, src);
    }

    // Left vectors: u_j = f v_j / s_j. Columns whose singular value has
    // collapsed get filled by orthonormal completion instead.
    out.u = Matrix(d, p);
    const double tiny = 1e-12 * (out.s.empty() ? 0.0 : out.s[0]);
    for (std::size_t j = 0; j < p; ++j) {
        if (out.s[j] > tiny && out.s[j] > 0.0) {
            for (std::size_t i = 0; i < d; ++i) {
                double acc = 0.0;
                for (std::size_t k = 0; k < p; ++k) acc += f(i, k) * out.v(k, j);
                out.u(i, j) = acc / out.s[j];
            }
        } else {
            const std::size_t axis = least_covered_axis(out.u, j);
            std::vector<double> r(d, 0.0);
            r[axis] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t jj = 0; jj < j; ++jj) {
                    double dot = 0.0;
                    for (std::size_t i = 0; i < d; ++i) dot += out.u(i, jj) * r[i];
                    for (std::size_t i = 0; i < d; ++i) r[i] -= dot * out.u(i, jj);
                }
            }
            double nrm = 0.0;
            for (double x : r) nrm += x * x;
            nrm = std::sqrt(nrm);
            if (nrm < 1e-8)
                throw NumericError("thin_svd: basis completion failed (residual norm " +
                                   std::to_string(nrm) + ")");
            for (std::size_t i = 0; i < d; ++i) out.u(i, j) = r[i] / nrm;
        }
    }

    // Modified Gram-Schmidt cleanup of u, leading columns first so the
    // dominant subspace is preserved.
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t jj = 0; jj < j; ++jj) {
            double dot = 0.0;
            for (std::size_t i = 0; i < d; ++i) dot += out.u(i, jj) * out.u(i, j);
            for (std::size_t i = 0; i < d; ++i) out.u(i, j) -= dot * out.u(i, jj);
        }
        double nrm = 0.0;
        for (std::size_t i = 0; i < d; ++i) nrm += out.u(i, j) * out.u(i, j);
        nrm = std::sqrt(nrm);
        if (nrm < 1e-8)
            throw NumericError("thin_svd: left factor column " + std::to_string(j) +
                               " collapsed during re-orthonormalization");
        for (std::size_t i = 0; i < d; ++i) out.u(i, j) /= nrm;
    }
    return out;
}

} // namespace detail

/// Thin SVD via one-sided Jacobi on the Gram matrix. Throws NumericError if
/// the eigensolver fails to converge (with condition diagnostics in the
/// message). Handles d < p by transposing the problem.
inline ThinSvd thin_svd(const Matrix& f, int max_sweeps = 100, double rel_tol = 1e-12) {
    if (!f.all_finite())
        throw ContractViolation("thin_svd: input has non-finite entries");

    ThinSvd out;
    if (f.rows() >= f.cols()) {
        out = detail::thin_svd_tall(f, max_sweeps, rel_tol);
    } else {
        ThinSvd t = detail::thin_svd_tall(f.transpose(), max_sweeps, rel_tol);
        out.u = std::move(t.v);
        out.s = std::move(t.s);
        out.v = std::move(t.u);
    }

    // Canonical signs: largest-magnitude entry of each left vector made
    // non-negative; the paired right vector flips with it.
    const std::size_t r = out.s.size();
    for (std::size_t j = 0; j < r; ++j) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < out.u.rows(); ++i) {
            const double m = std::abs(out.u(i, j));
            if (m > best) {
                best = m;
                arg = i;
            }
        }
        if (out.u(arg, j) < 0.0) {
            for (std::size_t i = 0; i < out.u.rows(); ++i) out.u(i, j) = -out.u(i, j);
            for (std::size_t i = 0; i < out.v.rows(); ++i) out.v(i, j) = -out.v(i, j);
        }
    }
    return out;
}

/// u * diag(s) * v' — mostly for tests and reconstruction checks.
inline Matrix reconstruct(const ThinSvd& svd) {
    Matrix us = svd.u;
    for (std::size_t j = 0; j < svd.s.size(); ++j)
        for (std::size_t i = 0; i < us.rows(); ++i) us(i, j) *= svd.s[j];
    return us * svd.v.transpose();
}

} // namespace sdcl
