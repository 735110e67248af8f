#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "sdcl/errors.hpp"
#include "sdcl/matrix.hpp"
#include "sdcl/svd.hpp"

namespace sdcl {

/// Reciprocal spectral-gap matrix used by the SVD vector-Jacobian product:
/// k_ij = 1 / (s_i^2 - s_j^2) off the diagonal, antisymmetric, with
/// near-degenerate pairs clamped to 0 and counted.
struct KMatrix {
    Matrix k;
    int degenerate_pairs = 0;
};

inline KMatrix k_matrix(const std::vector<double>& s, double eps) {
    if (eps <= 0.0) throw ContractViolation("k_matrix: eps must be positive");
    const std::size_t p = s.size();
    KMatrix out{Matrix(p, p), 0};
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = i + 1; j < p; ++j) {
            const double gap = s[i] * s[i] - s[j] * s[j];
            if (std::abs(gap) >= eps) {
                out.k(i, j) = 1.0 / gap;
                out.k(j, i) = -1.0 / gap;
            } else {
                ++out.degenerate_pairs;
            }
        }
    }
    return out;
}

/// Default clamping threshold for spectral-gap reciprocals, scaled by the
/// square of the dominant singular value. The 1/(s_i^2 - s_j^2) terms amplify
/// rounding error, so everything here stays in 64-bit reals.
inline double default_degeneracy_eps(const std::vector<double>& s) {
    const double top = s.empty() ? 0.0 : s[0];
    return 1e-8 * std::max(1.0, top * top);
}

/// Pulls a gradient with respect to the top-m left singular vectors back to a
/// gradient with respect to the raw feature matrix f (d x p, d >= p):
///
///   grad_f = D Q' - P (P' D)_diag Q' - 2 P S (K' o (D' P S))_sym Q'
///
/// with P the full d x p left factor, S = diag(s), Q the p x p right factor,
/// o the elementwise product, and D = grad_p S_m^{-1} zero-padded from column
/// m+1 on — the truncated columns carry no upstream gradient.
///
/// Near-degenerate singular-value pairs touching the top-m block get their K
/// entries clamped (finite gradient, never NaN); the count is reported through
/// `clamped_pairs_top_m` when given. A singular value below eps inside the
/// top-m block itself is unrecoverable and throws NumericError.
inline Matrix svd_vjp(const Matrix& f, const ThinSvd& svd, const Matrix& grad_p,
                      std::size_t m, double eps, int* clamped_pairs_top_m = nullptr) {
    const std::size_t d = f.rows();
    const std::size_t p = f.cols();
    if (d < p)
        throw ContractViolation("svd_vjp: needs d >= p, got f " + Matrix::shape_str(f));
    if (m < 1 || m > p)
        throw ContractViolation("svd_vjp: m = " + std::to_string(m) + " outside [1, " +
                                std::to_string(p) + "]");
    if (svd.u.rows() != d || svd.u.cols() != p || svd.v.rows() != p || svd.v.cols() != p ||
        svd.s.size() != p)
        throw DimensionError("svd_vjp: svd factors do not match f " + Matrix::shape_str(f));
    if (grad_p.rows() != d || grad_p.cols() != m)
        throw DimensionError("svd_vjp: grad_p " + Matrix::shape_str(grad_p) +
                             " does not match d x m");

    for (std::size_t i = 0; i < m; ++i)
        if (svd.s[i] < eps)
            throw NumericError("svd_vjp: singular value s[" + std::to_string(i) + "] = " +
                               std::to_string(svd.s[i]) + " below threshold " +
                               std::to_string(eps) + "; top-" + std::to_string(m) +
                               " block is rank-deficient");

    KMatrix km = k_matrix(svd.s, eps);
    if (clamped_pairs_top_m) {
        int n = 0;
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = i + 1; j < p; ++j)
                if (i < m && km.k(i, j) == 0.0 &&
                    std::abs(svd.s[i] * svd.s[i] - svd.s[j] * svd.s[j]) < eps)
                    ++n;
        *clamped_pairs_top_m = n;
    }

    Matrix dmat(d, p);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < d; ++i) dmat(i, j) = grad_p(i, j) / svd.s[j];

    const Matrix qt = svd.v.transpose();

    Matrix term1 = dmat * qt;

    Matrix ptd = svd.u.transpose() * dmat;
    Matrix term2 = svd.u * (diag_part(ptd) * qt);

    Matrix ps = svd.u; // P * S: scale columns
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t i = 0; i < d; ++i) ps(i, j) *= svd.s[j];
    Matrix inner = sym_part(hadamard(km.k.transpose(), dmat.transpose() * ps));
    Matrix term3 = ps * (inner * qt);
    term3 *= 2.0;

    term1 -= term2;
    term1 -= term3;
    return term1;
}

} // namespace sdcl
