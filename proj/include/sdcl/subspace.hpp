#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "sdcl/errors.hpp"
#include "sdcl/matrix.hpp"
#include "sdcl/svd.hpp"

namespace sdcl {

/// An m-dimensional linear subspace of R^d, carried by an orthonormal basis.
struct Subspace {
    Matrix basis;             ///< d x m, orthonormal columns
    std::size_t ambient_dim;  ///< d
    std::size_t dim;          ///< m
    /// Set by top_m_subspace when the spectral gap at the truncation index is
    /// (near-)zero, i.e. the returned span is not uniquely determined.
    bool degenerate_truncation = false;

    Subspace(Matrix b, bool degenerate = false)
        : basis(std::move(b)),
          ambient_dim(basis.rows()),
          dim(basis.cols()),
          degenerate_truncation(degenerate) {
        if (dim < 1 || dim > ambient_dim)
            throw ContractViolation("Subspace: need 1 <= dim <= ambient_dim, got basis " +
                                    Matrix::shape_str(basis));
        Matrix gram = basis.transpose() * basis;
        gram -= Matrix::identity(dim);
        if (gram.frobenius_norm() >= 1e-8)
            throw ContractViolation("Subspace: basis columns not orthonormal (deviation " +
                                    std::to_string(gram.frobenius_norm()) + ")");
    }
};

/// Span of the top-m left singular vectors of f (d x p). Requires
/// 1 <= m <= min(d, p). A collapsed spectral gap at index m marks the result
/// degenerate_truncation; callers log and proceed.
inline Subspace top_m_subspace(const Matrix& f, std::size_t m) {
    const std::size_t r = std::min(f.rows(), f.cols());
    if (m < 1 || m > r)
        throw DimensionError("top_m_subspace: m = " + std::to_string(m) +
                             " outside [1, min(d,p)] for f " + Matrix::shape_str(f));
    ThinSvd svd = thin_svd(f);
    const bool degenerate = m < r && (svd.s[m - 1] - svd.s[m]) < 1e-10;
    return Subspace(svd.u.first_cols(m), degenerate);
}

/// Squared projection metric between equal-dimension subspaces:
/// 2m - 2 ||p1' p2||_F^2, which equals ||p1 p1' - p2 p2'||_F^2. Ranges over
/// [0, 2m]; invariant to the basis chosen for either span.
inline double projection_distance_sq(const Subspace& p1, const Subspace& p2) {
    if (p1.ambient_dim != p2.ambient_dim || p1.dim != p2.dim)
        throw ContractViolation("projection_distance_sq: subspaces live in different spaces (" +
                                Matrix::shape_str(p1.basis) + " vs " +
                                Matrix::shape_str(p2.basis) + ")");
    const double m = static_cast<double>(p1.dim);
    const double cross = frobenius_norm_sq(p1.basis.transpose() * p2.basis);
    return std::clamp(2.0 * m - 2.0 * cross, 0.0, 2.0 * m);
}

/// Gradient of projection_distance_sq with respect to p_new's basis, treated
/// as an unconstrained matrix: -4 p_old p_old' p_new. Orthonormality is the
/// SVD's job, not the gradient's.
inline Matrix grad_wrt_basis(const Subspace& p_new, const Subspace& p_old) {
    if (p_new.ambient_dim != p_old.ambient_dim || p_new.dim != p_old.dim)
        throw ContractViolation("grad_wrt_basis: shape mismatch (" +
                                Matrix::shape_str(p_new.basis) + " vs " +
                                Matrix::shape_str(p_old.basis) + ")");
    Matrix g = p_old.basis * (p_old.basis.transpose() * p_new.basis);
    g *= -4.0;
    return g;
}

/// Independent route to the same distance, via principal angles: the cosines
/// c_i are the singular values of p1' p2, and the distance is 2 sum (1 - c_i^2).
/// Exists as a cross-check for projection_distance_sq; tests compare the two.
inline double principal_angle_distance_oracle(const Subspace& p1, const Subspace& p2) {
    if (p1.ambient_dim != p2.ambient_dim || p1.dim != p2.dim)
        throw ContractViolation("principal_angle_distance_oracle: shape mismatch");
    ThinSvd svd = thin_svd(p1.basis.transpose() * p2.basis);
    double acc = 0.0;
    for (double c : svd.s) {
        const double cc = std::clamp(c, 0.0, 1.0);
        acc += 1.0 - cc * cc;
    }
    return 2.0 * acc;
}

} // namespace sdcl
