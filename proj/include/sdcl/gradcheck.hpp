#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sdcl/matrix.hpp"
#include "sdcl/rng.hpp"
#include "sdcl/subspace.hpp"
#include "sdcl/svd_backprop.hpp"

namespace sdcl {

/// Central finite differences of a scalar function of a matrix.
inline Matrix finite_difference_grad(const std::function<double(const Matrix&)>& fn,
                                     const Matrix& x, double h) {
    Matrix g(x.rows(), x.cols());
    Matrix work = x;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double orig = work(i, j);
            work(i, j) = orig + h;
            const double fp = fn(work);
            work(i, j) = orig - h;
            const double fm = fn(work);
            work(i, j) = orig;
            g(i, j) = (fp - fm) / (2.0 * h);
        }
    return g;
}

/// Max entrywise relative error against a reference gradient, with the
/// denominator floored at a fraction of the reference's overall magnitude so
/// near-zero entries are judged absolutely.
inline double max_relative_error(const Matrix& analytic, const Matrix& reference) {
    const double floor = 1e-3 * std::max(1.0, reference.max_abs());
    double worst = 0.0;
    for (std::size_t i = 0; i < reference.rows(); ++i)
        for (std::size_t j = 0; j < reference.cols(); ++j) {
            const double denom = std::max(std::abs(reference(i, j)), floor);
            worst = std::max(worst, std::abs(analytic(i, j) - reference(i, j)) / denom);
        }
    return worst;
}

/// End-to-end loss used by the gradient check: distance between the top-m
/// subspace of f and a fixed reference subspace.
inline double subspace_loss(const Matrix& f, std::size_t m, const Subspace& ref) {
    return projection_distance_sq(top_m_subspace(f, m), ref);
}

/// Analytic gradient of subspace_loss with respect to f, chaining the basis
/// gradient through the SVD vector-Jacobian product.
inline Matrix subspace_loss_grad(const Matrix& f, std::size_t m, const Subspace& ref,
                                 int* clamped_pairs = nullptr) {
    ThinSvd svd = thin_svd(f);
    Subspace p_new{svd.u.first_cols(m)};
    Matrix gp = grad_wrt_basis(p_new, ref);
    return svd_vjp(f, svd, gp, m, default_degeneracy_eps(svd.s), clamped_pairs);
}

struct GradCheckInstance {
    double rel_err = 0.0;
    bool skipped = false; ///< spectrum too degenerate near the cut to test
};

/// Checks one feature matrix: analytic chained gradient vs central finite
/// differences. Instances whose spectral gap at the truncation boundary is
/// below `gap_threshold` are skipped (the subspace itself is ill-defined
/// there, so finite differences are meaningless).
inline GradCheckInstance gradcheck_instance(const Matrix& f, std::size_t m,
                                            const Subspace& ref, double h = 1e-5,
                                            double gap_threshold = 1e-3) {
    GradCheckInstance out;
    ThinSvd svd = thin_svd(f);
    for (std::size_t i = 0; i < m && i + 1 < svd.s.size(); ++i)
        if (svd.s[i] - svd.s[i + 1] < gap_threshold) {
            out.skipped = true;
            return out;
        }
    Matrix analytic = subspace_loss_grad(f, m, ref);
    Matrix fd = finite_difference_grad(
        [&](const Matrix& x) { return subspace_loss(x, m, ref); }, f, h);
    out.rel_err = max_relative_error(analytic, fd);
    return out;
}

struct GradCheckSizeReport {
    std::size_t d = 0, p = 0, m = 0;
    int checked = 0;
    int skipped = 0;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckSizeReport> sizes;
    double tolerance = 1e-5;
    bool passed() const {
        for (const auto& s : sizes)
            if (s.checked == 0 || s.max_rel_err >= tolerance) return false;
        return true;
    }
};

/// Random feature matrix with well-separated singular values: orthonormal
/// factors from the SVD of a Gaussian draw, spectrum re-stamped with
/// consecutive gaps of at least `min_gap`.
inline Matrix gapped_random_matrix(std::size_t d, std::size_t p, double min_gap, Rng& rng) {
    ThinSvd base = thin_svd(Matrix::gaussian(d, p, rng));
    std::vector<double> spec(p);
    double cur = 0.5 + rng.uniform();
    for (std::size_t i = p; i-- > 0;) {
        spec[i] = cur;
        cur += min_gap + 0.5 * rng.uniform();
    }
    Matrix us = base.u;
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t i = 0; i < d; ++i) us(i, j) *= spec[j];
    return us * base.v.transpose();
}

/// The full harness: per size, many seeded random instances with enforced
/// spectral gaps; reports the worst relative error seen.
inline GradCheckReport run_gradcheck(std::uint64_t seed, int instances_per_size = 100,
                                     double min_gap = 0.15, double h = 1e-5,
                                     double tolerance = 1e-5) {
    static constexpr std::size_t kSizes[3][3] = {{10, 4, 2}, {20, 8, 4}, {32, 16, 5}};
    GradCheckReport report;
    report.tolerance = tolerance;
    for (const auto& dpm : kSizes) {
        GradCheckSizeReport sr;
        sr.d = dpm[0];
        sr.p = dpm[1];
        sr.m = dpm[2];
        for (int i = 0; i < instances_per_size; ++i) {
            Rng rng(seed, (sr.d << 20) + static_cast<std::uint64_t>(i));
            Matrix f = gapped_random_matrix(sr.d, sr.p, min_gap, rng);
            Matrix refb = Matrix::gaussian(sr.d, sr.m, rng);
            ThinSvd refsvd = thin_svd(refb);
            Subspace ref{refsvd.u.first_cols(sr.m)};
            GradCheckInstance inst = gradcheck_instance(f, sr.m, ref, h);
            if (inst.skipped)
                ++sr.skipped;
            else {
                ++sr.checked;
                sr.max_rel_err = std::max(sr.max_rel_err, inst.rel_err);
            }
        }
        report.sizes.push_back(sr);
    }
    return report;
}

} // namespace sdcl
