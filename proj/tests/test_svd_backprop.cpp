#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sdcl/subspace.hpp"
#include "sdcl/svd_backprop.hpp"

using sdcl::Matrix;
using sdcl::Subspace;
using sdcl::ThinSvd;

namespace {

// Loss of the full pipeline: distance between the top-m subspace of F and a
// fixed reference subspace.
double chained_loss(const Matrix& f, std::size_t m, const Subspace& ref) {
    return sdcl::projection_distance_sq(sdcl::top_m_subspace(f, m), ref);
}

Matrix chained_grad(const Matrix& f, std::size_t m, const Subspace& ref,
                    int* clamped = nullptr) {
    ThinSvd svd = sdcl::thin_svd(f);
    Subspace p_new{svd.u.first_cols(m)};
    Matrix gp = sdcl::grad_wrt_basis(p_new, ref);
    return sdcl::svd_vjp(f, svd, gp, m, sdcl::default_degeneracy_eps(svd.s), clamped);
}

} // namespace

TEST(KMatrixTest, TwoValues) {
    sdcl::KMatrix km = sdcl::k_matrix({2.0, 1.0}, 1e-10);
    EXPECT_DOUBLE_EQ(km.k(0, 1), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(km.k(1, 0), -1.0 / 3.0);
    EXPECT_DOUBLE_EQ(km.k(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(km.k(1, 1), 0.0);
    EXPECT_EQ(km.degenerate_pairs, 0);
}

TEST(KMatrixTest, DegeneratePairClamped) {
    sdcl::KMatrix km = sdcl::k_matrix({1.0, 1.0}, 1e-10);
    EXPECT_DOUBLE_EQ(km.k.frobenius_norm(), 0.0);
    EXPECT_EQ(km.degenerate_pairs, 1);
}

TEST(KMatrixTest, ThreeValuesAntisymmetric) {
    sdcl::KMatrix km = sdcl::k_matrix({3.0, 2.0, 1.0}, 1e-10);
    EXPECT_DOUBLE_EQ(km.k(0, 1), 1.0 / 5.0);
    EXPECT_DOUBLE_EQ(km.k(0, 2), 1.0 / 8.0);
    EXPECT_DOUBLE_EQ(km.k(1, 2), 1.0 / 3.0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            EXPECT_DOUBLE_EQ(km.k(i, j), -km.k(j, i));
}

TEST(SvdVjp, ZeroUpstreamGradient) {
    sdcl::Rng rng(301);
    Matrix f = Matrix::gaussian(12, 5, rng);
    ThinSvd svd = sdcl::thin_svd(f);
    Matrix zero(12, 3);
    Matrix g = sdcl::svd_vjp(f, svd, zero, 3, sdcl::default_degeneracy_eps(svd.s));
    EXPECT_DOUBLE_EQ(g.frobenius_norm(), 0.0);
}

TEST(SvdVjp, LinearInUpstreamGradient) {
    sdcl::Rng rng(302);
    std::vector<double> spec = oracle::gapped_spectrum(5, 0.2, rng);
    Matrix f = oracle::matrix_with_spectrum(12, 5, spec, rng);
    ThinSvd svd = sdcl::thin_svd(f);
    const double eps = sdcl::default_degeneracy_eps(svd.s);
    Matrix g1 = Matrix::gaussian(12, 3, rng);
    Matrix g2 = Matrix::gaussian(12, 3, rng);
    Matrix combo = 0.7 * g1 + (-1.3) * g2;
    Matrix lhs = sdcl::svd_vjp(f, svd, combo, 3, eps);
    Matrix rhs = 0.7 * sdcl::svd_vjp(f, svd, g1, 3, eps) +
                 (-1.3) * sdcl::svd_vjp(f, svd, g2, 3, eps);
    Matrix diff = lhs - rhs;
    EXPECT_LT(diff.max_abs(), 1e-10);
}

TEST(SvdVjp, ChainedGradientMatchesFiniteDifferences) {
    const std::size_t sizes[3][3] = {{10, 4, 2}, {20, 8, 4}, {32, 16, 5}};
    for (const auto& dpm : sizes) {
        const std::size_t d = dpm[0], p = dpm[1], m = dpm[2];
        for (int seed = 0; seed < 10; ++seed) {
            sdcl::Rng rng(1000 + seed * 3 + static_cast<int>(d));
            std::vector<double> spec = oracle::gapped_spectrum(p, 0.15, rng);
            Matrix f = oracle::matrix_with_spectrum(d, p, spec, rng);
            Subspace ref{oracle::random_orthonormal(d, m, rng)};
            Matrix analytic = chained_grad(f, m, ref);
            Matrix fd = oracle::fd_grad(
                [&](const Matrix& x) { return chained_loss(x, m, ref); }, f, 1e-5);
            EXPECT_LT(oracle::max_rel_err(analytic, fd), 1e-5)
                << "d=" << d << " p=" << p << " m=" << m << " seed=" << seed;
        }
    }
}

TEST(SvdVjp, TangentUpstreamGradient) {
    // Feature matrix with orthogonal columns of distinct norms, upstream
    // gradient lying in the span of the basis itself (P times symmetric).
    sdcl::Rng rng(303);
    const std::size_t d = 14, p = 5, m = 3;
    std::vector<double> spec = oracle::gapped_spectrum(p, 0.25, rng);
    Matrix u = oracle::random_orthonormal(d, p, rng);
    Matrix f = u;
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t i = 0; i < d; ++i) f(i, j) *= spec[j];

    ThinSvd svd = sdcl::thin_svd(f);
    Matrix sym(m, m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i; j < m; ++j) sym(i, j) = sym(j, i) = rng.normal();
    Matrix grad_p = svd.u.first_cols(m) * sym;

    Matrix analytic =
        sdcl::svd_vjp(f, svd, grad_p, m, sdcl::default_degeneracy_eps(svd.s));
    Matrix fd = oracle::fd_grad(
        [&](const Matrix& x) {
            ThinSvd s2 = sdcl::thin_svd(x);
            return sdcl::frobenius_inner(grad_p, s2.u.first_cols(m));
        },
        f, 1e-5);
    EXPECT_LT(oracle::max_rel_err(analytic, fd), 1e-5);
}

TEST(SvdVjp, NoGradientAlongSpanPreservingDirections) {
    sdcl::Rng rng(304);
    const std::size_t d = 16, p = 6, m = 3;
    std::vector<double> spec = oracle::gapped_spectrum(p, 0.2, rng);
    Matrix f = oracle::matrix_with_spectrum(d, p, spec, rng);
    Subspace ref{oracle::random_orthonormal(d, m, rng)};
    Matrix grad_f = chained_grad(f, m, ref);

    ThinSvd svd = sdcl::thin_svd(f);
    Matrix b(m, m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) {
            b(i, j) = rng.normal();
            b(j, i) = -b(i, j);
        }
    Matrix vm = svd.v.first_cols(m);
    Matrix a = vm * (b * vm.transpose()); // antisymmetric, top-m support
    Matrix df = f * a;
    df *= 1.0 / std::max(df.frobenius_norm(), 1e-300);
    const double directional = sdcl::frobenius_inner(grad_f, df);
    EXPECT_LT(std::abs(directional), 1e-6 * std::max(1.0, grad_f.frobenius_norm()));
}

TEST(SvdVjp, DegenerateTopBlockClampsFinite) {
    sdcl::Rng rng(305);
    Matrix f = oracle::matrix_with_spectrum(10, 4, {2.0, 2.0, 1.0, 0.5}, rng);
    ThinSvd svd = sdcl::thin_svd(f);
    Matrix grad_p = Matrix::gaussian(10, 2, rng);
    int clamped = 0;
    Matrix g = sdcl::svd_vjp(f, svd, grad_p, 2, sdcl::default_degeneracy_eps(svd.s),
                             &clamped);
    EXPECT_TRUE(g.all_finite());
    EXPECT_GE(clamped, 1);
}

TEST(SvdVjp, RankCollapseInTopBlockThrows) {
    Matrix x(6, 1, {1, 2, 3, 4, 5, 6});
    Matrix y(3, 1, {1, -1, 2});
    Matrix f = x * y.transpose();
    ThinSvd svd = sdcl::thin_svd(f);
    Matrix grad_p(6, 2);
    grad_p(0, 0) = 1.0;
    EXPECT_THROW(
        sdcl::svd_vjp(f, svd, grad_p, 2, sdcl::default_degeneracy_eps(svd.s)),
        sdcl::NumericError);
}

TEST(SvdVjp, WideInputRejected) {
    sdcl::Rng rng(306);
    Matrix f = Matrix::gaussian(3, 5, rng);
    ThinSvd svd = sdcl::thin_svd(f);
    Matrix grad_p(3, 2);
    EXPECT_THROW(sdcl::svd_vjp(f, svd, grad_p, 2, 1e-8), sdcl::ContractViolation);
}

TEST(SvdVjp, FormulaMutationIsDetectable) {
    // Flip the sign of the spectral-coupling term and confirm the
    // finite-difference check rejects it — i.e. the gradient test has teeth.
    sdcl::Rng rng(307);
    const std::size_t d = 12, p = 5, m = 3;
    std::vector<double> spec = oracle::gapped_spectrum(p, 0.2, rng);
    Matrix f = oracle::matrix_with_spectrum(d, p, spec, rng);
    Subspace ref{oracle::random_orthonormal(d, m, rng)};

    ThinSvd svd = sdcl::thin_svd(f);
    Subspace p_new{svd.u.first_cols(m)};
    Matrix gp = sdcl::grad_wrt_basis(p_new, ref);
    const double eps = sdcl::default_degeneracy_eps(svd.s);

    Matrix dmat(d, p);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < d; ++i) dmat(i, j) = gp(i, j) / svd.s[j];
    Matrix qt = svd.v.transpose();
    Matrix ps = svd.u;
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t i = 0; i < d; ++i) ps(i, j) *= svd.s[j];
    sdcl::KMatrix km = sdcl::k_matrix(svd.s, eps);
    Matrix inner = sdcl::sym_part(sdcl::hadamard(km.k.transpose(), dmat.transpose() * ps));
    Matrix mutated = dmat * qt - svd.u * (sdcl::diag_part(svd.u.transpose() * dmat) * qt) +
                     2.0 * (ps * (inner * qt));

    Matrix fd = oracle::fd_grad(
        [&](const Matrix& x) { return chained_loss(x, m, ref); }, f, 1e-5);
    EXPECT_GT(oracle::max_rel_err(mutated, fd), 1e-3);
    EXPECT_LT(oracle::max_rel_err(chained_grad(f, m, ref), fd), 1e-5);
}
