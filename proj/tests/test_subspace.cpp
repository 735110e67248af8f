#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sdcl/subspace.hpp"

using sdcl::Matrix;
using sdcl::Subspace;

TEST(TopMSubspace, OrthonormalInputSpansItself) {
    sdcl::Rng rng(201);
    Matrix f = oracle::random_orthonormal(10, 4, rng);
    Subspace p = sdcl::top_m_subspace(f, 4);
    Matrix residual = p.basis * (p.basis.transpose() * f) - f;
    EXPECT_LT(residual.frobenius_norm(), 1e-8);
    EXPECT_EQ(p.ambient_dim, 10u);
    EXPECT_EQ(p.dim, 4u);
}

TEST(TopMSubspace, DominantAxis) {
    Matrix f(3, 2);
    f(0, 0) = 3.0; // 3 e1
    f(1, 1) = 1.0; // 1 e2
    Subspace p = sdcl::top_m_subspace(f, 1);
    EXPECT_NEAR(std::abs(p.basis(0, 0)), 1.0, 1e-12);
    EXPECT_NEAR(p.basis(1, 0), 0.0, 1e-12);
    EXPECT_NEAR(p.basis(2, 0), 0.0, 1e-12);
}

TEST(TopMSubspace, MatchesIndependentEigendecomposition) {
    sdcl::Rng rng(202);
    std::vector<double> spec = oracle::gapped_spectrum(8, 0.3, rng);
    Matrix f = oracle::matrix_with_spectrum(20, 8, spec, rng);
    Subspace p = sdcl::top_m_subspace(f, 4);

    oracle::EigResult eig = oracle::eigh_sym(f * f.transpose());
    Matrix expect = oracle::canonical_signs(eig.evecs.first_cols(4));
    Matrix got = oracle::canonical_signs(p.basis);
    Matrix diff = got - expect;
    EXPECT_LT(diff.max_abs(), 1e-8);
}

TEST(TopMSubspace, RejectsOversizedM) {
    Matrix f(5, 3);
    EXPECT_THROW(sdcl::top_m_subspace(f, 4), sdcl::DimensionError);
    EXPECT_THROW(sdcl::top_m_subspace(f, 0), sdcl::DimensionError);
}

TEST(TopMSubspace, FlagsDegenerateTruncation) {
    sdcl::Rng rng(203);
    // Repeated singular value straddling the cut at m = 2.
    Matrix f = oracle::matrix_with_spectrum(10, 4, {3.0, 2.0, 2.0, 1.0}, rng);
    EXPECT_TRUE(sdcl::top_m_subspace(f, 2).degenerate_truncation);
    EXPECT_FALSE(sdcl::top_m_subspace(f, 3).degenerate_truncation);

    Matrix g = oracle::matrix_with_spectrum(10, 4, {3.0, 2.0, 1.0, 0.4}, rng);
    EXPECT_FALSE(sdcl::top_m_subspace(g, 2).degenerate_truncation);
}

TEST(SubspaceType, RejectsNonOrthonormalBasis) {
    Matrix b(4, 2);
    b(0, 0) = 1.0;
    b(1, 1) = 2.0; // column norm 2
    EXPECT_THROW(Subspace{b}, sdcl::ContractViolation);
}

TEST(ProjectionDistance, IdenticalIsZero) {
    sdcl::Rng rng(204);
    Subspace p{oracle::random_orthonormal(8, 3, rng)};
    EXPECT_NEAR(sdcl::projection_distance_sq(p, p), 0.0, 1e-12);
}

TEST(ProjectionDistance, RotatedPlaneIsSamePlane) {
    // XY plane in R^3 against its own in-plane rotation by pi/4.
    Matrix b1(3, 2, {1, 0, 0, 1, 0, 0});
    const double c = std::cos(M_PI / 4), s = std::sin(M_PI / 4);
    Matrix b2(3, 2, {c, -s, s, c, 0, 0});
    EXPECT_NEAR(sdcl::projection_distance_sq(Subspace{b1}, Subspace{b2}), 0.0, 1e-12);
}

TEST(ProjectionDistance, FullyOrthogonalHitsUpperBound) {
    Matrix b1(4, 2, {1, 0, 0, 1, 0, 0, 0, 0});
    Matrix b2(4, 2, {0, 0, 0, 0, 1, 0, 0, 1});
    EXPECT_DOUBLE_EQ(sdcl::projection_distance_sq(Subspace{b1}, Subspace{b2}), 4.0);
}

TEST(ProjectionDistance, MismatchThrows) {
    sdcl::Rng rng(205);
    Subspace a{oracle::random_orthonormal(8, 3, rng)};
    Subspace b{oracle::random_orthonormal(8, 2, rng)};
    Subspace c{oracle::random_orthonormal(9, 3, rng)};
    EXPECT_THROW(sdcl::projection_distance_sq(a, b), sdcl::ContractViolation);
    EXPECT_THROW(sdcl::projection_distance_sq(a, c), sdcl::ContractViolation);
}

TEST(ProjectionDistance, EqualsProjectorFrobeniusForm) {
    sdcl::Rng rng(206);
    for (int trial = 0; trial < 10; ++trial) {
        Subspace p1{oracle::random_orthonormal(12, 3, rng)};
        Subspace p2{oracle::random_orthonormal(12, 3, rng)};
        Matrix proj1 = p1.basis * p1.basis.transpose();
        Matrix proj2 = p2.basis * p2.basis.transpose();
        const double direct = sdcl::frobenius_norm_sq(proj1 - proj2);
        EXPECT_NEAR(sdcl::projection_distance_sq(p1, p2), direct, 1e-10);
    }
}

TEST(ProjectionDistance, BasisRotationInvariant) {
    sdcl::Rng rng(207);
    for (int trial = 0; trial < 10; ++trial) {
        Subspace p1{oracle::random_orthonormal(10, 4, rng)};
        Subspace p2{oracle::random_orthonormal(10, 4, rng)};
        Matrix r1 = oracle::random_orthonormal(4, 4, rng);
        Matrix r2 = oracle::random_orthonormal(4, 4, rng);
        const double base = sdcl::projection_distance_sq(p1, p2);
        const double rotated = sdcl::projection_distance_sq(Subspace{p1.basis * r1},
                                                            Subspace{p2.basis * r2});
        EXPECT_NEAR(base, rotated, 1e-10);
    }
}

TEST(ProjectionDistance, SymmetricAndInRange) {
    sdcl::Rng rng(208);
    const std::size_t dims[3][2] = {{8, 2}, {20, 4}, {64, 5}};
    for (const auto& dm : dims) {
        for (int trial = 0; trial < 200; ++trial) {
            Subspace p1{oracle::random_orthonormal(dm[0], dm[1], rng)};
            Subspace p2{oracle::random_orthonormal(dm[0], dm[1], rng)};
            const double d12 = sdcl::projection_distance_sq(p1, p2);
            const double d21 = sdcl::projection_distance_sq(p2, p1);
            EXPECT_NEAR(d12, d21, 1e-12);
            EXPECT_GE(d12, 0.0);
            EXPECT_LE(d12, 2.0 * static_cast<double>(dm[1]));
        }
    }
}

TEST(ProjectionDistance, AgreesWithPrincipalAngles) {
    sdcl::Rng rng(209);
    for (int trial = 0; trial < 50; ++trial) {
        Subspace p1{oracle::random_orthonormal(16, 4, rng)};
        Subspace p2{oracle::random_orthonormal(16, 4, rng)};
        const double d = sdcl::projection_distance_sq(p1, p2);
        EXPECT_NEAR(d, sdcl::principal_angle_distance_oracle(p1, p2), 1e-8);
        EXPECT_NEAR(d, oracle::principal_angle_distance(p1.basis, p2.basis), 1e-8);
    }
}

TEST(PrincipalAngleOracle, EndpointValues) {
    sdcl::Rng rng(210);
    Subspace p{oracle::random_orthonormal(6, 2, rng)};
    EXPECT_NEAR(sdcl::principal_angle_distance_oracle(p, p), 0.0, 1e-10);

    Matrix b1(4, 2, {1, 0, 0, 1, 0, 0, 0, 0});
    Matrix b2(4, 2, {0, 0, 0, 0, 1, 0, 0, 1});
    EXPECT_DOUBLE_EQ(sdcl::principal_angle_distance_oracle(Subspace{b1}, Subspace{b2}), 4.0);
}

TEST(TopMSubspace, ScaleInvariantSpan) {
    sdcl::Rng rng(211);
    Matrix f = Matrix::gaussian(14, 6, rng);
    Subspace a = sdcl::top_m_subspace(f, 3);
    Subspace b = sdcl::top_m_subspace(f * 2.5, 3);
    EXPECT_LT(sdcl::projection_distance_sq(a, b), 1e-8);
}

TEST(TopMSubspace, ColumnPermutationInvariantSpan) {
    sdcl::Rng rng(212);
    std::vector<double> spec = oracle::gapped_spectrum(6, 0.3, rng);
    Matrix f = oracle::matrix_with_spectrum(14, 6, spec, rng);
    Matrix g(14, 6);
    const std::size_t perm[6] = {4, 2, 0, 5, 1, 3};
    for (std::size_t j = 0; j < 6; ++j)
        for (std::size_t i = 0; i < 14; ++i) g(i, j) = f(i, perm[j]);
    Subspace a = sdcl::top_m_subspace(f, 3);
    Subspace b = sdcl::top_m_subspace(g, 3);
    EXPECT_LT(sdcl::projection_distance_sq(a, b), 1e-8);
}

TEST(GradWrtBasis, SelfGradientIsMinusFourP) {
    sdcl::Rng rng(213);
    Subspace p{oracle::random_orthonormal(9, 3, rng)};
    Matrix g = sdcl::grad_wrt_basis(p, p);
    Matrix expect = p.basis * (-4.0);
    Matrix diff = g - expect;
    EXPECT_LT(diff.max_abs(), 1e-12);
}

TEST(GradWrtBasis, OrthogonalSubspacesGiveZero) {
    Matrix b1(4, 2, {1, 0, 0, 1, 0, 0, 0, 0});
    Matrix b2(4, 2, {0, 0, 0, 0, 1, 0, 0, 1});
    Matrix g = sdcl::grad_wrt_basis(Subspace{b1}, Subspace{b2});
    EXPECT_DOUBLE_EQ(g.frobenius_norm(), 0.0);
}

TEST(GradWrtBasis, MatchesFiniteDifferences) {
    sdcl::Rng rng(214);
    for (int trial = 0; trial < 5; ++trial) {
        Subspace pn{oracle::random_orthonormal(10, 3, rng)};
        Subspace po{oracle::random_orthonormal(10, 3, rng)};
        Matrix analytic = sdcl::grad_wrt_basis(pn, po);
        // The distance formula extended off the manifold, which is exactly the
        // function the unconstrained gradient differentiates.
        auto loss = [&](const Matrix& b) {
            return 2.0 * 3.0 - 2.0 * sdcl::frobenius_norm_sq(b.transpose() * po.basis);
        };
        Matrix fd = oracle::fd_grad(loss, pn.basis, 1e-5);
        EXPECT_LT(oracle::max_rel_err(analytic, fd), 1e-6);
    }
}
