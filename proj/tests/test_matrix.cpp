#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sdcl/matrix.hpp"

using sdcl::Matrix;

TEST(MatrixOps, MultiplySmallKnown) {
    Matrix a(2, 3, {1, 2, 3, 4, 5, 6});
    Matrix b(3, 2, {7, 8, 9, 10, 11, 12});
    Matrix c = a * b;
    EXPECT_DOUBLE_EQ(c(0, 0), 58);
    EXPECT_DOUBLE_EQ(c(0, 1), 64);
    EXPECT_DOUBLE_EQ(c(1, 0), 139);
    EXPECT_DOUBLE_EQ(c(1, 1), 154);
}

TEST(MatrixOps, MultiplyShapeMismatchThrows) {
    Matrix a(2, 3), b(2, 3);
    EXPECT_THROW(a * b, sdcl::DimensionError);
}

TEST(MatrixOps, CheckedRejectsNonFinite) {
    EXPECT_THROW(Matrix::checked(1, 2, {1.0, std::nan("")}), sdcl::ContractViolation);
    EXPECT_THROW(Matrix::checked(1, 2, {1.0, INFINITY}), sdcl::ContractViolation);
    EXPECT_NO_THROW(Matrix::checked(1, 2, {1.0, -2.0}));
}

TEST(MatrixOps, TransposeRoundTrip) {
    sdcl::Rng rng(7);
    Matrix a = Matrix::gaussian(5, 3, rng);
    EXPECT_EQ(a.transpose().transpose(), a);
}

TEST(SymPart, IdentityFixedPoint) {
    Matrix i3 = Matrix::identity(3);
    EXPECT_EQ(sym_part(i3), i3);
}

TEST(SymPart, KnownValue) {
    Matrix a(2, 2, {0, 2, 0, 0});
    Matrix expect(2, 2, {0, 1, 1, 0});
    EXPECT_EQ(sdcl::sym_part(a), expect);
}

TEST(SymPart, AntisymmetricToZero) {
    Matrix a(3, 3, {0, 2, -1, -2, 0, 5, 1, -5, 0});
    EXPECT_DOUBLE_EQ(sdcl::sym_part(a).frobenius_norm(), 0.0);
}

TEST(SymPart, NonSquareThrows) {
    EXPECT_THROW(sdcl::sym_part(Matrix(2, 3)), sdcl::ContractViolation);
}

TEST(SymPart, Idempotent) {
    sdcl::Rng rng(3);
    Matrix a = Matrix::gaussian(6, 6, rng);
    Matrix s1 = sdcl::sym_part(a);
    EXPECT_EQ(sdcl::sym_part(s1), s1);
}

TEST(DiagPart, KnownValue) {
    Matrix a(2, 2, {1, 2, 3, 4});
    Matrix expect(2, 2, {1, 0, 0, 4});
    EXPECT_EQ(sdcl::diag_part(a), expect);
}

TEST(DiagPart, DiagonalFixedPointAndIdempotent) {
    Matrix d(3, 3);
    d(0, 0) = 5;
    d(1, 1) = -2;
    d(2, 2) = 0.5;
    EXPECT_EQ(sdcl::diag_part(d), d);
    sdcl::Rng rng(4);
    Matrix a = Matrix::gaussian(4, 4, rng);
    EXPECT_EQ(sdcl::diag_part(sdcl::diag_part(a)), sdcl::diag_part(a));
}

TEST(DiagPart, RectangularKeepsShortDiagonal) {
    Matrix a(2, 3, {1, 2, 3, 4, 5, 6});
    Matrix out = sdcl::diag_part(a);
    Matrix expect(2, 3, {1, 0, 0, 0, 5, 0});
    EXPECT_EQ(out, expect);
}

TEST(FrobeniusInner, IdentityPair) {
    Matrix i2 = Matrix::identity(2);
    EXPECT_DOUBLE_EQ(sdcl::frobenius_inner(i2, i2), 2.0);
}

TEST(FrobeniusInner, OrthogonalPair) {
    Matrix a(2, 2, {1, 0, 0, 0});
    Matrix b(2, 2, {0, 0, 0, 1});
    EXPECT_DOUBLE_EQ(sdcl::frobenius_inner(a, b), 0.0);
}

TEST(FrobeniusInner, MatchesTraceOfProduct) {
    sdcl::Rng rng(11);
    Matrix a = Matrix::gaussian(5, 4, rng);
    Matrix b = Matrix::gaussian(5, 4, rng);
    Matrix atb = a.transpose() * b;
    double tr = 0.0;
    for (std::size_t i = 0; i < atb.rows(); ++i) tr += atb(i, i);
    EXPECT_NEAR(sdcl::frobenius_inner(a, b), tr, 1e-12 * std::abs(tr) + 1e-14);
}

TEST(FrobeniusInner, ProductShiftIdentities) {
    // <a, b c> = <a c', b> = <b' a, c> for conformable triples.
    sdcl::Rng rng(13);
    for (int trial = 0; trial < 5; ++trial) {
        Matrix a = Matrix::gaussian(4, 6, rng);
        Matrix b = Matrix::gaussian(4, 5, rng);
        Matrix c = Matrix::gaussian(5, 6, rng);
        const double lhs = sdcl::frobenius_inner(a, b * c);
        const double m1 = sdcl::frobenius_inner(a * c.transpose(), b);
        const double m2 = sdcl::frobenius_inner(b.transpose() * a, c);
        const double scale = std::max(1.0, std::abs(lhs));
        EXPECT_NEAR(lhs, m1, 1e-12 * scale);
        EXPECT_NEAR(lhs, m2, 1e-12 * scale);
    }
}

TEST(FrobeniusInner, NormSqConsistent) {
    sdcl::Rng rng(17);
    Matrix a = Matrix::gaussian(3, 7, rng);
    const double n2 = sdcl::frobenius_norm_sq(a);
    EXPECT_NEAR(std::sqrt(n2), a.frobenius_norm(), 1e-12);
}
