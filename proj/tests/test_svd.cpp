#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sdcl/svd.hpp"

using sdcl::Matrix;
using sdcl::ThinSvd;

namespace {

void expect_valid_svd(const Matrix& f, const ThinSvd& svd) {
    const std::size_t r = std::min(f.rows(), f.cols());
    ASSERT_EQ(svd.s.size(), r);
    ASSERT_EQ(svd.u.rows(), f.rows());
    ASSERT_EQ(svd.u.cols(), r);
    ASSERT_EQ(svd.v.rows(), f.cols());
    ASSERT_EQ(svd.v.cols(), r);
    for (std::size_t i = 0; i + 1 < r; ++i) EXPECT_GE(svd.s[i], svd.s[i + 1]);
    EXPECT_GE(svd.s.back(), 0.0);

    Matrix ui = svd.u.transpose() * svd.u;
    ui -= Matrix::identity(r);
    EXPECT_LT(ui.frobenius_norm(), 1e-10);
    Matrix vi = svd.v.transpose() * svd.v;
    vi -= Matrix::identity(r);
    EXPECT_LT(vi.frobenius_norm(), 1e-10);

    Matrix recon = sdcl::reconstruct(svd);
    recon -= f;
    EXPECT_LT(recon.frobenius_norm(), 1e-8 * std::max(1.0, f.frobenius_norm()));
}

} // namespace

TEST(ThinSvdTest, Identity3x3) {
    Matrix f = Matrix::identity(3);
    ThinSvd svd = sdcl::thin_svd(f);
    for (double s : svd.s) EXPECT_DOUBLE_EQ(s, 1.0);
    expect_valid_svd(f, svd);
    // With the canonical sign fix, u and v come back as the identity exactly.
    EXPECT_EQ(svd.u, f);
    EXPECT_EQ(svd.v, f);
}

TEST(ThinSvdTest, Diagonal2x2) {
    Matrix f(2, 2);
    f(0, 0) = 2.0;
    f(1, 1) = 1.0;
    ThinSvd svd = sdcl::thin_svd(f);
    EXPECT_DOUBLE_EQ(svd.s[0], 2.0);
    EXPECT_DOUBLE_EQ(svd.s[1], 1.0);
    expect_valid_svd(f, svd);
    EXPECT_EQ(svd.u, Matrix::identity(2));
    EXPECT_EQ(svd.v, Matrix::identity(2));
}

TEST(ThinSvdTest, RandomTallReconstruction) {
    sdcl::Rng rng(101);
    Matrix f = Matrix::gaussian(20, 8, rng);
    expect_valid_svd(f, sdcl::thin_svd(f));
}

TEST(ThinSvdTest, RandomWideReconstruction) {
    sdcl::Rng rng(102);
    Matrix f = Matrix::gaussian(8, 20, rng);
    expect_valid_svd(f, sdcl::thin_svd(f));
}

TEST(ThinSvdTest, KnownSpectrumRecovered) {
    sdcl::Rng rng(103);
    std::vector<double> s_true = oracle::gapped_spectrum(6, 0.3, rng);
    Matrix f = oracle::matrix_with_spectrum(15, 6, s_true, rng);
    ThinSvd svd = sdcl::thin_svd(f);
    for (std::size_t i = 0; i < s_true.size(); ++i)
        EXPECT_NEAR(svd.s[i], s_true[i], 1e-10 * std::max(1.0, s_true[0]));
    expect_valid_svd(f, svd);
}

TEST(ThinSvdTest, Deterministic) {
    sdcl::Rng rng(104);
    Matrix f = Matrix::gaussian(12, 5, rng);
    ThinSvd a = sdcl::thin_svd(f);
    ThinSvd b = sdcl::thin_svd(f);
    EXPECT_EQ(a.u, b.u);
    EXPECT_EQ(a.v, b.v);
    EXPECT_EQ(a.s, b.s);
}

TEST(ThinSvdTest, ScaleByPowerOfTwoIsExact) {
    sdcl::Rng rng(105);
    Matrix f = Matrix::gaussian(10, 4, rng);
    ThinSvd base = sdcl::thin_svd(f);
    ThinSvd scaled = sdcl::thin_svd(f * 2.0);
    ASSERT_EQ(base.s.size(), scaled.s.size());
    for (std::size_t i = 0; i < base.s.size(); ++i)
        EXPECT_DOUBLE_EQ(scaled.s[i], 2.0 * base.s[i]);
    EXPECT_EQ(scaled.u, base.u);
    EXPECT_EQ(scaled.v, base.v);
}

TEST(ThinSvdTest, ScaleByGeneralPositiveFactor) {
    sdcl::Rng rng(106);
    std::vector<double> spec = oracle::gapped_spectrum(5, 0.3, rng);
    Matrix f = oracle::matrix_with_spectrum(12, 5, spec, rng);
    ThinSvd base = sdcl::thin_svd(f);
    ThinSvd scaled = sdcl::thin_svd(f * 3.0);
    for (std::size_t i = 0; i < base.s.size(); ++i)
        EXPECT_NEAR(scaled.s[i], 3.0 * base.s[i], 1e-12 * std::max(1.0, base.s[0]));
    Matrix du = scaled.u - base.u;
    Matrix dv = scaled.v - base.v;
    EXPECT_LT(du.max_abs(), 1e-9);
    EXPECT_LT(dv.max_abs(), 1e-9);
}

TEST(ThinSvdTest, RankDeficientCompletesBasis) {
    // Rank-1 outer product: two singular values collapse to zero, and the
    // left factor still has to come back orthonormal.
    Matrix x(6, 1, {1, 2, 3, 4, 5, 6});
    Matrix y(3, 1, {1, -1, 2});
    Matrix f = x * y.transpose();
    ThinSvd svd = sdcl::thin_svd(f);
    EXPECT_GT(svd.s[0], 0.0);
    EXPECT_NEAR(svd.s[1], 0.0, 1e-10 * svd.s[0]);
    EXPECT_NEAR(svd.s[2], 0.0, 1e-10 * svd.s[0]);
    expect_valid_svd(f, svd);
}

TEST(ThinSvdTest, ZeroMatrix) {
    Matrix f(5, 3);
    ThinSvd svd = sdcl::thin_svd(f);
    for (double s : svd.s) EXPECT_DOUBLE_EQ(s, 0.0);
    expect_valid_svd(f, svd);
}

TEST(ThinSvdTest, NonFiniteInputThrows) {
    Matrix f(2, 2);
    f(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(sdcl::thin_svd(f), sdcl::ContractViolation);
}

TEST(ThinSvdTest, LeftVectorSignsCanonical) {
    sdcl::Rng rng(107);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix f = Matrix::gaussian(9, 4, rng);
        ThinSvd svd = sdcl::thin_svd(f);
        for (std::size_t j = 0; j < svd.s.size(); ++j) {
            double best = 0.0;
            for (std::size_t i = 0; i < svd.u.rows(); ++i)
                if (std::abs(svd.u(i, j)) > std::abs(best)) best = svd.u(i, j);
            EXPECT_GE(best, 0.0);
        }
    }
}
