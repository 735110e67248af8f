#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "sdcl/errors.hpp"
#include "sdcl/rng.hpp"

namespace sdcl {

/// Dense row-major matrix of 64-bit reals. The universal numeric carrier:
/// features, weights, gradients, bases.
class Matrix {
  public:
    Matrix() = default;

    /// rows x cols, zero-filled.
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), d_(rows * cols, 0.0) {
        if (rows == 0 || cols == 0)
            throw DimensionError("Matrix: dimensions must be positive, got " +
                                 std::to_string(rows) + "x" + std::to_string(cols));
    }

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), d_(std::move(data)) {
        if (rows == 0 || cols == 0)
            throw DimensionError("Matrix: dimensions must be positive");
        if (d_.size() != rows * cols)
            throw DimensionError("Matrix: data length " + std::to_string(d_.size()) +
                                 " does not match " + std::to_string(rows) + "x" +
                                 std::to_string(cols));
    }

    /// Constructor for externally sourced data; rejects NaN/Inf entries.
    static Matrix checked(std::size_t rows, std::size_t cols, std::vector<double> data) {
        Matrix m(rows, cols, std::move(data));
        for (double v : m.d_)
            if (!std::isfinite(v))
                throw ContractViolation("Matrix: non-finite entry in external input");
        return m;
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix gaussian(std::size_t rows, std::size_t cols, Rng& rng,
                           double mean = 0.0, double stddev = 1.0) {
        Matrix m(rows, cols);
        for (double& v : m.d_) v = rng.normal(mean, stddev);
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return d_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return d_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return d_[i * cols_ + j]; }

    double* data() { return d_.data(); }
    const double* data() const { return d_.data(); }
    double* row_ptr(std::size_t i) { return d_.data() + i * cols_; }
    const double* row_ptr(std::size_t i) const { return d_.data() + i * cols_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Matrix col(std::size_t j) const {
        Matrix c(rows_, 1);
        for (std::size_t i = 0; i < rows_; ++i) c(i, 0) = (*this)(i, j);
        return c;
    }

    void set_col(std::size_t j, const Matrix& c) {
        for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = c(i, 0);
    }

    /// Columns [0, m) as a new rows x m matrix.
    Matrix first_cols(std::size_t m) const {
        Matrix out(rows_, m);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < m; ++j) out(i, j) = (*this)(i, j);
        return out;
    }

    Matrix& operator+=(const Matrix& o) {
        require_same_shape(o, "+=");
        for (std::size_t i = 0; i < d_.size(); ++i) d_[i] += o.d_[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        require_same_shape(o, "-=");
        for (std::size_t i = 0; i < d_.size(); ++i) d_[i] -= o.d_[i];
        return *this;
    }
    Matrix& operator*=(double s) {
        for (double& v : d_) v *= s;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }

    friend Matrix operator*(const Matrix& a, const Matrix& b) {
        if (a.cols_ != b.rows_)
            throw DimensionError("Matrix multiply: " + shape_str(a) + " * " + shape_str(b));
        Matrix out(a.rows_, b.cols_);
        const std::size_t n = b.cols_;
        for (std::size_t i = 0; i < a.rows_; ++i) {
            double* orow = out.row_ptr(i);
            for (std::size_t k = 0; k < a.cols_; ++k) {
                const double aik = a(i, k);
                if (aik == 0.0) continue;
                const double* brow = b.row_ptr(k);
                for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
            }
        }
        return out;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (double v : d_) s += v * v;
        return std::sqrt(s);
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : d_) m = std::max(m, std::abs(v));
        return m;
    }

    bool all_finite() const {
        return std::all_of(d_.begin(), d_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.d_ == b.d_;
    }

    static std::string shape_str(const Matrix& m) {
        return std::to_string(m.rows_) + "x" + std::to_string(m.cols_);
    }

  private:
    void require_same_shape(const Matrix& o, const char* op) const {
        if (!same_shape(o))
            throw DimensionError(std::string("Matrix ") + op + ": " + shape_str(*this) +
                                 " vs " + shape_str(o));
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> d_;
};

/// (a' + a) / 2. Square input only.
inline Matrix sym_part(const Matrix& a) {
    if (a.rows() != a.cols())
        throw ContractViolation("sym_part: matrix must be square, got " + Matrix::shape_str(a));
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            out(i, j) = 0.5 * (a(i, j) + a(j, i));
    return out;
}

/// Entries (i,i) kept, everything else zeroed. Any shape.
inline Matrix diag_part(const Matrix& a) {
    Matrix out(a.rows(), a.cols());
    const std::size_t n = std::min(a.rows(), a.cols());
    for (std::size_t i = 0; i < n; ++i) out(i, i) = a(i, i);
    return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw DimensionError("hadamard: " + Matrix::shape_str(a) + " vs " + Matrix::shape_str(b));
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) * b(i, j);
    return out;
}

/// Sum_ij a_ij * b_ij, i.e. trace(a' b).
inline double frobenius_inner(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw DimensionError("frobenius_inner: " + Matrix::shape_str(a) + " vs " +
                             Matrix::shape_str(b));
    double s = 0.0;
    const double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < a.size(); ++i) s += pa[i] * pb[i];
    return s;
}

inline double frobenius_norm_sq(const Matrix& a) { return frobenius_inner(a, a); }

} // namespace sdcl
