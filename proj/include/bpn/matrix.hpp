#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bpn/error.hpp"
#include "bpn/rng.hpp"

namespace bpn {

/// Dense row-major matrix of 64-bit reals; the universal value carrier.
/// Rows index the batch, columns index features.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                             " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    /// Fill with zero-mean Gaussians of the given standard deviation.
    void fill_gaussian(Rng& rng, double stddev) {
        for (double& x : data_) x = rng.next_gaussian() * stddev;
    }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    /// Reinterpret as a new shape with the same element count (row-major order
    /// preserved). Used to move between K x H memory units and their
    /// flattened K*H vector form.
    Matrix reshaped(std::size_t rows, std::size_t cols) const {
        if (rows * cols != data_.size())
            throw ShapeError("reshape: " + shape_str() + " has " +
                             std::to_string(data_.size()) + " entries, want " +
                             std::to_string(rows) + "x" + std::to_string(cols));
        Matrix out;
        out.rows_ = rows;
        out.cols_ = cols;
        out.data_ = data_;
        return out;
    }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// out = a * b. The k-major loop keeps the inner traversal contiguous in both
/// b and out, which vectorizes without reassociating any per-element sum, so
/// results are bit-identical across optimization levels.
inline void matmul_into(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + a.shape_str() + " * " + b.shape_str());
    if (out.rows() != a.rows() || out.cols() != b.cols()) out = Matrix(a.rows(), b.cols());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    for (std::size_t i = 0; i < m; ++i) {
        double* __restrict yo = out.row(i);
        std::fill(yo, yo + n, 0.0);
        const double* __restrict ar = a.row(i);
        for (std::size_t l = 0; l < k; ++l) {
            const double av = ar[l];
            const double* __restrict br = b.row(l);
            for (std::size_t j = 0; j < n; ++j) yo[j] += av * br[j];
        }
    }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    matmul_into(a, b, out);
    return out;
}

/// Blocked transpose (tiles keep both sides cache-resident).
inline Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    constexpr std::size_t B = 32;
    for (std::size_t i0 = 0; i0 < a.rows(); i0 += B)
        for (std::size_t j0 = 0; j0 < a.cols(); j0 += B) {
            const std::size_t i1 = std::min(i0 + B, a.rows());
            const std::size_t j1 = std::min(j0 + B, a.cols());
            for (std::size_t i = i0; i < i1; ++i)
                for (std::size_t j = j0; j < j1; ++j) out(j, i) = a(i, j);
        }
    return out;
}

/// Entrywise sign: -1 / 0 / +1 (0 maps to 0).
inline Matrix sign_of(const Matrix& a) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a.data()[i];
        out.data()[i] = (x > 0.0) ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    }
    return out;
}

inline void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": " + a.shape_str() + " vs " + b.shape_str());
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "add");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "sub");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
    return out;
}

inline void add_inplace(Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "add_inplace");
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

/// a += s * b
inline void axpy_inplace(Matrix& a, double s, const Matrix& b) {
    check_same_shape(a, b, "axpy");
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += s * b.data()[i];
}

inline Matrix scaled(const Matrix& a, double s) {
    Matrix out = a;
    for (double& x : out.values()) x *= s;
    return out;
}

/// Column sums as a 1 x cols row vector.
inline Matrix column_sums(const Matrix& a) {
    Matrix out(1, a.cols());
    double* o = out.row(0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* r = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) o[j] += r[j];
    }
    return out;
}

/// Broadcast-add a 1 x cols row vector to every row.
inline void add_row_inplace(Matrix& a, const Matrix& rowvec) {
    if (rowvec.rows() != 1 || rowvec.cols() != a.cols())
        throw ShapeError("add_row: " + a.shape_str() + " += " + rowvec.shape_str());
    const double* v = rowvec.row(0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* r = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) r[j] += v[j];
    }
}

inline double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double x : a.values()) m = std::max(m, std::fabs(x));
    return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
    return m;
}

/// FNV-1a over the raw little-endian bytes of the entries; used for the
/// bit-level isolation and no-mutation checks.
inline std::uint64_t fnv1a_bytes(const void* p, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t checksum(const Matrix& a, std::uint64_t h = 1469598103934665603ULL) {
    return fnv1a_bytes(a.data(), a.size() * sizeof(double), h);
}

} // namespace bpn
