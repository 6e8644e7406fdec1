// Dense row-major matrix of doubles plus the small set of kernels the rest of
// the library is built on. All kernels are pure and use a fixed left-to-right
// summation order so results are bit-stable across runs.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace zdc {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                        " does not match " + std::to_string(rows_) + "x" +
                                        std::to_string(cols_));
        }
    }
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw std::invalid_argument("Matrix: ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    std::string shape() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: dimension mismatch " + a.shape() + " * " + b.shape());
    }
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    // i-k-j order: each c(i,j) still accumulates k = 0,1,... left to right.
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const double* bk = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

/// a * b^T without materialising the transpose. Same summation order as
/// matmul(a, transpose(b)).
inline Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("matmul_transposed: dimension mismatch " + a.shape() + " * (" +
                                    b.shape() + ")^T");
    }
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ai = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const auto bj = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < ai.size(); ++k) s += ai[k] * bj[k];
            c(i, j) = s;
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("add: shape mismatch " + a.shape() + " + " + b.shape());
    }
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

inline Matrix scaled(const Matrix& a, double s) {
    Matrix c = a;
    for (double& v : c.data()) v *= s;
    return c;
}

/// Rows [begin, end).
inline Matrix slice_rows(const Matrix& a, std::size_t begin, std::size_t end) {
    if (begin > end || end > a.rows()) throw std::out_of_range("slice_rows: bad range for " + a.shape());
    Matrix s(end - begin, a.cols());
    std::copy(a.data().begin() + static_cast<std::ptrdiff_t>(begin * a.cols()),
              a.data().begin() + static_cast<std::ptrdiff_t>(end * a.cols()), s.data().begin());
    return s;
}

/// Columns [begin, end).
inline Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t end) {
    if (begin > end || end > a.cols()) throw std::out_of_range("slice_cols: bad range for " + a.shape());
    Matrix s(a.rows(), end - begin);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = begin; j < end; ++j) s(i, j - begin) = a(i, j);
    return s;
}

/// Copies `a` into the leading columns of a wider zero matrix.
inline Matrix pad_cols(const Matrix& a, std::size_t cols) {
    if (cols < a.cols()) throw std::invalid_argument("pad_cols: target narrower than " + a.shape());
    Matrix p(a.rows(), cols);
    for (std::size_t i = 0; i < a.rows(); ++i)
        std::copy(a.row(i).begin(), a.row(i).end(), p.row(i).begin());
    return p;
}

inline Matrix vconcat(const Matrix& top, const Matrix& bottom) {
    if (top.empty() && top.cols() == 0) return bottom;
    if (bottom.empty() && bottom.cols() == 0) return top;
    if (top.cols() != bottom.cols()) {
        throw std::invalid_argument("vconcat: column mismatch " + top.shape() + " over " + bottom.shape());
    }
    Matrix c(top.rows() + bottom.rows(), top.cols());
    std::copy(top.data().begin(), top.data().end(), c.data().begin());
    std::copy(bottom.data().begin(), bottom.data().end(),
              c.data().begin() + static_cast<std::ptrdiff_t>(top.size()));
    return c;
}

inline Matrix hconcat(const std::vector<Matrix>& parts) {
    if (parts.empty()) return {};
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw std::invalid_argument("hconcat: row mismatch at " + p.shape());
        cols += p.cols();
    }
    Matrix c(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        auto out = c.row(i).begin();
        for (const auto& p : parts) out = std::copy(p.row(i).begin(), p.row(i).end(), out);
    }
    return c;
}

inline double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

/// ||a - b||_F / ||b||_F, or the absolute difference norm when b is zero.
inline double relative_error(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("relative_error: shape mismatch " + a.shape() + " vs " + b.shape());
    }
    double num = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        num += d * d;
    }
    const double den = frobenius_norm(b);
    return den > 0.0 ? std::sqrt(num) / den : std::sqrt(num);
}

inline double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

/// ||R^T R - I||_inf (max entry).
inline double orthogonality_residual(const Matrix& r) {
    const Matrix g = matmul(transpose(r), r);
    double m = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) m = std::max(m, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
    return m;
}

inline bool all_finite(const Matrix& a) {
    return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
}

/// Number of columns kept at drop ratio p: ceil((1-p) n), never below 1.
inline std::size_t kept_width(std::size_t n, double p) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("drop ratio must be in [0,1), got " + std::to_string(p));
    if (n == 0) return 0;
    // Round the product first so e.g. (1-0.3)*10 = 7.000000000000001 keeps 7.
    const double exact = (1.0 - p) * static_cast<double>(n);
    const double snapped = std::round(exact * 1e9) / 1e9;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(snapped)));
}

inline Matrix truncate_columns(const Matrix& a, double p) {
    return slice_cols(a, 0, kept_width(a.cols(), p));
}

/// Max and max-shifted exponential sum of the first `count` entries of a row.
/// The row denominator sum_k exp(a_k) equals shifted_sum * exp(max).
struct RowExpSum {
    double max = 0.0;
    double shifted_sum = 0.0;
    double denominator() const { return shifted_sum * std::exp(max); }
};

inline RowExpSum row_exp_sum(std::span<const double> row, std::size_t count) {
    RowExpSum r;
    r.max = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < count; ++k) r.max = std::max(r.max, row[k]);
    for (std::size_t k = 0; k < count; ++k) r.shifted_sum += std::exp(row[k] - r.max);
    return r;
}

/// Keys visible to query row i under a causal mask. Queries are aligned to the
/// end of the key axis, so a single decode row sees every key.
inline std::size_t visible_keys(std::size_t i, std::size_t rows, std::size_t cols, bool causal) {
    if (!causal) return cols;
    if (cols + i < rows) return 0;
    return std::min(cols, cols + i + 1 - rows);
}

struct SoftmaxResult {
    Matrix probs;
    std::vector<double> denoms;
};

inline SoftmaxResult softmax_rows(const Matrix& a, bool causal_mask) {
    SoftmaxResult out{Matrix(a.rows(), a.cols()), std::vector<double>(a.rows())};
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const std::size_t n = visible_keys(i, a.rows(), a.cols(), causal_mask);
        if (n == 0) throw std::invalid_argument("softmax_rows: row " + std::to_string(i) + " is fully masked");
        const auto row = a.row(i);
        const RowExpSum es = row_exp_sum(row, n);
        auto p = out.probs.row(i);
        for (std::size_t k = 0; k < n; ++k) p[k] = std::exp(row[k] - es.max) / es.shifted_sum;
        out.denoms[i] = es.denominator();
    }
    return out;
}

}  // namespace zdc
