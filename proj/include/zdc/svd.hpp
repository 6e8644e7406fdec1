// Thin SVD by one-sided (Hestenes) Jacobi rotations.
//
// For A (m x n, m >= n) the columns of A are orthogonalised in place by plane
// rotations accumulated into V, giving A V = U diag(sigma). Wide inputs are
// handled by factoring A^T and swapping the factors. A sweep visits every
// column pair once; iteration stops after the first sweep in which no pair
// needed a rotation above the 1e-12 relative threshold.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "zdc/matrix.hpp"

namespace zdc {

struct SvdResult {
    Matrix u;                    ///< m x r, orthonormal columns
    std::vector<double> sigma;   ///< r values, non-increasing, >= 0
    Matrix r_mat;                ///< n x r, orthonormal columns (right factor)
};

class SvdConvergenceError : public std::runtime_error {
public:
    SvdConvergenceError(int sweeps, double residual)
        : std::runtime_error("svd: no convergence after " + std::to_string(sweeps) +
                             " sweeps, residual " + std::to_string(residual)),
          residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

struct SvdOptions {
    double tolerance = 1e-12;
    int max_sweeps = 60;
};

namespace detail {

// Fills columns of q (m x r) whose flag is false with unit vectors orthogonal
// to every other column (modified Gram-Schmidt against the canonical basis).
inline void complete_orthonormal_columns(Matrix& q, const std::vector<bool>& valid) {
    const std::size_t m = q.rows();
    const std::size_t r = q.cols();
    std::size_t next_basis = 0;
    for (std::size_t c = 0; c < r; ++c) {
        if (valid[c]) continue;
        bool placed = false;
        while (!placed && next_basis < m) {
            std::vector<double> v(m, 0.0);
            v[next_basis++] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t o = 0; o < r; ++o) {
                    if (o == c || (!valid[o] && o > c)) continue;
                    double dot = 0.0;
                    for (std::size_t i = 0; i < m; ++i) dot += q(i, o) * v[i];
                    for (std::size_t i = 0; i < m; ++i) v[i] -= dot * q(i, o);
                }
            }
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > 1e-6) {
                for (std::size_t i = 0; i < m; ++i) q(i, c) = v[i] / norm;
                placed = true;
            }
        }
        if (!placed) throw std::runtime_error("svd: cannot complete orthonormal basis");
    }
}

inline SvdResult jacobi_tall(const Matrix& a, const SvdOptions& opt) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    // Work column-major: cols[j] is column j of the evolving A V.
    std::vector<std::vector<double>> cols(n, std::vector<double>(m));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) cols[j][i] = a(i, j);
    std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) v[j][j] = 1.0;

    double frob2 = 0.0;
    for (double x : a.data()) frob2 += x * x;
    // Column pairs whose product is below this are numerically zero.
    const double negligible = frob2 * 1e-30;

    int sweep = 0;
    double worst = 0.0;
    for (; sweep < opt.max_sweeps; ++sweep) {
        worst = 0.0;
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                const auto& cp = cols[p];
                const auto& cq = cols[q];
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += cp[i] * cp[i];
                    beta += cq[i] * cq[i];
                    gamma += cp[i] * cq[i];
                }
                if (alpha * beta <= negligible || std::abs(gamma) <= negligible) continue;
                const double off = std::abs(gamma) / std::sqrt(alpha * beta);
                worst = std::max(worst, off);
                if (off <= opt.tolerance) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                auto& wp = cols[p];
                auto& wq = cols[q];
                for (std::size_t i = 0; i < m; ++i) {
                    const double x = wp[i];
                    const double y = wq[i];
                    wp[i] = c * x - s * y;
                    wq[i] = s * x + c * y;
                }
                auto& vp = v[p];
                auto& vq = v[q];
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = vp[i];
                    const double y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
            }
        }
        if (!rotated) break;
    }
    if (sweep == opt.max_sweeps) throw SvdConvergenceError(sweep, worst);

    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (double x : cols[j]) s += x * x;
        norms[j] = std::sqrt(s);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    SvdResult out{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
    const double sigma_max = n > 0 ? norms[order[0]] : 0.0;
    const double floor = std::max(sigma_max * 1e-13, 1e-300);
    std::vector<bool> valid(n, false);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        out.sigma[k] = norms[j];
        for (std::size_t i = 0; i < n; ++i) out.r_mat(i, k) = v[j][i];
        if (norms[j] > floor) {
            for (std::size_t i = 0; i < m; ++i) out.u(i, k) = cols[j][i] / norms[j];
            valid[k] = true;
        }
    }
    complete_orthonormal_columns(out.u, valid);
    return out;
}

}  // namespace detail

inline SvdResult svd(const Matrix& a, const SvdOptions& opt = {}) {
    if (a.rows() == 0 || a.cols() == 0) throw std::invalid_argument("svd: empty matrix " + a.shape());
    if (!all_finite(a)) throw std::invalid_argument("svd: non-finite entries");
    if (a.rows() >= a.cols()) return detail::jacobi_tall(a, opt);
    SvdResult t = detail::jacobi_tall(transpose(a), opt);
    return SvdResult{std::move(t.r_mat), std::move(t.sigma), std::move(t.u)};
}

inline Matrix svd_reconstruct(const SvdResult& s) {
    Matrix us = s.u;
    for (std::size_t i = 0; i < us.rows(); ++i)
        for (std::size_t k = 0; k < us.cols(); ++k) us(i, k) *= s.sigma[k];
    return matmul_transposed(us, s.r_mat);
}

}  // namespace zdc
