// Lloyd's k-means with k-means++ seeding, used to shrink activation banks
// before the rotation SVD.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zdc/matrix.hpp"

namespace zdc {

struct KMeansOptions {
    std::size_t iters = 25;
    double tol = 1e-9;  ///< stop once no centroid moves farther than this
    std::uint64_t seed = 0;
};

struct KMeansResult {
    Matrix centroids;
    std::vector<std::size_t> assignment;
    std::size_t iterations = 0;
    std::size_t reseeded = 0;  ///< empty clusters re-seeded
};

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline std::size_t nearest(std::span<const double> x, const Matrix& c, double* dist = nullptr) {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c.rows(); ++j) {
        const double d = sq_dist(x, c.row(j));
        if (d < bd) {
            bd = d;
            best = j;
        }
    }
    if (dist) *dist = bd;
    return best;
}

}  // namespace detail

inline KMeansResult kmeans(const Matrix& x, std::size_t k, const KMeansOptions& opt = {}) {
    const std::size_t n = x.rows();
    if (k == 0 || k > n) {
        throw std::invalid_argument("kmeans: k=" + std::to_string(k) + " with " + std::to_string(n) + " points");
    }
    std::mt19937_64 rng(opt.seed);
    KMeansResult r;
    r.centroids = Matrix(k, x.cols());

    // k-means++ seeding
    std::vector<char> chosen(n, 0);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    for (std::size_t c = 0; c < k; ++c) {
        if (c > 0) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) total += d2[i];
            if (total > 0.0) {
                std::uniform_real_distribution<double> u(0.0, total);
                double target = u(rng), acc = 0.0;
                pick = n;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += d2[i];
                    if (d2[i] > 0.0 && acc >= target) {
                        pick = i;
                        break;
                    }
                }
                if (pick == n)
                    for (std::size_t i = n; i-- > 0;)
                        if (d2[i] > 0.0) {
                            pick = i;
                            break;
                        }
            } else {
                // every remaining point coincides with a centroid
                pick = 0;
                while (chosen[pick]) ++pick;
            }
        }
        chosen[pick] = 1;
        std::copy(x.row(pick).begin(), x.row(pick).end(), r.centroids.row(c).begin());
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], detail::sq_dist(x.row(i), r.centroids.row(c)));
    }

    r.assignment.assign(n, 0);
    for (std::size_t it = 0; it < opt.iters; ++it) {
        std::vector<double> dist(n);
        for (std::size_t i = 0; i < n; ++i) r.assignment[i] = detail::nearest(x.row(i), r.centroids, &dist[i]);

        Matrix sums(k, x.cols());
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto s = sums.row(r.assignment[i]);
            auto xi = x.row(i);
            for (std::size_t j = 0; j < xi.size(); ++j) s[j] += xi[j];
            ++count[r.assignment[i]];
        }
        double moved = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            std::vector<double> next(x.cols());
            if (count[c] == 0) {
                std::size_t far = 0;
                for (std::size_t i = 1; i < n; ++i)
                    if (dist[i] > dist[far]) far = i;
                std::copy(x.row(far).begin(), x.row(far).end(), next.begin());
                dist[far] = 0.0;
                ++r.reseeded;
            } else {
                for (std::size_t j = 0; j < x.cols(); ++j) next[j] = sums(c, j) / static_cast<double>(count[c]);
            }
            moved = std::max(moved, std::sqrt(detail::sq_dist(next, r.centroids.row(c))));
            std::copy(next.begin(), next.end(), r.centroids.row(c).begin());
        }
        r.iterations = it + 1;
        if (moved < opt.tol) break;
    }
    for (std::size_t i = 0; i < n; ++i) r.assignment[i] = detail::nearest(x.row(i), r.centroids);
    return r;
}

/// Centroids only: the reduced vector set.
inline Matrix kmeans_reduce(const Matrix& x, std::size_t k, std::size_t iters = 25, std::uint64_t seed = 0) {
    return kmeans(x, k, {iters, 1e-9, seed}).centroids;
}

/// Default cluster count min(4096, n/4), at least 1.
inline std::size_t default_kmeans_k(std::size_t n) { return std::max<std::size_t>(1, std::min<std::size_t>(4096, n / 4)); }

}  // namespace zdc
