#pragma once

// Independent reference computations for the test suites. Nothing here calls
// into the code paths under test beyond plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "edits/core/rng.hpp"
#include "edits/core/types.hpp"

namespace edits::oracle {

inline MatrixD random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
    MatrixD m(rows, cols);
    for (double& v : m.values()) v = rng.uniform(lo, hi);
    return m;
}

/// Direct evaluation of the softmax-attention fusion without blocking or
/// max-subtraction, written as plain loops.
inline std::vector<std::vector<double>> dense_fusion(const MatrixD& f_v, const MatrixD& f_tau, double temperature) {
    const std::size_t n = f_v.rows();
    std::vector<std::vector<double>> h(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> w(n);
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < f_v.cols(); ++c) s += f_v(i, c) * f_tau(j, c);
            w[j] = std::exp(s / temperature);
            denom += w[j];
        }
        std::vector<double> agg(f_tau.cols(), 0.0);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t c = 0; c < f_tau.cols(); ++c) agg[c] += (w[j] / denom) * f_tau(j, c);
        h[i] = agg;
        for (std::size_t c = 0; c < f_v.cols(); ++c) h[i].push_back(f_v(i, c));
    }
    return h;
}

/// Minimum SSE over every assignment of M points to K labels (K^M cases).
inline double brute_force_sse(const MatrixD& pts, std::size_t k) {
    const std::size_t m = pts.rows(), d = pts.cols();
    std::vector<std::size_t> label(m, 0);
    double best = std::numeric_limits<double>::infinity();
    while (true) {
        std::vector<double> sums(k * d, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < m; ++i) {
            ++counts[label[i]];
            for (std::size_t c = 0; c < d; ++c) sums[label[i] * d + c] += pts(i, c);
        }
        double sse = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t c = 0; c < d; ++c) {
                const double mean = sums[label[i] * d + c] / static_cast<double>(counts[label[i]]);
                sse += (pts(i, c) - mean) * (pts(i, c) - mean);
            }
        best = std::min(best, sse);
        std::size_t pos = 0;
        while (pos < m && ++label[pos] == k) label[pos++] = 0;
        if (pos == m) break;
    }
    return best;
}

}  // namespace edits::oracle
