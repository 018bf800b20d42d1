// Test-only oracles, independent of the library's SVD implementation path.
#ifndef CALSIG_TESTS_ORACLES_HPP
#define CALSIG_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "calsig/matrix.hpp"

namespace oracles {

// Classic two-sided cyclic Jacobi eigendecomposition of a symmetric matrix.
// Returns the eigenvalues sorted descending. Deliberately a different
// algorithm family (two-sided, on A^T A) from the library's one-sided SVD.
inline std::vector<double> symmetric_eigenvalues(calsig::Matrix a, int max_sweeps = 100) {
    const std::size_t n = a.rows;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
        if (std::sqrt(off) < 1e-14 * (1.0 + std::abs(a.at(0, 0)))) break;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = a.at(p, q);
                if (apq == 0.0) continue;
                double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    double akp = a.at(k, p), akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double apk = a.at(p, k), aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a.at(i, i);
    std::sort(eig.begin(), eig.end(), std::greater<>());
    return eig;
}

// Singular values of X as square roots of the eigenvalues of X^T X (or X X^T,
// whichever is smaller).
inline std::vector<double> singular_values_bruteforce(const calsig::Matrix& x) {
    const bool use_right = x.cols <= x.rows;
    const std::size_t n = use_right ? x.cols : x.rows;
    calsig::Matrix gram(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            if (use_right)
                for (std::size_t k = 0; k < x.rows; ++k) s += x.at(k, i) * x.at(k, j);
            else
                for (std::size_t k = 0; k < x.cols; ++k) s += x.at(i, k) * x.at(j, k);
            gram.at(i, j) = s;
        }
    auto eig = symmetric_eigenvalues(gram);
    std::vector<double> sv(n);
    for (std::size_t i = 0; i < n; ++i) sv[i] = std::sqrt(std::max(eig[i], 0.0));
    return sv;
}

inline calsig::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint32_t seed,
                                    double lo = -1.0, double hi = 1.0) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    calsig::Matrix m(rows, cols);
    for (double& v : m.data) v = dist(gen);
    return m;
}

} // namespace oracles

#endif
