#include "calsig/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "calsig/errors.hpp"

namespace calsig {

namespace {

// Column-major workspace: columns are contiguous so the Jacobi rotations
// stream through memory.
struct ColMat {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    ColMat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    double* col(std::size_t j) { return data.data() + j * rows; }
    const double* col(std::size_t j) const { return data.data() + j * rows; }
};

// Four-lane dot product: fixed reassociation keeps results deterministic
// while letting the compiler vectorize the reduction.
double dot4(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t r = 0;
    for (; r + 4 <= n; r += 4) {
        s0 += a[r] * b[r];
        s1 += a[r + 1] * b[r + 1];
        s2 += a[r + 2] * b[r + 2];
        s3 += a[r + 3] * b[r + 3];
    }
    for (; r < n; ++r) s0 += a[r] * b[r];
    return (s0 + s1) + (s2 + s3);
}

// Orthogonalizes columns of B in place via Hestenes rotations, accumulating
// the rotations into V (cols x cols). Returns the achieved off-diagonal
// residual relative to the Frobenius norm.
double jacobi_orthogonalize(ColMat& B, ColMat& V, const SvdOptions& opt) {
    const std::size_t p = B.rows, q = B.cols;
    for (std::size_t j = 0; j < q; ++j) V.col(j)[j] = 1.0;

    double frob2 = 0.0;
    for (double v : B.data) frob2 += v * v;
    if (frob2 == 0.0) return 0.0;
    const double frob = std::sqrt(frob2);

    double rel_off = 0.0;
    std::vector<double> norms(q);
    for (std::size_t sweep = 0; sweep < opt.max_sweeps; ++sweep) {
        // Column norms change only for the two rotated columns
        // (alpha -= t*gamma, beta += t*gamma); refreshed once per sweep to
        // shed the accumulated drift.
        for (std::size_t j = 0; j < q; ++j) norms[j] = dot4(B.col(j), B.col(j), p);
        double off2 = 0.0;
        for (std::size_t i = 0; i + 1 < q; ++i) {
            for (std::size_t j = i + 1; j < q; ++j) {
                double* bi = B.col(i);
                double* bj = B.col(j);
                double gamma = dot4(bi, bj, p);
                const double alpha = norms[i], beta = norms[j];
                off2 += gamma * gamma;
                if (gamma == 0.0 || alpha == 0.0 || beta == 0.0) continue;

                double zeta = (beta - alpha) / (2.0 * gamma);
                double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = c * t;
                for (std::size_t r = 0; r < p; ++r) {
                    double x = bi[r], y = bj[r];
                    bi[r] = c * x - s * y;
                    bj[r] = s * x + c * y;
                }
                norms[i] = alpha - t * gamma;
                norms[j] = beta + t * gamma;
                double* vi = V.col(i);
                double* vj = V.col(j);
                for (std::size_t r = 0; r < q; ++r) {
                    double x = vi[r], y = vj[r];
                    vi[r] = c * x - s * y;
                    vj[r] = s * x + c * y;
                }
            }
        }
        rel_off = std::sqrt(off2) / frob;
        if (rel_off < opt.off_diagonal_tol) return rel_off;
    }
    if (rel_off >= opt.off_diagonal_tol)
        throw ConvergenceError("svd: Jacobi sweeps exhausted; relative off-diagonal residual " +
                                   std::to_string(rel_off),
                               rel_off);
    return rel_off;
}

std::size_t argmax_abs(const double* v, std::size_t n) {
    std::size_t best = 0;
    double mag = std::abs(v[0]);
    for (std::size_t i = 1; i < n; ++i) {
        double m = std::abs(v[i]);
        if (m > mag) {
            mag = m;
            best = i;
        }
    }
    return best;
}

// Deterministic basis completion for zero singular values: picks canonical
// basis vectors, projects out the accepted columns, keeps the first with
// enough residual mass.
void complete_column(ColMat& U, std::size_t target, std::size_t n_filled) {
    const std::size_t p = U.rows;
    std::vector<double> cand(p);
    for (std::size_t e = 0; e < p; ++e) {
        std::fill(cand.begin(), cand.end(), 0.0);
        cand[e] = 1.0;
        for (std::size_t j = 0; j < n_filled; ++j) {
            if (j == target) continue;
            const double* uj = U.col(j);
            double dot = uj[e];
            for (std::size_t r = 0; r < p; ++r) cand[r] -= dot * uj[r];
        }
        double norm2 = 0.0;
        for (double v : cand) norm2 += v * v;
        if (norm2 > 0.25) {
            double inv = 1.0 / std::sqrt(norm2);
            double* u = U.col(target);
            for (std::size_t r = 0; r < p; ++r) u[r] = cand[r] * inv;
            return;
        }
    }
    // Unreachable for p >= number of columns, which Jacobi guarantees.
    double* u = U.col(target);
    std::fill(u, u + p, 0.0);
    u[0] = 1.0;
}

} // namespace

SvdTriplet svd(const Matrix& matrix, std::size_t k, const SvdOptions& options) {
    validate_matrix(matrix, "svd");
    const std::size_t n = matrix.rows, m = matrix.cols;
    const std::size_t rank_max = std::min(n, m);
    if (k < 1 || k > rank_max)
        throw InvalidInputError("svd: k must be in [1, min(rows, cols)], got " +
                                std::to_string(k));

    // Work on the transpose when the matrix is wide so the Jacobi side is
    // the short one; swap the factor roles back at the end.
    const bool transposed = n < m;
    const std::size_t p = transposed ? m : n;  // long side
    const std::size_t q = rank_max;            // short side (Jacobi columns)

    ColMat B(p, q);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) {
            double v = matrix.at(r, c);
            if (transposed)
                B.col(r)[c] = v;
            else
                B.col(c)[r] = v;
        }

    ColMat W(q, q);
    jacobi_orthogonalize(B, W, options);

    // Singular values are the rotated column norms; the long-side factor
    // comes from the normalized columns, the short-side factor from W.
    std::vector<double> sigma(q);
    double sigma_max = 0.0;
    for (std::size_t j = 0; j < q; ++j) {
        double s2 = 0.0;
        const double* bj = B.col(j);
        for (std::size_t r = 0; r < p; ++r) s2 += bj[r] * bj[r];
        sigma[j] = std::sqrt(s2);
        sigma_max = std::max(sigma_max, sigma[j]);
    }

    ColMat Ulong(p, q);
    const double tiny = sigma_max * 1e-13;
    std::vector<bool> degenerate(q, false);
    for (std::size_t j = 0; j < q; ++j) {
        if (sigma[j] > tiny && sigma[j] > 0.0) {
            double inv = 1.0 / sigma[j];
            const double* bj = B.col(j);
            double* uj = Ulong.col(j);
            for (std::size_t r = 0; r < p; ++r) uj[r] = bj[r] * inv;
        } else {
            degenerate[j] = true;
        }
    }

    // Sort by singular value descending, stable on the original order, then
    // fill in unit vectors for the degenerate columns.
    std::vector<std::size_t> order(q);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

    ColMat Usorted(p, q), Wsorted(q, q);
    std::vector<double> ssorted(q);
    for (std::size_t j = 0; j < q; ++j) {
        std::size_t src = order[j];
        ssorted[j] = sigma[src];
        std::copy(Ulong.col(src), Ulong.col(src) + p, Usorted.col(j));
        std::copy(W.col(src), W.col(src) + q, Wsorted.col(j));
    }
    for (std::size_t j = 0; j < q; ++j)
        if (degenerate[order[j]]) complete_column(Usorted, j, q);

    // Exact ties ordered by first index of the largest-magnitude entry of
    // the left vector (the long-side factor when not transposed, the
    // short-side factor otherwise).
    auto left_argmax = [&](std::size_t j) {
        return transposed ? argmax_abs(Wsorted.col(j), q) : argmax_abs(Usorted.col(j), p);
    };
    for (std::size_t a = 0; a < q;) {
        std::size_t b = a + 1;
        while (b < q && ssorted[b] == ssorted[a]) ++b;
        if (b - a > 1) {
            std::vector<std::size_t> run(b - a);
            std::iota(run.begin(), run.end(), a);
            std::stable_sort(run.begin(), run.end(), [&](std::size_t x, std::size_t y) {
                return left_argmax(x) < left_argmax(y);
            });
            ColMat Utmp(p, b - a), Wtmp(q, b - a);
            for (std::size_t i = 0; i < run.size(); ++i) {
                std::copy(Usorted.col(run[i]), Usorted.col(run[i]) + p, Utmp.col(i));
                std::copy(Wsorted.col(run[i]), Wsorted.col(run[i]) + q, Wtmp.col(i));
            }
            for (std::size_t i = 0; i < run.size(); ++i) {
                std::copy(Utmp.col(i), Utmp.col(i) + p, Usorted.col(a + i));
                std::copy(Wtmp.col(i), Wtmp.col(i) + q, Wsorted.col(a + i));
            }
        }
        a = b;
    }

    SvdTriplet out;
    out.singular_values.assign(ssorted.begin(), ssorted.begin() + k);
    out.left_vectors = Matrix(n, k);
    out.right_vectors = Matrix(m, k);
    for (std::size_t j = 0; j < k; ++j) {
        const double* ucol = transposed ? Wsorted.col(j) : Usorted.col(j);
        const double* vcol = transposed ? Usorted.col(j) : Wsorted.col(j);
        // Sign convention: largest-magnitude left entry nonnegative.
        std::size_t pivot = argmax_abs(ucol, n);
        double flip = ucol[pivot] < 0.0 ? -1.0 : 1.0;
        for (std::size_t r = 0; r < n; ++r) out.left_vectors.at(r, j) = flip * ucol[r];
        for (std::size_t r = 0; r < m; ++r) out.right_vectors.at(r, j) = flip * vcol[r];
    }
    return out;
}

Matrix rank_l_reconstruct(const SvdTriplet& triplet, std::size_t l) {
    if (l < 1 || l > triplet.count())
        throw InvalidInputError("rank_l_reconstruct: l must be in [1, stored triplets], got " +
                                std::to_string(l));
    const std::size_t n = triplet.left_vectors.rows;
    const std::size_t m = triplet.right_vectors.rows;
    Matrix out(n, m, 0.0);
    for (std::size_t j = 0; j < l; ++j) {
        double s = triplet.singular_values[j];
        for (std::size_t r = 0; r < n; ++r) {
            double su = s * triplet.left_vectors.at(r, j);
            for (std::size_t c = 0; c < m; ++c)
                out.at(r, c) += su * triplet.right_vectors.at(c, j);
        }
    }
    return out;
}

std::vector<double> variance_explained(const SvdTriplet& triplet) {
    if (triplet.count() == 0)
        throw InvalidInputError("variance_explained: no singular values present");
    double total = 0.0;
    for (double s : triplet.singular_values) total += s * s;
    if (total == 0.0)
        throw UndefinedRatioError("variance_explained: all singular values are zero");
    std::vector<double> out(triplet.count());
    for (std::size_t j = 0; j < out.size(); ++j) {
        double s = triplet.singular_values[j];
        out[j] = s * s / total;
    }
    return out;
}

} // namespace calsig
