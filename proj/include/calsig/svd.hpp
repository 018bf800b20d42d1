#ifndef CALSIG_SVD_HPP
#define CALSIG_SVD_HPP

#include <cstddef>
#include <vector>

#include "calsig/matrix.hpp"

namespace calsig {

/// Leading singular triplets of a matrix. Column j of `left_vectors`
/// (the EigenPixels) and `right_vectors` (the EigenSignals) pairs with
/// singular_values[j]; vectors have unit Euclidean norm and the values
/// are sorted nonincreasing.
struct SvdTriplet {
    std::vector<double> singular_values;
    Matrix left_vectors;   // n x k
    Matrix right_vectors;  // m x k

    std::size_t count() const { return singular_values.size(); }
};

struct SvdOptions {
    std::size_t max_sweeps = 60;
    // Converged when the off-diagonal Gram norm drops below this fraction
    // of the Frobenius norm.
    double off_diagonal_tol = 1e-12;
};

/// One-sided Jacobi SVD; returns the k leading triplets.
///
/// Deterministic: fixed cyclic sweep order, and the sign of each pair is
/// chosen so the left vector's largest-magnitude entry (lowest index on
/// ties) is nonnegative. Exactly equal singular values are ordered by the
/// first index of the largest-magnitude left-vector entry.
SvdTriplet svd(const Matrix& matrix, std::size_t k, const SvdOptions& options = {});

/// Sum of the first l rank-1 terms, s_j * u_j * v_j^T.
Matrix rank_l_reconstruct(const SvdTriplet& triplet, std::size_t l);

/// Fraction of total squared singular value per component; sums to 1.
/// Meaningful only when the triplet holds all min(rows, cols) values.
std::vector<double> variance_explained(const SvdTriplet& triplet);

} // namespace calsig

#endif
