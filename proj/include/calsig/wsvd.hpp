#ifndef CALSIG_WSVD_HPP
#define CALSIG_WSVD_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "calsig/cell_data.hpp"
#include "calsig/matrix.hpp"

namespace calsig {

/// Missing-data indicator: 0 where the entry is saturated, 1 otherwise.
struct SaturationMask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> indicator;
    double saturation_level = 255.0;

    SaturationMask() = default;
    SaturationMask(std::size_t r, std::size_t c, double level)
        : rows(r), cols(c), indicator(r * c, 1), saturation_level(level) {}

    std::uint8_t at(std::size_t r, std::size_t c) const { return indicator[r * cols + c]; }
    void set(std::size_t r, std::size_t c, std::uint8_t v) { indicator[r * cols + c] = v; }
};

struct WsvdOptions {
    bool use_variance_weights = true;
    std::size_t max_iters = 500;
    double tol = 1e-8;
    // Error out when more than this fraction of the divisions needed a
    // floored denominator.
    double guard_fraction_limit = 0.05;
};

struct WsvdResult {
    std::vector<double> eigenpixel;   // unit norm, n entries
    std::vector<double> eigensignal;  // unit norm, m entries
    double scale = 0.0;
    Matrix imputed;
    std::vector<std::size_t> dropped_pixels;  // filled by clarify_cell
    std::size_t iterations = 0;
    // objective_trace[0] is the value at initialization, then one entry per
    // completed iteration. half_step_trace has two entries per iteration
    // (after the v update, after the u update).
    std::vector<double> objective_trace;
    std::vector<double> half_step_trace;
    std::vector<std::pair<std::size_t, std::size_t>> flag_report;
    std::size_t guard_activations = 0;
    double final_objective = 0.0;
};

/// Indicator 0 exactly where the value equals the saturation level.
SaturationMask build_mask(const PixelTimeMatrix& ptm);

struct DropResult {
    PixelTimeMatrix ptm;
    SaturationMask mask;
    std::vector<std::size_t> dropped;  // original row indices
};

/// Removes row i when its unmasked count p_i satisfies p_i/m < 1/8
/// (strict; a row exactly at 1/8 is kept). Throws EmptyCellError when
/// nothing survives.
DropResult drop_saturated_pixels(const PixelTimeMatrix& ptm, const SaturationMask& mask);

/// Alternating weighted rank-1 fit treating masked entries as missing.
/// Initialized from the plain SVD of the raw matrix (saturated values
/// included); masked entries of the result are imputed with s*u_i*v_j.
WsvdResult wsvd_fit(const PixelTimeMatrix& ptm, const SaturationMask& mask,
                    const WsvdOptions& options = {});

/// Imputation + flag check on given factors; exposed so corrupted factors
/// can be pushed through the same path the fit uses.
std::pair<Matrix, std::vector<std::pair<std::size_t, std::size_t>>> impute_rank1(
    const Matrix& observed, const SaturationMask& mask, const std::vector<double>& u,
    const std::vector<double>& v, double scale);

/// build_mask -> drop_saturated_pixels -> wsvd_fit, with dropped_pixels
/// recorded in the result.
WsvdResult clarify_cell(const PixelTimeMatrix& ptm, const WsvdOptions& options = {});

} // namespace calsig

#endif
