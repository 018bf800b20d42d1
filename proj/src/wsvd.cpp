#include "calsig/wsvd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "calsig/errors.hpp"
#include "calsig/svd.hpp"

namespace calsig {

SaturationMask build_mask(const PixelTimeMatrix& ptm) {
    validate_matrix(ptm.values, "build_mask");
    SaturationMask mask(ptm.values.rows, ptm.values.cols, ptm.saturation_level);
    for (std::size_t r = 0; r < ptm.values.rows; ++r)
        for (std::size_t c = 0; c < ptm.values.cols; ++c)
            if (ptm.values.at(r, c) == ptm.saturation_level) mask.set(r, c, 0);
    return mask;
}

DropResult drop_saturated_pixels(const PixelTimeMatrix& ptm, const SaturationMask& mask) {
    const std::size_t n = ptm.values.rows, m = ptm.values.cols;
    if (mask.rows != n || mask.cols != m)
        throw InvalidInputError("drop_saturated_pixels: mask shape does not match matrix");

    std::vector<std::size_t> kept, dropped;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t p_i = 0;
        for (std::size_t j = 0; j < m; ++j) p_i += mask.at(i, j);
        // Drop when p_i/m < 1/8, strictly; a row exactly at 1/8 stays.
        if (8 * p_i < m)
            dropped.push_back(i);
        else
            kept.push_back(i);
    }
    if (kept.empty())
        throw EmptyCellError("drop_saturated_pixels: every pixel row exceeds the 7/8 saturation limit");

    DropResult out;
    out.dropped = std::move(dropped);
    out.ptm.cell_id = ptm.cell_id;
    out.ptm.saturation_level = ptm.saturation_level;
    out.ptm.values = Matrix(kept.size(), m);
    out.mask = SaturationMask(kept.size(), m, mask.saturation_level);
    if (!ptm.coords.empty()) out.ptm.coords.reserve(kept.size());
    for (std::size_t r = 0; r < kept.size(); ++r) {
        std::size_t src = kept[r];
        if (!ptm.coords.empty()) out.ptm.coords.push_back(ptm.coords[src]);
        for (std::size_t j = 0; j < m; ++j) {
            out.ptm.values.at(r, j) = ptm.values.at(src, j);
            out.mask.set(r, j, mask.at(src, j));
        }
    }
    return out;
}

std::pair<Matrix, std::vector<std::pair<std::size_t, std::size_t>>> impute_rank1(
    const Matrix& observed, const SaturationMask& mask, const std::vector<double>& u,
    const std::vector<double>& v, double scale) {
    if (mask.rows != observed.rows || mask.cols != observed.cols)
        throw InvalidInputError("impute_rank1: mask shape does not match matrix");
    if (u.size() != observed.rows || v.size() != observed.cols)
        throw InvalidInputError("impute_rank1: factor lengths do not match matrix");
    Matrix imputed = observed;
    std::vector<std::pair<std::size_t, std::size_t>> flags;
    for (std::size_t i = 0; i < observed.rows; ++i)
        for (std::size_t j = 0; j < observed.cols; ++j)
            if (!mask.at(i, j)) {
                double value = scale * u[i] * v[j];
                imputed.at(i, j) = value;
                if (value < mask.saturation_level) flags.emplace_back(i, j);
            }
    return {std::move(imputed), std::move(flags)};
}

namespace {

double vec_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// Weighted objective at the current iterate. Variance weights give
// sum I*(x/(s*u_i*v_j) - 1)^2, which equals sum w*(x - s*u_i*v_j)^2 with
// w = I/(s*u_i*v_j)^2; without them it is the plain masked least squares.
double objective(const Matrix& x, const SaturationMask& mask, const std::vector<double>& u,
                 const std::vector<double>& v, double s, bool variance_weights) {
    double q = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) {
            if (!mask.at(i, j)) continue;
            double model = s * u[i] * v[j];
            if (variance_weights) {
                double d = model;
                if (std::abs(d) < 1e-300) d = d < 0.0 ? -1e-300 : 1e-300;
                double t = x.at(i, j) / d - 1.0;
                q += t * t;
            } else {
                double t = x.at(i, j) - model;
                q += t * t;
            }
        }
    return q;
}

struct GuardCounter {
    std::size_t activations = 0;
    std::size_t total = 0;
};

// One half-step: solves for the raw (scale-carrying) factor along `out`
// given the unit factor `fixed`. `along_rows` selects whether `out` spans
// rows (u update) or columns (v update).
void half_step(const Matrix& x, const SaturationMask& mask, const std::vector<double>& fixed,
               std::vector<double>& out, bool along_rows, bool variance_weights,
               GuardCounter& guards) {
    const std::size_t n = x.rows, m = x.cols;
    const std::size_t fixed_len = along_rows ? m : n;
    const std::size_t out_len = along_rows ? n : m;
    out.assign(out_len, 0.0);

    if (variance_weights) {
        // Floored reciprocal of the fixed factor; floor relative to its
        // max-norm, sign preserved.
        const double eps = 1e-12 * std::max(max_abs(fixed), 1e-300);
        std::vector<double> inv_fixed(fixed_len);
        for (std::size_t t = 0; t < fixed_len; ++t) {
            double d = fixed[t];
            ++guards.total;
            if (std::abs(d) < eps) {
                ++guards.activations;
                d = d < 0.0 ? -eps : eps;
            }
            inv_fixed[t] = 1.0 / d;
        }
        for (std::size_t k = 0; k < out_len; ++k) {
            double a = 0.0, b = 0.0;
            if (along_rows) {
                for (std::size_t j = 0; j < m; ++j) {
                    if (!mask.at(k, j)) continue;
                    double r = x.at(k, j) * inv_fixed[j];
                    a += r * r;
                    b += r;
                }
            } else {
                for (std::size_t i = 0; i < n; ++i) {
                    if (!mask.at(i, k)) continue;
                    double r = x.at(i, k) * inv_fixed[i];
                    a += r * r;
                    b += r;
                }
            }
            ++guards.total;
            if (std::abs(b) < 1e-300) {
                ++guards.activations;
                out[k] = 0.0;
            } else {
                out[k] = a / b;
            }
        }
    } else {
        for (std::size_t k = 0; k < out_len; ++k) {
            double num = 0.0, den = 0.0;
            if (along_rows) {
                for (std::size_t j = 0; j < m; ++j) {
                    if (!mask.at(k, j)) continue;
                    num += fixed[j] * x.at(k, j);
                    den += fixed[j] * fixed[j];
                }
            } else {
                for (std::size_t i = 0; i < n; ++i) {
                    if (!mask.at(i, k)) continue;
                    num += fixed[i] * x.at(i, k);
                    den += fixed[i] * fixed[i];
                }
            }
            ++guards.total;
            if (den < 1e-300) {
                ++guards.activations;
                out[k] = 0.0;
            } else {
                out[k] = num / den;
            }
        }
    }
}

} // namespace

WsvdResult wsvd_fit(const PixelTimeMatrix& ptm, const SaturationMask& mask,
                    const WsvdOptions& options) {
    const Matrix& x = ptm.values;
    validate_matrix(x, "wsvd_fit");
    const std::size_t n = x.rows, m = x.cols;
    if (mask.rows != n || mask.cols != m)
        throw InvalidInputError("wsvd_fit: mask shape does not match matrix");

    std::vector<std::size_t> row_obs(n, 0), col_obs(m, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (mask.at(i, j)) {
                ++row_obs[i];
                ++col_obs[j];
                if (options.use_variance_weights && x.at(i, j) < 0.0)
                    throw InvalidInputError(
                        "wsvd_fit: variance weights require nonnegative observed entries");
            }
    for (std::size_t i = 0; i < n; ++i)
        if (row_obs[i] == 0)
            throw InvalidInputError("wsvd_fit: row " + std::to_string(i) +
                                    " has no unmasked entries (drop saturated pixels first)");
    for (std::size_t j = 0; j < m; ++j)
        if (col_obs[j] == 0)
            throw InvalidInputError("wsvd_fit: column " + std::to_string(j) +
                                    " has no unmasked entries");

    // Initialization: first triplet of the plain SVD with saturated values
    // left in place.
    SvdTriplet init = svd(x, 1);
    std::vector<double> u(n), v(m);
    for (std::size_t i = 0; i < n; ++i) u[i] = init.left_vectors.at(i, 0);
    for (std::size_t j = 0; j < m; ++j) v[j] = init.right_vectors.at(j, 0);
    double s = init.singular_values[0];

    WsvdResult res;
    res.objective_trace.push_back(objective(x, mask, u, v, s, options.use_variance_weights));

    GuardCounter guards;
    std::vector<double> raw;
    std::size_t iter = 0;
    bool converged = false;
    for (; iter < options.max_iters; ++iter) {
        std::vector<double> u_prev = u, v_prev = v;

        // u update from the current v, then v update from the new u; each
        // raw solution carries the scale, normalized right after.
        half_step(x, mask, v, raw, /*along_rows=*/true, options.use_variance_weights, guards);
        double nu = vec_norm(raw);
        if (nu == 0.0)
            throw IllConditionedError("wsvd_fit: zero EigenPixel update at iteration " +
                                      std::to_string(iter + 1));
        for (std::size_t i = 0; i < n; ++i) u[i] = raw[i] / nu;
        res.half_step_trace.push_back(objective(x, mask, u, v, nu, options.use_variance_weights));

        half_step(x, mask, u, raw, /*along_rows=*/false, options.use_variance_weights, guards);
        double nv = vec_norm(raw);
        if (nv == 0.0)
            throw IllConditionedError("wsvd_fit: zero EigenSignal update at iteration " +
                                      std::to_string(iter + 1));
        for (std::size_t j = 0; j < m; ++j) v[j] = raw[j] / nv;
        s = nv;
        double q = objective(x, mask, u, v, s, options.use_variance_weights);
        res.half_step_trace.push_back(q);
        res.objective_trace.push_back(q);

        double du = 0.0, dv = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = u[i] - u_prev[i];
            du += d * d;
        }
        for (std::size_t j = 0; j < m; ++j) {
            double d = v[j] - v_prev[j];
            dv += d * d;
        }
        double delta = std::max(std::sqrt(du), std::sqrt(dv));
        if (delta < options.tol) {
            ++iter;
            converged = true;
            break;
        }
    }
    if (!converged) {
        double residual = res.objective_trace.back();
        throw ConvergenceError("wsvd_fit: no convergence within " +
                                   std::to_string(options.max_iters) +
                                   " iterations; final objective " + std::to_string(residual),
                               residual);
    }
    if (guards.total > 0 &&
        static_cast<double>(guards.activations) >
            options.guard_fraction_limit * static_cast<double>(guards.total))
        throw IllConditionedError("wsvd_fit: division guard triggered on " +
                                  std::to_string(guards.activations) + " of " +
                                  std::to_string(guards.total) + " updates");

    res.iterations = iter;
    res.guard_activations = guards.activations;
    res.eigenpixel = std::move(u);
    res.eigensignal = std::move(v);
    res.scale = s;
    res.final_objective = res.objective_trace.back();
    auto [imputed, flags] = impute_rank1(x, mask, res.eigenpixel, res.eigensignal, s);
    res.imputed = std::move(imputed);
    res.flag_report = std::move(flags);
    return res;
}

WsvdResult clarify_cell(const PixelTimeMatrix& ptm, const WsvdOptions& options) {
    SaturationMask mask = build_mask(ptm);
    DropResult reduced = drop_saturated_pixels(ptm, mask);
    std::vector<std::size_t> dropped = std::move(reduced.dropped);

    if (options.use_variance_weights) {
        // A pixel with no positive observed value carries no signal for the
        // multiplicative model; like fully saturated pixels, such rows are
        // removed rather than imputed.
        std::vector<std::size_t> survivors(reduced.ptm.values.rows);
        for (std::size_t r = 0, orig = 0; r < reduced.ptm.values.rows; ++r, ++orig) {
            while (std::find(dropped.begin(), dropped.end(), orig) != dropped.end()) ++orig;
            survivors[r] = orig;
        }
        std::vector<std::size_t> kept;
        for (std::size_t r = 0; r < reduced.ptm.values.rows; ++r) {
            bool has_signal = false;
            for (std::size_t j = 0; j < reduced.ptm.values.cols && !has_signal; ++j)
                has_signal = reduced.mask.at(r, j) && reduced.ptm.values.at(r, j) > 0.0;
            if (has_signal)
                kept.push_back(r);
            else
                dropped.push_back(survivors[r]);
        }
        if (kept.empty())
            throw EmptyCellError("clarify_cell: no pixel carries any unsaturated signal");
        if (kept.size() < reduced.ptm.values.rows) {
            PixelTimeMatrix trimmed;
            trimmed.cell_id = reduced.ptm.cell_id;
            trimmed.saturation_level = reduced.ptm.saturation_level;
            trimmed.values = Matrix(kept.size(), reduced.ptm.values.cols);
            SaturationMask tmask(kept.size(), reduced.mask.cols, reduced.mask.saturation_level);
            for (std::size_t r = 0; r < kept.size(); ++r) {
                if (!reduced.ptm.coords.empty())
                    trimmed.coords.push_back(reduced.ptm.coords[kept[r]]);
                for (std::size_t j = 0; j < trimmed.values.cols; ++j) {
                    trimmed.values.at(r, j) = reduced.ptm.values.at(kept[r], j);
                    tmask.set(r, j, reduced.mask.at(kept[r], j));
                }
            }
            reduced.ptm = std::move(trimmed);
            reduced.mask = std::move(tmask);
        }
        std::sort(dropped.begin(), dropped.end());
    }

    WsvdResult res = wsvd_fit(reduced.ptm, reduced.mask, options);
    res.dropped_pixels = std::move(dropped);
    return res;
}

} // namespace calsig
