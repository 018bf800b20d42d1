#include "calsig/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "calsig/errors.hpp"
#include "calsig/rng.hpp"

namespace calsig {

double pixel_profile_value(PixelProfile kind, std::size_t i, std::size_t n) {
    switch (kind) {
        case PixelProfile::plateau: {
            // Bright, mid and faint pixels interleaved over the index: a
            // textured cell whose products with the default signal stay
            // clear of the clip level.
            switch (i % 3) {
                case 0: return 1.0;
                case 1: return 0.13;
                default: return 0.02;
            }
        }
        case PixelProfile::raised_sine: {
            double t = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
            return 0.5 + 0.5 * std::sin(std::numbers::pi * t);
        }
    }
    return 0.0;
}

double signal_profile_value(SignalProfile kind, std::size_t j, std::size_t m) {
    double t = m > 1 ? static_cast<double>(j) / static_cast<double>(m - 1) : 0.0;
    switch (kind) {
        case SignalProfile::burst_train: {
            // Rectangular bursts at fractional positions of the 512-frame
            // reference run, heights decaying 1.4 -> 0.7.
            static constexpr double starts[4] = {8.0 / 512, 36.0 / 512, 64.0 / 512, 92.0 / 512};
            static constexpr double ends[4] = {24.0 / 512, 52.0 / 512, 80.0 / 512, 108.0 / 512};
            static constexpr double heights[4] = {1.4, 1.15, 0.9, 0.7};
            double pos = m > 0 ? static_cast<double>(j) / static_cast<double>(m) : 0.0;
            for (int b = 0; b < 4; ++b)
                if (pos >= starts[b] && pos < ends[b]) return heights[b];
            return 0.18;
        }
        case SignalProfile::decaying_sine: {
            double osc = std::sin(2.0 * std::numbers::pi * 3.0 * t);
            return 0.2 + 0.9 * std::exp(-6.0 * t) * osc * osc;
        }
    }
    return 0.0;
}

SimDataset generate(const SimConfig& config) {
    if (config.n_pixels < 1 || config.n_frames < 1)
        throw InvalidInputError("generate: n_pixels and n_frames must be positive");
    if (config.noise_scale < 0.0)
        throw InvalidInputError("generate: noise_scale must be nonnegative");

    const std::size_t n = config.n_pixels, m = config.n_frames;
    SimDataset ds;
    ds.config = config;

    std::vector<double> up(n), vp(m);
    for (std::size_t i = 0; i < n; ++i) up[i] = pixel_profile_value(config.pixel_profile, i, n);
    for (std::size_t j = 0; j < m; ++j) vp[j] = signal_profile_value(config.signal_profile, j, m);

    ds.truth = Matrix(n, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) ds.truth.at(i, j) = up[i] * vp[j];

    // Noise draws in row-major order from the "sim.noise" sub-stream.
    Rng rng = Rng::stream(config.seed, "sim.noise");
    ds.noisy = Matrix(n, m);
    ds.saturated = Matrix(n, m);
    ds.mask = SaturationMask(n, m, config.clip_level);
    std::size_t clipped = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double t = ds.truth.at(i, j);
            double x = t * (1.0 + config.noise_scale * rng.next_normal());
            if (x < 0.0) x = 0.0;
            ds.noisy.at(i, j) = x;
            if (x > config.clip_level) {
                ds.mask.set(i, j, 0);
                ds.saturated.at(i, j) = config.clip_level;
                ++clipped;
            } else {
                ds.saturated.at(i, j) = x;
            }
        }
    ds.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n * m);

    double nu = 0.0, nv = 0.0;
    for (double v : up) nu += v * v;
    for (double v : vp) nv += v * v;
    nu = std::sqrt(nu);
    nv = std::sqrt(nv);
    ds.true_scale = nu * nv;
    ds.true_u.resize(n);
    ds.true_v.resize(m);
    for (std::size_t i = 0; i < n; ++i) ds.true_u[i] = up[i] / nu;
    for (std::size_t j = 0; j < m; ++j) ds.true_v[j] = vp[j] / nv;
    return ds;
}

RecoveryError recovery_error(const std::vector<double>& estimate,
                             const std::vector<double>& truth) {
    if (estimate.size() != truth.size())
        throw InvalidInputError("recovery_error: vector lengths differ");
    double dot = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) dot += estimate[i] * truth[i];
    const double sign = dot < 0.0 ? -1.0 : 1.0;
    RecoveryError out;
    out.error_curve.resize(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        out.error_curve[i] = std::abs(sign * estimate[i] - truth[i]);
        out.error_sum += out.error_curve[i];
    }
    return out;
}

std::vector<std::pair<int, int>> disk_pixels(const DiskLayout& layout) {
    std::vector<std::pair<int, int>> pixels;
    const int r = static_cast<int>(std::ceil(layout.radius));
    const double r2 = layout.radius * layout.radius;
    for (int y = layout.cy - r; y <= layout.cy + r; ++y)
        for (int x = layout.cx - r; x <= layout.cx + r; ++x) {
            double dx = x - layout.cx, dy = y - layout.cy;
            if (dx * dx + dy * dy <= r2) pixels.emplace_back(x, y);
        }
    return pixels;
}

double fit_disk_radius(std::size_t n) {
    DiskLayout probe;
    probe.cx = probe.cy = 0;
    for (double r = 0.0;; r += 0.5) {
        probe.radius = r;
        if (disk_pixels(probe).size() >= n) return r;
    }
}

ImageStack render_movie(const SimDataset& dataset, const DiskLayout& layout) {
    const std::size_t n = dataset.noisy.rows, m = dataset.noisy.cols;
    auto pixels = disk_pixels(layout);
    if (pixels.size() < n)
        throw InvalidInputError("render_movie: disk holds fewer pixels than the dataset rows");
    for (std::size_t i = 0; i < n; ++i) {
        auto [x, y] = pixels[i];
        if (x < 0 || y < 0 || x >= layout.frame_width || y >= layout.frame_height)
            throw InvalidInputError("render_movie: disk extends outside the frame");
    }

    const double gain = 255.0 / dataset.config.clip_level;
    ImageStack stack;
    stack.width = layout.frame_width;
    stack.height = layout.frame_height;
    stack.frame_interval_s = dataset.config.frame_interval_s;
    stack.frames.assign(m, std::vector<std::uint8_t>(
                               static_cast<std::size_t>(layout.frame_width) *
                                   static_cast<std::size_t>(layout.frame_height),
                               0));
    for (std::size_t f = 0; f < m; ++f)
        for (std::size_t i = 0; i < n; ++i) {
            double v = std::round(dataset.noisy.at(i, f) * gain);
            if (v > 255.0) v = 255.0;
            if (v < 0.0) v = 0.0;
            auto [x, y] = pixels[i];
            stack.at(f, x, y) = static_cast<std::uint8_t>(v);
        }
    return stack;
}

} // namespace calsig
