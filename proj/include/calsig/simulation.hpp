#ifndef CALSIG_SIMULATION_HPP
#define CALSIG_SIMULATION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "calsig/cell_data.hpp"
#include "calsig/image.hpp"
#include "calsig/matrix.hpp"
#include "calsig/wsvd.hpp"

namespace calsig {

/// Pixel brightness profiles over the pixel index.
///
/// `plateau` (default) is a three-level textured cell: bright, mid and
/// faint pixels interleaved over the index. Its products with the default
/// signal stay clear of the clip level, so saturation happens only where
/// the true signal genuinely towers above the clip. `raised_sine` is the
/// smooth arch 0.5 + 0.5*sin(pi*i/(n-1)).
enum class PixelProfile { plateau, raised_sine };

/// Signal profiles over the frame index.
///
/// `burst_train` (default) is a decaying train of four rectangular bursts
/// (heights 1.4, 1.15, 0.9, 0.7 on a 0.18 baseline). `decaying_sine` is
/// the smooth burst 0.2 + 0.9*exp(-6t)*sin^2(2*pi*3*t), t = j/(m-1).
enum class SignalProfile { burst_train, decaying_sine };

struct SimConfig {
    std::size_t n_pixels = 131;
    std::size_t n_frames = 512;
    PixelProfile pixel_profile = PixelProfile::plateau;
    SignalProfile signal_profile = SignalProfile::burst_train;
    double clip_level = 0.50;
    double noise_scale = 0.30;  // sigma0; noise sd is sigma0 * u_i * v_j
    std::uint64_t seed = 1;
    double frame_interval_s = 10.0;
};

struct SimDataset {
    SimConfig config;
    Matrix truth;      // u_i * v_j, exactly rank 1
    Matrix noisy;      // truth + noise, clipped below at 0
    Matrix saturated;  // noisy clipped above at clip_level
    SaturationMask mask;
    std::vector<double> true_u;  // unit norm
    std::vector<double> true_v;  // unit norm
    double true_scale = 0.0;
    double clip_fraction = 0.0;
};

double pixel_profile_value(PixelProfile kind, std::size_t i, std::size_t n);
double signal_profile_value(SignalProfile kind, std::size_t j, std::size_t m);

SimDataset generate(const SimConfig& config);

struct RecoveryError {
    std::vector<double> error_curve;  // per-entry |estimate - truth| after sign alignment
    double error_sum = 0.0;
};

RecoveryError recovery_error(const std::vector<double>& estimate,
                             const std::vector<double>& truth);

/// Disk placement for rendering a dataset into a movie frame. A negative
/// radius asks the simulate command to fit the smallest disk that holds
/// every dataset row.
struct DiskLayout {
    int frame_width = 64;
    int frame_height = 64;
    int cx = 32;
    int cy = 32;
    double radius = -1.0;
};

/// Disk pixels in raster order (the first n_pixels of them host the
/// dataset's rows).
std::vector<std::pair<int, int>> disk_pixels(const DiskLayout& layout);

/// Renders the noisy dataset as a bright disk on dark frames, quantized to
/// 8 bits with gain 255/clip_level so detector saturation lands exactly at
/// 255 where the dataset clipped.
ImageStack render_movie(const SimDataset& dataset, const DiskLayout& layout);

/// Smallest radius whose disk holds at least n pixels.
double fit_disk_radius(std::size_t n);

} // namespace calsig

#endif
