#ifndef CALSIG_SEGMENTATION_HPP
#define CALSIG_SEGMENTATION_HPP

#include <cstddef>
#include <vector>

#include "calsig/cell_data.hpp"
#include "calsig/image.hpp"

namespace calsig {

enum class ThresholdMode { otsu, fixed };

struct SegmentationParams {
    double blur_sigma = 2.0;
    ThresholdMode threshold_mode = ThresholdMode::otsu;
    // Used with ThresholdMode::fixed: cutoff on the min-max scaled image,
    // in [0, 1); pixels strictly above it are foreground.
    double fixed_threshold = 0.5;
    std::size_t min_area = 20;
};

/// Index of the frame with maximum total intensity (earliest on ties).
std::size_t find_peak_frame(const ImageStack& stack);

/// Pixels x frames matrix over a rectangular region, rows in raster order.
PixelTimeMatrix rough_matrix(const ImageStack& stack, const RoughRoi& roi);

/// First-EigenPixel magnitudes scattered back onto the pixel grid; the
/// returned image covers the bounding box of the matrix coordinates.
RealImage eigenpixel_image(const PixelTimeMatrix& ptm);

/// Gaussian blur -> global threshold -> distance-transform watershed ->
/// 4-connected labeling -> minimum-area filter. Masks carry frame
/// coordinates and are disjoint; ids are sequential in raster order of the
/// masks' first pixels.
std::vector<CellMask> segment(const RealImage& eigen_image, const SegmentationParams& params);

/// Like rough_matrix but over a mask's pixels (raster order).
PixelTimeMatrix final_matrix(const ImageStack& stack, const CellMask& mask);

// Building blocks used by segment(); exposed for tests.
RealImage gaussian_blur(const RealImage& img, double sigma);
int otsu_threshold(const std::vector<std::size_t>& histogram);
std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& foreground,
                                               int width, int height);

} // namespace calsig

#endif
