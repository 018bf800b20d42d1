#ifndef CALSIG_CELL_DATA_HPP
#define CALSIG_CELL_DATA_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "calsig/matrix.hpp"

namespace calsig {

/// Inclusive rectangular bounds of a hand-drawn rough region.
struct RoughRoi {
    std::int64_t cell_id = 0;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
    std::size_t area() const {
        return static_cast<std::size_t>(width()) * static_cast<std::size_t>(height());
    }
};

/// Final segmentation of one cell: a 4-connected set of frame coordinates.
struct CellMask {
    std::int64_t cell_id = 0;
    std::vector<std::pair<int, int>> pixels;  // (x, y), raster order
};

/// One cell's pixels x time intensity matrix with its coordinates.
struct PixelTimeMatrix {
    std::int64_t cell_id = 0;
    std::vector<std::pair<int, int>> coords;  // (x, y) per row
    Matrix values;                            // n pixels x m frames
    double saturation_level = 255.0;
};

} // namespace calsig

#endif
