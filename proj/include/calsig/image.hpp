#ifndef CALSIG_IMAGE_HPP
#define CALSIG_IMAGE_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace calsig {

/// Movie of equal-size 8-bit grayscale frames taken at a fixed interval.
struct ImageStack {
    int width = 0;
    int height = 0;
    double frame_interval_s = 10.0;
    std::vector<std::vector<std::uint8_t>> frames;  // row-major pixels

    std::uint8_t at(std::size_t frame, int x, int y) const {
        return frames[frame][static_cast<std::size_t>(y) * width + x];
    }
    std::uint8_t& at(std::size_t frame, int x, int y) {
        return frames[frame][static_cast<std::size_t>(y) * width + x];
    }
    std::size_t frame_count() const { return frames.size(); }
};

/// Real-valued image over a window of the frame; (origin_x, origin_y) is
/// the frame coordinate of the window's top-left pixel.
struct RealImage {
    int width = 0;
    int height = 0;
    int origin_x = 0;
    int origin_y = 0;
    std::vector<double> values;

    RealImage() = default;
    RealImage(int w, int h, int ox = 0, int oy = 0)
        : width(w), height(h), origin_x(ox), origin_y(oy),
          values(static_cast<std::size_t>(w) * h, 0.0) {}

    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

// Binary PGM (P5, maxval 255).
void write_pgm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& pixels);
std::vector<std::uint8_t> read_pgm(const std::string& path, int& width, int& height);

// Movie directory: frame_%04d.pgm plus manifest.json with width, height,
// frame_count and frame_interval_seconds.
void save_movie(const ImageStack& stack, const std::string& dir);
ImageStack load_movie(const std::string& dir);

} // namespace calsig

#endif
