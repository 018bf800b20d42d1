#include "calsig/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

#include "calsig/errors.hpp"
#include "calsig/svd.hpp"

namespace calsig {

std::size_t find_peak_frame(const ImageStack& stack) {
    if (stack.frame_count() < 1)
        throw InvalidInputError("find_peak_frame: stack has no frames");
    std::size_t best = 0;
    std::uint64_t best_sum = 0;
    for (std::size_t f = 0; f < stack.frame_count(); ++f) {
        std::uint64_t sum = 0;
        for (std::uint8_t v : stack.frames[f]) sum += v;
        if (f == 0 || sum > best_sum) {
            best = f;
            best_sum = sum;
        }
    }
    return best;
}

namespace {

void validate_roi(const ImageStack& stack, const RoughRoi& roi) {
    if (roi.x0 > roi.x1 || roi.y0 > roi.y1 || roi.x0 < 0 || roi.y0 < 0 ||
        roi.x1 >= stack.width || roi.y1 >= stack.height)
        throw InvalidInputError("roi " + std::to_string(roi.cell_id) +
                                ": rectangle does not lie inside the frame");
    if (roi.area() < 16)
        throw InvalidInputError("roi " + std::to_string(roi.cell_id) +
                                ": area must be at least 16 pixels");
}

} // namespace

PixelTimeMatrix rough_matrix(const ImageStack& stack, const RoughRoi& roi) {
    validate_roi(stack, roi);
    const std::size_t n = roi.area();
    const std::size_t m = stack.frame_count();
    PixelTimeMatrix ptm;
    ptm.cell_id = roi.cell_id;
    ptm.saturation_level = 255.0;
    ptm.coords.reserve(n);
    ptm.values = Matrix(n, m);
    std::size_t r = 0;
    for (int y = roi.y0; y <= roi.y1; ++y)
        for (int x = roi.x0; x <= roi.x1; ++x, ++r) {
            ptm.coords.emplace_back(x, y);
            for (std::size_t f = 0; f < m; ++f)
                ptm.values.at(r, f) = static_cast<double>(stack.at(f, x, y));
        }
    return ptm;
}

RealImage eigenpixel_image(const PixelTimeMatrix& ptm) {
    if (ptm.coords.size() != ptm.values.rows)
        throw InvalidInputError("eigenpixel_image: coordinate count does not match matrix rows");
    SvdTriplet triplet = svd(ptm.values, 1);

    int min_x = ptm.coords[0].first, max_x = ptm.coords[0].first;
    int min_y = ptm.coords[0].second, max_y = ptm.coords[0].second;
    for (auto [x, y] : ptm.coords) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
    }
    RealImage img(max_x - min_x + 1, max_y - min_y + 1, min_x, min_y);
    for (std::size_t r = 0; r < ptm.coords.size(); ++r) {
        auto [x, y] = ptm.coords[r];
        img.at(x - min_x, y - min_y) = std::abs(triplet.left_vectors.at(r, 0));
    }
    return img;
}

RealImage gaussian_blur(const RealImage& img, double sigma) {
    if (sigma <= 0.0) return img;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int t = -radius; t <= radius; ++t) {
        kernel[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
        sum += kernel[t + radius];
    }
    for (double& k : kernel) k /= sum;

    auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };

    RealImage tmp(img.width, img.height, img.origin_x, img.origin_y);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t)
                acc += kernel[t + radius] * img.at(clampi(x + t, 0, img.width - 1), y);
            tmp.at(x, y) = acc;
        }
    RealImage out(img.width, img.height, img.origin_x, img.origin_y);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t)
                acc += kernel[t + radius] * tmp.at(x, clampi(y + t, 0, img.height - 1));
            out.at(x, y) = acc;
        }
    return out;
}

int otsu_threshold(const std::vector<std::size_t>& histogram) {
    const int bins = static_cast<int>(histogram.size());
    double total = 0.0, total_mean = 0.0;
    for (int b = 0; b < bins; ++b) {
        total += static_cast<double>(histogram[b]);
        total_mean += static_cast<double>(b) * static_cast<double>(histogram[b]);
    }
    int best = 0;
    double best_var = -1.0;
    double w0 = 0.0, sum0 = 0.0;
    for (int t = 0; t < bins - 1; ++t) {
        w0 += static_cast<double>(histogram[t]);
        sum0 += static_cast<double>(t) * static_cast<double>(histogram[t]);
        double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        double mu0 = sum0 / w0;
        double mu1 = (total_mean - sum0) / w1;
        double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (between > best_var) {
            best_var = between;
            best = t;
        }
    }
    return best;
}

// Exact squared Euclidean distance to the nearest background pixel
// (Felzenszwalb & Huttenlocher lower-envelope transform, row then column).
std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& foreground,
                                               int width, int height) {
    const double INF = 1e20;
    std::vector<double> dist(foreground.size());
    for (std::size_t i = 0; i < foreground.size(); ++i) dist[i] = foreground[i] ? INF : 0.0;

    auto transform_1d = [&](std::vector<double>& f, std::vector<double>& d, int n) {
        std::vector<int> v(n);
        std::vector<double> z(n + 1);
        int k = 0;
        v[0] = 0;
        z[0] = -INF;
        z[1] = INF;
        for (int q = 1; q < n; ++q) {
            double s;
            while (true) {
                s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
                if (s <= z[k]) {
                    --k;
                } else {
                    break;
                }
            }
            ++k;
            v[k] = q;
            z[k] = s;
            z[k + 1] = INF;
        }
        k = 0;
        for (int q = 0; q < n; ++q) {
            while (z[k + 1] < q) ++k;
            double dq = q - v[k];
            d[q] = dq * dq + f[v[k]];
        }
    };

    std::vector<double> f(std::max(width, height)), d(std::max(width, height));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) f[x] = dist[static_cast<std::size_t>(y) * width + x];
        transform_1d(f, d, width);
        for (int x = 0; x < width; ++x) dist[static_cast<std::size_t>(y) * width + x] = d[x];
    }
    for (int x = 0; x < width; ++x) {
        for (int y = 0; y < height; ++y) f[y] = dist[static_cast<std::size_t>(y) * width + x];
        transform_1d(f, d, height);
        for (int y = 0; y < height; ++y) dist[static_cast<std::size_t>(y) * width + x] = d[y];
    }
    return dist;
}

namespace {

struct FloodEntry {
    double dist;
    std::size_t raster;
    int label;
};

struct FloodOrder {
    bool operator()(const FloodEntry& a, const FloodEntry& b) const {
        if (a.dist != b.dist) return a.dist < b.dist;  // max-heap on distance
        return a.raster > b.raster;                    // then lowest raster first
    }
};

} // namespace

std::vector<CellMask> segment(const RealImage& eigen_image, const SegmentationParams& params) {
    const int w = eigen_image.width, h = eigen_image.height;
    const std::size_t npix = static_cast<std::size_t>(w) * h;
    for (double v : eigen_image.values)
        if (!(v >= 0.0))
            throw InvalidInputError("segment: image must be nonnegative and finite");

    RealImage blurred = gaussian_blur(eigen_image, params.blur_sigma);

    double lo = blurred.values[0], hi = blurred.values[0];
    for (double v : blurred.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi <= lo) throw NoCellFoundError("segment: image is flat, no foreground");

    std::vector<std::uint8_t> fg(npix, 0);
    if (params.threshold_mode == ThresholdMode::otsu) {
        std::vector<std::size_t> hist(256, 0);
        std::vector<int> bin_of(npix);
        for (std::size_t i = 0; i < npix; ++i) {
            double norm = (blurred.values[i] - lo) / (hi - lo);
            int b = std::min(255, static_cast<int>(norm * 256.0));
            bin_of[i] = b;
            ++hist[b];
        }
        int t = otsu_threshold(hist);
        for (std::size_t i = 0; i < npix; ++i) fg[i] = bin_of[i] > t;
    } else {
        for (std::size_t i = 0; i < npix; ++i) {
            double norm = (blurred.values[i] - lo) / (hi - lo);
            fg[i] = norm > params.fixed_threshold;
        }
    }
    bool any_fg = false;
    for (std::uint8_t b : fg) any_fg = any_fg || b;
    if (!any_fg) throw NoCellFoundError("segment: empty foreground after threshold");

    std::vector<double> dist = squared_distance_transform(fg, w, h);

    // Watershed seeds: 8-neighborhood local maxima of the distance map,
    // plateau components merged (8-connected).
    auto idx = [&](int x, int y) { return static_cast<std::size_t>(y) * w + x; };
    std::vector<std::uint8_t> is_max(npix, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::size_t i = idx(x, y);
            if (!fg[i]) continue;
            bool local_max = true;
            for (int dy = -1; dy <= 1 && local_max; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (!dx && !dy) continue;
                    int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    if (dist[idx(nx, ny)] > dist[i]) {
                        local_max = false;
                        break;
                    }
                }
            is_max[i] = local_max;
        }

    std::vector<int> label(npix, 0);
    int n_labels = 0;
    std::priority_queue<FloodEntry, std::vector<FloodEntry>, FloodOrder> flood;
    for (std::size_t i = 0; i < npix; ++i) {
        if (!is_max[i] || label[i]) continue;
        ++n_labels;
        // BFS over the 8-connected plateau of equal-maximum pixels.
        std::vector<std::size_t> stack{i};
        label[i] = n_labels;
        while (!stack.empty()) {
            std::size_t p = stack.back();
            stack.pop_back();
            flood.push({dist[p], p, n_labels});
            int px = static_cast<int>(p % w), py = static_cast<int>(p / w);
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (!dx && !dy) continue;
                    int nx = px + dx, ny = py + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    std::size_t q = idx(nx, ny);
                    if (is_max[q] && !label[q]) {
                        label[q] = n_labels;
                        stack.push_back(q);
                    }
                }
        }
    }

    // Priority flood: grow basins through 4-neighbors, deepest water first.
    while (!flood.empty()) {
        FloodEntry e = flood.top();
        flood.pop();
        int px = static_cast<int>(e.raster % w), py = static_cast<int>(e.raster / w);
        const int dx4[4] = {0, -1, 1, 0};
        const int dy4[4] = {-1, 0, 0, 1};
        for (int k = 0; k < 4; ++k) {
            int nx = px + dx4[k], ny = py + dy4[k];
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            std::size_t q = idx(nx, ny);
            if (!fg[q] || label[q]) continue;
            label[q] = e.label;
            flood.push({dist[q], q, e.label});
        }
    }

    // Enforce 4-connectivity within each basin, then the area filter.
    std::vector<CellMask> masks;
    std::vector<std::uint8_t> visited(npix, 0);
    for (std::size_t start = 0; start < npix; ++start) {
        if (!label[start] || visited[start]) continue;
        std::vector<std::size_t> component{start};
        visited[start] = 1;
        std::size_t head = 0;
        while (head < component.size()) {
            std::size_t p = component[head++];
            int px = static_cast<int>(p % w), py = static_cast<int>(p / w);
            const int dx4[4] = {0, -1, 1, 0};
            const int dy4[4] = {-1, 0, 0, 1};
            for (int k = 0; k < 4; ++k) {
                int nx = px + dx4[k], ny = py + dy4[k];
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                std::size_t q = idx(nx, ny);
                if (visited[q] || label[q] != label[start]) continue;
                visited[q] = 1;
                component.push_back(q);
            }
        }
        if (component.size() < params.min_area) continue;
        std::sort(component.begin(), component.end());
        CellMask mask;
        mask.cell_id = static_cast<std::int64_t>(masks.size());
        mask.pixels.reserve(component.size());
        for (std::size_t p : component)
            mask.pixels.emplace_back(static_cast<int>(p % w) + eigen_image.origin_x,
                                     static_cast<int>(p / w) + eigen_image.origin_y);
        masks.push_back(std::move(mask));
    }
    if (masks.empty())
        throw NoCellFoundError("segment: no component reaches the minimum area");
    return masks;
}

PixelTimeMatrix final_matrix(const ImageStack& stack, const CellMask& mask) {
    if (mask.pixels.empty()) throw InvalidInputError("final_matrix: empty mask");
    std::vector<std::pair<int, int>> pixels = mask.pixels;
    std::sort(pixels.begin(), pixels.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    for (auto [x, y] : pixels)
        if (x < 0 || y < 0 || x >= stack.width || y >= stack.height)
            throw InvalidInputError("final_matrix: mask pixel outside the frame");

    const std::size_t m = stack.frame_count();
    PixelTimeMatrix ptm;
    ptm.cell_id = mask.cell_id;
    ptm.saturation_level = 255.0;
    ptm.coords = std::move(pixels);
    ptm.values = Matrix(ptm.coords.size(), m);
    for (std::size_t r = 0; r < ptm.coords.size(); ++r) {
        auto [x, y] = ptm.coords[r];
        for (std::size_t f = 0; f < m; ++f)
            ptm.values.at(r, f) = static_cast<double>(stack.at(f, x, y));
    }
    return ptm;
}

} // namespace calsig
