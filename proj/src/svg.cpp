#include "calsig/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "calsig/errors.hpp"

namespace calsig {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 480;
constexpr int kMargin = 56;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct AxisScale {
    double lo, hi;
    double map(double v, double pix_lo, double pix_hi) const {
        double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
        return pix_lo + t * (pix_hi - pix_lo);
    }
};

AxisScale pad_scale(double lo, double hi) {
    if (hi <= lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

void open_svg(std::ofstream& out, const std::string& path, const std::string& title) {
    out.open(path, std::ios::binary);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
        << title << "</text>\n";
}

void axes(std::ofstream& out, const std::string& x_label, const std::string& y_label,
          const AxisScale& xs, const AxisScale& ys) {
    out << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\""
        << kWidth - kMargin << "\" y2=\"" << kHeight - kMargin
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin
        << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
        << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
    out << "<text x=\"16\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" font-size=\"12\" "
        << "transform=\"rotate(-90 16 " << kHeight / 2 << ")\">" << y_label << "</text>\n";
    out << "<text x=\"" << kMargin << "\" y=\"" << kHeight - kMargin + 16
        << "\" font-size=\"10\">" << num(xs.lo) << "</text>\n";
    out << "<text x=\"" << kWidth - kMargin << "\" y=\"" << kHeight - kMargin + 16
        << "\" text-anchor=\"end\" font-size=\"10\">" << num(xs.hi) << "</text>\n";
    out << "<text x=\"" << kMargin - 4 << "\" y=\"" << kHeight - kMargin
        << "\" text-anchor=\"end\" font-size=\"10\">" << num(ys.lo) << "</text>\n";
    out << "<text x=\"" << kMargin - 4 << "\" y=\"" << kMargin + 4
        << "\" text-anchor=\"end\" font-size=\"10\">" << num(ys.hi) << "</text>\n";
}

} // namespace

void write_scatter_svg(const std::string& path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::vector<ScatterSeries>& series) {
    double xlo = 0, xhi = 0, ylo = 0, yhi = 0;
    bool first = true;
    for (const auto& s : series)
        for (auto [x, y] : s.points) {
            if (first) {
                xlo = xhi = x;
                ylo = yhi = y;
                first = false;
            }
            xlo = std::min(xlo, x);
            xhi = std::max(xhi, x);
            ylo = std::min(ylo, y);
            yhi = std::max(yhi, y);
        }
    AxisScale xs = pad_scale(xlo, xhi), ys = pad_scale(ylo, yhi);

    std::ofstream out;
    open_svg(out, path, title);
    axes(out, x_label, y_label, xs, ys);
    double legend_y = kMargin;
    for (const auto& s : series) {
        for (auto [x, y] : s.points) {
            double px = xs.map(x, kMargin, kWidth - kMargin);
            double py = ys.map(y, kHeight - kMargin, kMargin);
            if (s.cross) {
                out << "<path d=\"M" << num(px - 4) << ' ' << num(py - 4) << " L" << num(px + 4)
                    << ' ' << num(py + 4) << " M" << num(px - 4) << ' ' << num(py + 4) << " L"
                    << num(px + 4) << ' ' << num(py - 4) << "\" stroke=\"" << s.color
                    << "\" fill=\"none\"/>\n";
            } else {
                out << "<circle cx=\"" << num(px) << "\" cy=\"" << num(py)
                    << "\" r=\"4\" stroke=\"" << s.color << "\" fill=\"none\"/>\n";
            }
        }
        out << "<text x=\"" << kWidth - kMargin - 4 << "\" y=\"" << num(legend_y)
            << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << s.color << "\">" << s.name
            << "</text>\n";
        legend_y += 16;
    }
    out << "</svg>\n";
}

namespace {

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    if (v.size() == 1) return v[0];
    double pos = q * static_cast<double>(v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

} // namespace

void write_box_svg(const std::string& path, const std::string& title,
                   const std::string& y_label, const std::vector<BoxSeries>& series) {
    double ylo = 0, yhi = 0;
    bool first = true;
    for (const auto& s : series)
        for (double v : s.values) {
            if (first) {
                ylo = yhi = v;
                first = false;
            }
            ylo = std::min(ylo, v);
            yhi = std::max(yhi, v);
        }
    AxisScale ys = pad_scale(ylo, yhi);

    std::ofstream out;
    open_svg(out, path, title);
    axes(out, "", y_label, {0.0, 1.0}, ys);

    const double span = static_cast<double>(kWidth - 2 * kMargin);
    const double slot = span / static_cast<double>(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        if (s.values.empty()) continue;
        double cx = kMargin + slot * (static_cast<double>(i) + 0.5);
        double box_w = std::min(60.0, slot * 0.5);
        double q1 = quantile(s.values, 0.25);
        double q2 = quantile(s.values, 0.5);
        double q3 = quantile(s.values, 0.75);
        double vmin = *std::min_element(s.values.begin(), s.values.end());
        double vmax = *std::max_element(s.values.begin(), s.values.end());
        auto ymap = [&](double v) { return ys.map(v, kHeight - kMargin, kMargin); };

        out << "<line x1=\"" << num(cx) << "\" y1=\"" << num(ymap(vmin)) << "\" x2=\"" << num(cx)
            << "\" y2=\"" << num(ymap(vmax)) << "\" stroke=\"black\"/>\n";
        out << "<rect x=\"" << num(cx - box_w / 2) << "\" y=\"" << num(ymap(q3)) << "\" width=\""
            << num(box_w) << "\" height=\"" << num(ymap(q1) - ymap(q3))
            << "\" stroke=\"black\" fill=\"lightsteelblue\"/>\n";
        out << "<line x1=\"" << num(cx - box_w / 2) << "\" y1=\"" << num(ymap(q2)) << "\" x2=\""
            << num(cx + box_w / 2) << "\" y2=\"" << num(ymap(q2)) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << num(cx) << "\" y=\"" << kHeight - kMargin + 16
            << "\" text-anchor=\"middle\" font-size=\"12\">" << s.name << "</text>\n";
    }
    out << "</svg>\n";
}

} // namespace calsig
