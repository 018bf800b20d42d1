#ifndef CALSIG_SVG_HPP
#define CALSIG_SVG_HPP

#include <string>
#include <vector>

namespace calsig {

struct ScatterSeries {
    std::string name;
    std::string color;
    bool cross = false;  // crosses for treated, circles for control
    std::vector<std::pair<double, double>> points;
};

/// Fixed-size scatter plot with auto-scaled axes.
void write_scatter_svg(const std::string& path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::vector<ScatterSeries>& series);

struct BoxSeries {
    std::string name;
    std::vector<double> values;
};

/// Box-and-whisker plot: median, quartiles (linear interpolation), whiskers
/// at min/max.
void write_box_svg(const std::string& path, const std::string& title,
                   const std::string& y_label, const std::vector<BoxSeries>& series);

} // namespace calsig

#endif
