#pragma once

#include <string>
#include <vector>

namespace segadapt {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

// Minimal line chart written as a lossless PNG: axes, ticks, one polyline per
// series, legend in the top-right corner.
void line_plot(const std::string& path, const std::string& title, const std::string& xlabel,
               const std::string& ylabel, const std::vector<Series>& series, int width = 800,
               int height = 520);

}  // namespace segadapt
