#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace cisir {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
    bool points = false; // scatter instead of a polyline
    double radius = 1.6;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool diagonal = false; // y = x reference line
    std::vector<PlotSeries> series;
};

/// Static SVG rendering with linear (or log-x) axes and a legend.
std::string render_svg(const PlotSpec& spec);

/// Writes `contents` to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

inline void write_svg(const std::filesystem::path& path, const PlotSpec& spec)
{
    write_file_atomic(path, render_svg(spec));
}

} // namespace cisir
