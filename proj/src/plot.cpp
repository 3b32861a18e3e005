#include "cisir/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "cisir/common.hpp"

namespace cisir {

namespace {

constexpr double kWidth = 640, kHeight = 440;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 55;

std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string num(double v)
{
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v)
    {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void finish()
    {
        if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
        if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double pad = 0.04 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
};

} // namespace

std::string render_svg(const PlotSpec& spec)
{
    auto tx = [&](double x) { return spec.log_x ? std::log10(x) : x; };
    Range rx, ry;
    for (const auto& s : spec.series) {
        for (double x : s.x) {
            if (!spec.log_x || x > 0) rx.add(tx(x));
        }
        for (double y : s.y) ry.add(y);
    }
    if (spec.diagonal) {
        const double lo = std::min(rx.lo, ry.lo), hi = std::max(rx.hi, ry.hi);
        rx.lo = ry.lo = lo;
        rx.hi = ry.hi = hi;
    }
    rx.finish();
    ry.finish();
    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (tx(x) - rx.lo) / (rx.hi - rx.lo) * pw; };
    auto py = [&](double y) { return kTop + (ry.hi - y) / (ry.hi - ry.lo) * ph; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(spec.title)
       << "</text>\n";
    os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double fx = rx.lo + (rx.hi - rx.lo) * i / 5.0;
        const double fy = ry.lo + (ry.hi - ry.lo) * i / 5.0;
        const double x = kLeft + pw * i / 5.0;
        const double y = kTop + ph - ph * i / 5.0;
        os << "<line x1=\"" << x << "\" y1=\"" << kTop + ph << "\" x2=\"" << x << "\" y2=\"" << kTop + ph + 5
           << "\" stroke=\"#333\"/>";
        os << "<text x=\"" << x << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">"
           << num(spec.log_x ? std::pow(10.0, fx) : fx) << "</text>\n";
        os << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << y << "\" x2=\"" << kLeft << "\" y2=\"" << y
           << "\" stroke=\"#333\"/>";
        os << "<text x=\"" << kLeft - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << num(fy) << "</text>\n";
    }
    os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
       << escape(spec.x_label) << "</text>\n";
    os << "<text transform=\"translate(16," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
       << escape(spec.y_label) << "</text>\n";
    if (spec.diagonal) {
        os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop
           << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
    }
    for (const auto& s : spec.series) {
        const std::size_t n = std::min(s.x.size(), s.y.size());
        if (s.points) {
            os << "<g fill=\"" << s.color << "\" fill-opacity=\"0.6\">";
            for (std::size_t i = 0; i < n; ++i) {
                if (!std::isfinite(s.y[i]) || (spec.log_x && s.x[i] <= 0)) continue;
                os << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"" << s.radius << "\"/>";
            }
            os << "</g>\n";
        } else {
            os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.8\" points=\"";
            for (std::size_t i = 0; i < n; ++i) {
                if (!std::isfinite(s.y[i]) || (spec.log_x && s.x[i] <= 0)) continue;
                os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
            }
            os << "\"/>\n";
        }
    }
    double ly = kTop + 14;
    for (const auto& s : spec.series) {
        if (s.label.empty()) continue;
        os << "<rect x=\"" << kLeft + pw - 150 << "\" y=\"" << ly - 9 << "\" width=\"10\" height=\"10\" fill=\""
           << s.color << "\"/>";
        os << "<text x=\"" << kLeft + pw - 135 << "\" y=\"" << ly << "\">" << escape(s.label) << "</text>\n";
        ly += 16;
    }
    os << "</svg>\n";
    return os.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write '" + path.string() + "'");
        out << contents;
        if (!out) throw Error("write failed for '" + path.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

} // namespace cisir
