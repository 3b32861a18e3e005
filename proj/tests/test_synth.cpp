#include "doctest.h"

#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include "cisir/common.hpp"
#include "cisir/density.hpp"
#include "cisir/plot.hpp"
#include "cisir/synth.hpp"
#include "test_support.hpp"

using namespace cisir;

namespace {

std::size_t count_rare(const SynthDataset& s)
{
    std::size_t k = 0;
    for (bool r : rare_mask(s.table, s.descriptor)) k += r;
    return k;
}

std::size_t occurrences(const std::string& s, const std::string& what)
{
    std::size_t n = 0;
    for (auto p = s.find(what); p != std::string::npos; p = s.find(what, p + 1)) ++n;
    return n;
}

} // namespace

TEST_CASE("synthetic data is deterministic in the config")
{
    SynthConfig c;
    c.n = 500;
    const auto a = generate_synthetic(c);
    const auto b = generate_synthetic(c);
    CHECK(a.table.targets == b.table.targets);
    CHECK(a.table.features.values() == b.table.features.values());
    c.seed = 1;
    CHECK(generate_synthetic(c).table.targets != a.table.targets);
    CHECK(a.table.size() == 500);
    CHECK(a.table.dim() == 8);
}

TEST_CASE("tail preset: rare share and heavy tails")
{
    SynthConfig c;
    c.n = 5000;
    const auto s = generate_synthetic(c);
    const double share = static_cast<double>(count_rare(s)) / static_cast<double>(c.n);
    CHECK(share == doctest::Approx(c.rare_fraction).epsilon(0.1));
    CHECK(*s.descriptor.lower_threshold == -*s.descriptor.upper_threshold);
    CHECK(s.tail_power == c.tail_power);
    CHECK(s.imbalance_ratio == doctest::Approx(frequency_imbalance_ratio(s.table.targets)));

    // Excess kurtosis well above a Gaussian's.
    double m = 0.0, m2 = 0.0, m4 = 0.0;
    for (double y : s.table.targets) m += y / c.n;
    for (double y : s.table.targets) {
        m2 += (y - m) * (y - m) / c.n;
        m4 += std::pow(y - m, 4) / c.n;
    }
    CHECK(m4 / (m2 * m2) > 6.0);
}

TEST_CASE("minimum imbalance raises the tail power")
{
    SynthConfig c;
    c.n = 10000;
    c.tail_power = 1.0;
    c.min_imbalance = 1000.0;
    const auto s = generate_synthetic(c);
    CHECK(s.imbalance_ratio >= 1000.0);
    CHECK(s.tail_power > 1.0);
}

TEST_CASE("bimodal preset: a small distant mode")
{
    SynthConfig c;
    c.preset = SynthPreset::bimodal;
    c.n = 4000;
    const auto s = generate_synthetic(c);
    const auto rare = rare_mask(s.table, s.descriptor);
    std::size_t k = 0;
    double lo_rare = 1e300, hi_common = -1e300;
    for (std::size_t i = 0; i < rare.size(); ++i) {
        if (rare[i]) ++k, lo_rare = std::min(lo_rare, s.table.targets[i]);
        else hi_common = std::max(hi_common, s.table.targets[i]);
    }
    CHECK(static_cast<double>(k) / c.n == doctest::Approx(c.rare_fraction).epsilon(0.1));
    CHECK(lo_rare > hi_common); // the modes do not overlap
    CHECK(s.descriptor.rare_bins == std::set<int>{3});
}

TEST_CASE("synth config parsing and validation")
{
    const auto c = synth_config_from_json({{"preset", "bimodal"}, {"n", 123}, {"seed", 9}});
    CHECK(c.preset == SynthPreset::bimodal);
    CHECK(c.n == 123);
    CHECK(synth_config_from_json(to_json(c)).seed == 9);
    CHECK_THROWS_AS(parse_synth_preset("gamma"), ConfigError);
    SynthConfig bad;
    bad.rare_fraction = 0.7;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("SVG output is well formed")
{
    PlotSpec spec;
    spec.title = "a < b & c";
    spec.x_label = "x";
    spec.y_label = "y";
    spec.diagonal = true;
    spec.series.push_back({"line", {0, 1, 2}, {0, 1, 4}});
    PlotSeries pts{"points", {0.5, 1.5}, {1, 2}, "#d62728", true};
    spec.series.push_back(pts);
    const auto svg = render_svg(spec);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.rfind("</svg>") != std::string::npos);
    CHECK(svg.find("a &lt; b &amp; c") != std::string::npos);
    CHECK(occurrences(svg, "<circle") >= 2);
    CHECK(occurrences(svg, "<g") == occurrences(svg, "</g>"));
    CHECK(svg.find("nan") == std::string::npos);

    spec.log_x = true;
    spec.series = {{"sweep", {0.1, 1, 10}, {3, 2, 1}}};
    CHECK_NOTHROW(render_svg(spec));
    spec.series = {};
    CHECK_NOTHROW(render_svg(spec));
}

TEST_CASE("atomic writes leave no temporary behind")
{
    const auto path = test::temp_path("atomic/out.txt");
    write_file_atomic(path, "first");
    write_file_atomic(path, "second");
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == "second");
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(path.parent_path())) files += e.is_regular_file();
    CHECK(files == 1);
}
