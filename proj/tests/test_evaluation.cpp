#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cisir/evaluation.hpp"
#include "cisir/loss.hpp"
#include "test_support.hpp"

using namespace cisir;

namespace {

EvalReport report_with(double mae, double mae_r, double pcc, double pcc_r)
{
    EvalReport r;
    r.value[0] = mae;
    r.value[1] = mae_r;
    r.value[2] = (mae + mae_r) / 2;
    r.value[3] = pcc;
    r.value[4] = pcc_r;
    r.value[5] = (pcc + pcc_r) / 2;
    return r;
}

std::string rounded(double v)
{
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(3);
    os << v;
    return os.str();
}

} // namespace

TEST_CASE("perfect predictions")
{
    const std::vector<double> y{1, 3, 2, 8, 5};
    const std::vector<bool> rare{false, false, false, true, true};
    const auto r = evaluate(y, y, rare);
    CHECK(*r.mae() == 0.0);
    CHECK(*r.pcc() == doctest::Approx(1.0));
    CHECK(*r.aore() == 0.0);
    CHECK(*r.aorc() == doctest::Approx(1.0));
    CHECK(r.n == 5);
    CHECK(r.n_rare == 2);
    CHECK(r.rare_fraction() == doctest::Approx(0.4));
    r.check_invariants();
}

TEST_CASE("hybrid metric arithmetic from published components")
{
    CHECK(*average_of(0.184, 0.441) == doctest::Approx(0.3125));
    CHECK(*average_of(0.274, 0.703) == doctest::Approx(0.4885));
    // No single rounding rule maps 0.3125 -> 0.313 and 0.4885 -> 0.488; the reported
    // values come from unrounded components, so agree to half a unit in the last digit.
    CHECK(std::abs(*average_of(0.184, 0.441) - 0.313) <= 5e-4 + 1e-12);
    CHECK(std::abs(*average_of(0.274, 0.703) - 0.488) <= 5e-4 + 1e-12);
    CHECK(rounded(*average_of(0.274, 0.703)) == "0.488");
    CHECK_FALSE(average_of(0.3, std::nullopt).has_value());
}

TEST_CASE("undefined correlations are missing")
{
    const std::vector<double> y{1, 2, 3, 4};
    const std::vector<double> flat(4, 2.0);
    const auto r = evaluate(y, flat, std::vector<bool>{false, false, true, true});
    CHECK(r.mae().has_value());
    CHECK_FALSE(r.pcc().has_value());
    CHECK_FALSE(r.aorc().has_value());
    CHECK(r.aore().has_value());

    // One rare instance: MAE_R reported, PCC_R suppressed.
    const auto one = evaluate(y, std::vector<double>{1.5, 2, 2.5, 5}, std::vector<bool>{false, false, false, true});
    CHECK(*one.mae_rare() == doctest::Approx(1.0));
    CHECK_FALSE(one.pcc_rare().has_value());
    CHECK(one.pcc().has_value());

    const auto none = evaluate(y, y, std::vector<bool>(4, false));
    CHECK_FALSE(none.mae_rare().has_value());
    CHECK_FALSE(none.aore().has_value());
    CHECK(pearson(std::vector<double>{1}, std::vector<double>{2}) == std::nullopt);
}

TEST_CASE("rare metrics equal full metrics on the rare subset")
{
    const auto y = test::random_vector(200, 1, -3, 3);
    const auto p = test::random_vector(200, 2, -3, 3);
    std::vector<bool> rare(200);
    std::vector<double> ry;
    std::vector<double> rp;
    for (std::size_t i = 0; i < 200; ++i) {
        rare[i] = std::abs(y[i]) > 2.0;
        if (rare[i]) ry.push_back(y[i]), rp.push_back(p[i]);
    }
    const auto full = evaluate(y, p, rare);
    const auto sub = evaluate(ry, rp, std::vector<bool>(ry.size(), true));
    CHECK(*full.mae_rare() == doctest::Approx(*sub.mae()));
    CHECK(*full.pcc_rare() == doctest::Approx(*sub.pcc()));
}

TEST_CASE("evaluation PCC equals the loss correlation under uniform weights")
{
    const auto y = test::random_vector(60, 5);
    const auto p = test::random_vector(60, 6);
    const std::vector<double> w(60, 1.0 / 60);
    CHECK(*pearson(y, p) == doctest::Approx(1.0 - wpcc_loss(y, p, w)).epsilon(1e-12));
}

TEST_CASE("aggregate: hand standard error")
{
    std::vector<EvalReport> runs;
    for (double m : {0.1, 0.2, 0.3}) runs.push_back(report_with(m, 0.5, 0.6, 0.7));
    const auto a = aggregate(runs);
    CHECK(*a.mae() == doctest::Approx(0.2));
    CHECK(*a.se(Metric::mae) == doctest::Approx(0.1 / std::sqrt(3.0)));
    CHECK(*a.se(Metric::pcc) == doctest::Approx(0.0));
    CHECK(a.runs == 3);
    CHECK(a.per_run[0] == std::vector<double>{0.1, 0.2, 0.3});
    a.check_invariants();

    std::vector<EvalReport> same(4, report_with(0.2, 0.4, 0.5, 0.6));
    const auto s = aggregate(same);
    for (Metric m : kAllMetrics) CHECK(*s.se(m) == doctest::Approx(0.0));

    const auto single = aggregate(std::vector<EvalReport>{report_with(0.1, 0.2, 0.3, 0.4)});
    CHECK_FALSE(single.se(Metric::mae).has_value());
    CHECK(*single.mae() == doctest::Approx(0.1));
}

TEST_CASE("aggregate keeps the hybrid identities exact")
{
    std::vector<EvalReport> runs;
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto y = test::random_vector(80, s);
        const auto p = test::random_vector(80, s + 50);
        std::vector<bool> rare(80);
        for (std::size_t i = 0; i < 80; ++i) rare[i] = y[i] > 0.6;
        runs.push_back(evaluate(y, p, rare));
    }
    const auto a = aggregate(runs);
    CHECK(*a.aore() == (*a.mae() + *a.mae_rare()) / 2);
    CHECK(*a.aorc() == (*a.pcc() + *a.pcc_rare()) / 2);
    a.check_invariants();
    auto broken = a;
    broken.value[2] = *broken.value[2] + 0.1;
    CHECK_THROWS_AS(broken.check_invariants(), Error);
}

TEST_CASE("mean report collapses a group into one run")
{
    std::vector<EvalReport> folds{report_with(0.1, 0.3, 0.5, 0.7), report_with(0.3, 0.5, 0.7, 0.9)};
    const auto m = mean_report(folds);
    CHECK(m.runs == 1);
    CHECK(*m.mae() == doctest::Approx(0.2));
    CHECK_FALSE(m.se(Metric::mae).has_value());
}

TEST_CASE("significance rule")
{
    std::vector<EvalReport> a_runs;
    std::vector<EvalReport> b_runs;
    for (double m : {0.10, 0.11, 0.12}) a_runs.push_back(report_with(m, 0.5, 0.6, 0.7));
    for (double m : {0.20, 0.21, 0.22}) b_runs.push_back(report_with(m, 0.5, 0.6, 0.7));
    const auto a = aggregate(a_runs);
    const auto b = aggregate(b_runs);
    CHECK(significantly_different(a, b, Metric::mae));
    CHECK_FALSE(significantly_different(a, b, Metric::pcc)); // identical
    std::vector<EvalReport> c_runs;
    for (double m : {0.05, 0.12, 0.19}) c_runs.push_back(report_with(m, 0.5, 0.6, 0.7));
    CHECK_FALSE(significantly_different(a, aggregate(c_runs), Metric::mae));
}

TEST_CASE("tables mark best and second best")
{
    std::vector<NamedReport> rows{{"A", report_with(0.1, 0.5, 0.6, 0.7)},
                                  {"B", report_with(0.2, 0.4, 0.8, 0.6)},
                                  {"C", report_with(0.3, 0.6, 0.5, 0.5)}};
    const auto text = render_text_table(rows);
    CHECK(text.find("0.100 (1)") != std::string::npos);
    CHECK(text.find("0.200 (2)") != std::string::npos);
    CHECK(text.find("0.800 (1)") != std::string::npos); // PCC is maximized
    CHECK(text.find("se intervals do not overlap") != std::string::npos);
    const auto csv = render_csv(rows);
    CHECK(csv.rfind("method,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    const auto j = to_json(rows[0].second);
    CHECK(j["aore"].get<double>() == doctest::Approx(0.3));
}

TEST_CASE("metric names and directions")
{
    CHECK(to_string(Metric::aore) == "aore");
    CHECK(lower_is_better(Metric::mae_rare));
    CHECK_FALSE(lower_is_better(Metric::aorc));
    CHECK_THROWS_AS(evaluate(std::vector<double>{1, 2}, std::vector<double>{1}, std::vector<bool>{false, false}), Error);
}
