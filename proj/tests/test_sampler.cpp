#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "cisir/common.hpp"
#include "cisir/sampler.hpp"
#include "test_support.hpp"

using namespace cisir;

namespace {

void check_epoch_cover(const BatchList& batches, std::size_t n)
{
    std::vector<int> seen(n, 0);
    for (const auto& b : batches)
        for (Index i : b) seen.at(i)++;
    for (int s : seen) CHECK(s == 1);
}

/// Kolmogorov-Smirnov distance between two samples.
double ks(std::vector<double> a, std::vector<double> b)
{
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

} // namespace

TEST_CASE("exact partition into sorted groups")
{
    const std::vector<double> y{6, 1, 4, 2, 5, 3}; // index of target t is at position
    const auto plan = build_groups(y, 3, 6);
    CHECK(plan.batches_per_epoch == 2);
    REQUIRE(plan.groups.size() == 3);
    CHECK(std::set<Index>(plan.groups[0].begin(), plan.groups[0].end()) == std::set<Index>{1, 3});
    CHECK(std::set<Index>(plan.groups[1].begin(), plan.groups[1].end()) == std::set<Index>{5, 2});
    CHECK(std::set<Index>(plan.groups[2].begin(), plan.groups[2].end()) == std::set<Index>{4, 0});
    const auto batches = epoch_batches(plan, 0, 0);
    REQUIRE(batches.size() == 2);
    for (const auto& b : batches) {
        REQUIRE(b.size() == 3);
        std::set<int> groups_hit;
        for (Index i : b)
            for (int g = 0; g < 3; ++g)
                if (std::count(plan.groups[g].begin(), plan.groups[g].end(), i)) groups_hit.insert(g);
        CHECK(groups_hit.size() == 3);
    }
    check_epoch_cover(batches, 6);
}

TEST_CASE("remainder handling and batch sizes")
{
    const auto y = test::random_vector(7, 1);
    const auto plan = build_groups(y, 3, 7);
    CHECK(plan.batches_per_epoch == 3);
    std::vector<std::size_t> sizes;
    for (const auto& g : plan.groups) sizes.push_back(g.size());
    CHECK(sizes == std::vector<std::size_t>{3, 3, 1});
    for (std::uint64_t e = 0; e < 10; ++e) {
        const auto b = epoch_batches(plan, 3, e);
        CHECK(b.size() == 3);
        CHECK(b[0].size() == 3);
        CHECK(b[1].size() == 2);
        CHECK(b[2].size() == 2);
        check_epoch_cover(b, 7);
    }
}

TEST_CASE("rare warning and suggested batch size")
{
    const auto y = test::random_vector(100, 2);
    const auto plan = build_groups(y, 10, 1);
    CHECK(plan.rare_warning);
    CHECK(plan.suggested_batch_size == 100);
    const auto fine = build_groups(y, 10, 10);
    CHECK_FALSE(fine.rare_warning);
    // Ceil arithmetic oracle for the suggestion.
    for (std::size_t rare = 1; rare <= 30; ++rare) {
        const auto p = build_groups(y, 5, rare);
        const std::size_t b = p.suggested_batch_size;
        CHECK((100 + b - 1) / b <= rare);
        if (b > 1) CHECK((100 + b - 2) / (b - 1) > rare);
    }
    CHECK_THROWS_AS(build_groups(y, 101, 1), ConfigError);
    CHECK_THROWS_AS(build_groups(y, 0, 1), ConfigError);
}

TEST_CASE("groups are contiguous blocks of the sorted order")
{
    std::mt19937_64 rng(3);
    for (int t = 0; t < 30; ++t) {
        const std::size_t n = 10 + rng() % 500;
        const std::size_t b = 1 + rng() % n;
        const auto y = test::random_vector(n, rng());
        const auto plan = build_groups(y, b, n);
        const std::size_t m = (n + b - 1) / b;
        CHECK(plan.batches_per_epoch == m);
        CHECK(plan.groups.size() * m >= n);
        CHECK(plan.size() == n);
        double prev_max = -1e300;
        for (const auto& g : plan.groups) {
            CHECK(g.size() <= m);
            double lo = 1e300;
            double hi = -1e300;
            for (Index i : g) lo = std::min(lo, y[i]), hi = std::max(hi, y[i]);
            CHECK(lo >= prev_max);
            prev_max = hi;
        }
        check_epoch_cover(epoch_batches(plan, rng(), rng() % 1000), n);
    }
}

TEST_CASE("batches are deterministic per seed and epoch")
{
    const auto y = test::random_vector(200, 4);
    const auto plan = build_groups(y, 16, 200);
    CHECK(epoch_batches(plan, 5, 2) == epoch_batches(plan, 5, 2));
    CHECK(epoch_batches(plan, 5, 2) != epoch_batches(plan, 5, 3));
    CHECK(epoch_batches(plan, 5, 2) != epoch_batches(plan, 6, 2));
    CHECK(uniform_epoch_batches(200, 16, 1, 1) == uniform_epoch_batches(200, 16, 1, 1));
}

TEST_CASE("every batch holds one member of a full rarest group")
{
    // Heavy right tail: the top group is the rarest.
    std::vector<double> y;
    for (int i = 0; i < 990; ++i) y.push_back(i * 1e-3);
    for (int i = 0; i < 10; ++i) y.push_back(100.0 + i);
    const auto plan = build_groups(y, 100, 10);
    REQUIRE(plan.groups.back().size() == plan.batches_per_epoch);
    const std::set<Index> top(plan.groups.back().begin(), plan.groups.back().end());
    for (std::uint64_t e = 0; e < 50; ++e) {
        for (const auto& b : epoch_batches(plan, 9, e)) {
            CHECK(std::count_if(b.begin(), b.end(), [&](Index i) { return top.count(i) > 0; }) == 1);
        }
    }
}

TEST_CASE("uniform batches")
{
    const auto b = uniform_epoch_batches(6, 3, 0, 0);
    CHECK(b.size() == 2);
    check_epoch_cover(b, 6);
    const auto one = uniform_epoch_batches(9, 9, 4, 2);
    REQUIRE(one.size() == 1);
    check_epoch_cover(one, 9);
    const auto ragged = uniform_epoch_batches(10, 4, 1, 0);
    CHECK(ragged.size() == 3);
    CHECK(ragged.back().size() == 2);
    CHECK_THROWS_AS(uniform_epoch_batches(5, 6, 0, 0), ConfigError);
}

TEST_CASE("stratified batches track the target distribution more closely")
{
    std::mt19937_64 rng(5);
    std::exponential_distribution<double> e(1.0);
    std::vector<double> y(2000);
    for (double& v : y) v = std::pow(e(rng), 2.0);
    const auto plan = build_groups(y, 50, 2000);
    double ssb = 0.0;
    double uni = 0.0;
    int count = 0;
    for (std::uint64_t ep = 0; ep < 5; ++ep) {
        const auto a = epoch_batches(plan, 1, ep);
        const auto b = uniform_epoch_batches(y.size(), 50, 1, ep);
        for (std::size_t j = 0; j < a.size(); ++j) {
            std::vector<double> ta;
            std::vector<double> tb;
            for (Index i : a[j]) ta.push_back(y[i]);
            for (Index i : b[j]) tb.push_back(y[i]);
            ssb += ks(ta, y);
            uni += ks(tb, y);
            ++count;
        }
    }
    CHECK(ssb / count < uni / count);
}

TEST_CASE("sampler names")
{
    CHECK(parse_sampler_kind("ssb") == SamplerKind::ssb);
    CHECK(parse_sampler_kind("uniform") == SamplerKind::uniform);
    CHECK(to_string(SamplerKind::ssb) == "ssb");
    CHECK_THROWS_AS(parse_sampler_kind("random"), ConfigError);
}
