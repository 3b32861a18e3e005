#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "cisir/common.hpp"
#include "cisir/loss.hpp"
#include "test_support.hpp"

using namespace cisir;

namespace {

std::vector<double> uniform_weights(std::size_t n)
{
    return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

/// Skewed positive weights summing to one.
std::vector<double> skewed_weights(std::size_t n, std::uint64_t seed)
{
    auto w = test::random_vector(n, seed, 0.0, 1.0);
    for (double& v : w) v = std::exp(6.0 * v);
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) v /= s;
    return w;
}

/// Independent two-pass weighted Pearson correlation.
double weighted_pcc(const std::vector<double>& y, const std::vector<double>& p, const std::vector<double>& w)
{
    const double sw = std::accumulate(w.begin(), w.end(), 0.0);
    double my = 0.0;
    double mp = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        my += w[i] * y[i] / sw;
        mp += w[i] * p[i] / sw;
    }
    double cov = 0.0;
    double vy = 0.0;
    double vp = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        cov += w[i] * (y[i] - my) * (p[i] - mp);
        vy += w[i] * (y[i] - my) * (y[i] - my);
        vp += w[i] * (p[i] - mp) * (p[i] - mp);
    }
    return cov / std::sqrt(vy * vp);
}

} // namespace

TEST_CASE("wmse examples")
{
    const std::vector<double> y{0, 2};
    const std::vector<double> p{1, 1};
    CHECK(wmse(y, p, std::vector<double>{0.5, 0.5}) == doctest::Approx(1.0));
    CHECK(wmse(y, y, std::vector<double>{0.5, 0.5}) == 0.0);
    const std::vector<double> yy{1, 5, 2};
    const std::vector<double> pp{0, 2, 2};
    CHECK(wmse(yy, pp, std::vector<double>{0, 1, 0}) == doctest::Approx(9.0));
    CHECK_THROWS_AS(wmse(y, std::vector<double>{1}, std::vector<double>{0.5, 0.5}), ConfigError);
}

TEST_CASE("wpcc examples")
{
    const std::vector<double> y{1, 2, 3};
    const auto w = uniform_weights(3);
    CHECK(wpcc_loss(y, y, w) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(wpcc_loss(y, std::vector<double>{3, 2, 1}, w) == doctest::Approx(2.0));
    CHECK(wpcc_loss(y, std::vector<double>{2.5, 4.5, 6.5}, w) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(wpcc_loss(y, std::vector<double>{7, 7, 7}, w) == 1.0);
    CHECK_THROWS_AS(wpcc_loss(std::vector<double>{1}, std::vector<double>{1}, std::vector<double>{1}), ConfigError);
}

TEST_CASE("wpcc matches an independent weighted correlation")
{
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto y = test::random_vector(30, s);
        const auto p = test::random_vector(30, s + 100);
        const auto w = skewed_weights(30, s + 200);
        CHECK(wpcc_loss(y, p, w) == doctest::Approx(1.0 - weighted_pcc(y, p, w)).epsilon(1e-10));
    }
}

TEST_CASE("wpcc affine invariance, wmse is not")
{
    std::mt19937_64 rng(4);
    for (int t = 0; t < 100; ++t) {
        const auto y = test::random_vector(25, rng());
        const auto p = test::random_vector(25, rng());
        const auto w = skewed_weights(25, rng());
        const double a = 0.1 + 5.0 * std::uniform_real_distribution<double>()(rng);
        const double b = std::uniform_real_distribution<double>(-3, 3)(rng);
        std::vector<double> q;
        for (double v : p) q.push_back(a * v + b);
        const double l = wpcc_loss(y, p, w);
        CHECK(l >= 0.0);
        CHECK(l <= 2.0);
        CHECK(wpcc_loss(y, q, w) == doctest::Approx(l).epsilon(1e-9));
        CHECK(wmse(y, q, w) != doctest::Approx(wmse(y, p, w)));
    }
}

TEST_CASE("plain-mean variant equals ordinary correlation under uniform weights")
{
    const auto y = test::random_vector(40, 8);
    const auto p = test::random_vector(40, 9);
    const auto w = uniform_weights(40);
    CHECK(wpcc_loss(y, p, w, 1e-8, false) == doctest::Approx(wpcc_loss(y, p, w, 1e-8, true)).epsilon(1e-12));
}

TEST_CASE("combined loss arithmetic")
{
    const std::vector<double> y{1, 2, 3, 4};
    const std::vector<double> p{4, 3, 2, 1};
    const auto w = uniform_weights(4);
    LossParams lp;
    lp.lambda = 0.0;
    const auto zero = combined_loss(y, p, w, w, lp);
    CHECK(zero.total == zero.wmse);
    lp.lambda = 0.5;
    const auto half = combined_loss(y, p, w, w, lp);
    CHECK(half.wpcc_loss == doctest::Approx(2.0));
    CHECK(half.wmse == doctest::Approx(5.0));
    CHECK(half.total == doctest::Approx(half.wmse + 0.5 * 2.0));
    for (double lambda : {0.0, 0.3, 2.0}) {
        lp.lambda = lambda;
        CHECK(combined_loss(y, y, w, w, lp).total == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("mse decomposition")
{
    const auto d = mse_decomposition(std::vector<double>{0, 2}, std::vector<double>{1, 1});
    CHECK(d.mean_term == 0.0);
    CHECK(d.sd_term == doctest::Approx(1.0));
    CHECK(d.corr_term == 0.0);
    const auto same = mse_decomposition(std::vector<double>{1, 3, 4}, std::vector<double>{1, 3, 4});
    CHECK(same.sum() == doctest::Approx(0.0).epsilon(1e-14));
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto y = test::random_vector(100, s, -3, 3);
        const auto p = test::random_vector(100, s + 1000, -1, 4);
        double mse = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) mse += (y[i] - p[i]) * (y[i] - p[i]) / 100.0;
        const auto dec = mse_decomposition(y, p);
        CHECK(dec.mean_term >= 0.0);
        CHECK(dec.sd_term >= 0.0);
        CHECK(dec.corr_term >= 0.0);
        CHECK(std::abs(dec.sum() - mse) / mse <= 1e-9);
    }
}

TEST_CASE("loss gradient matches central differences")
{
    std::mt19937_64 rng(12);
    const double h = 1e-5;
    for (int t = 0; t < 60; ++t) {
        const std::size_t n = 20;
        const auto y = test::random_vector(n, rng(), -2, 2);
        const auto p = test::random_vector(n, rng(), -1, 1);
        const auto re = skewed_weights(n, rng());
        const auto rc = t % 2 ? skewed_weights(n, rng()) : uniform_weights(n);
        for (double lambda : {0.0, 0.5, 1.0}) {
            LossParams lp;
            lp.lambda = lambda;
            lp.weighted_means = t % 3 != 0;
            const auto g = loss_gradient(y, p, re, rc, lp);
            for (std::size_t i = 0; i < n; ++i) {
                auto up = p;
                auto down = p;
                up[i] += h;
                down[i] -= h;
                const double fd = (combined_loss(y, up, re, rc, lp).total - combined_loss(y, down, re, rc, lp).total) / (2 * h);
                CHECK(std::abs(g[i] - fd) <= 1e-4 * std::max({std::abs(fd), std::abs(g[i]), 1e-6}) + 1e-9);
            }
        }
    }
}

TEST_CASE("gradient special cases")
{
    const auto y = test::random_vector(10, 1);
    const auto p = test::random_vector(10, 2);
    const auto w = skewed_weights(10, 3);
    LossParams lp;
    lp.lambda = 0.0;
    const auto g = loss_gradient(y, p, w, w, lp);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(g[i] == doctest::Approx(2 * w[i] * (p[i] - y[i])));

    lp.lambda = 0.7;
    for (double v : loss_gradient(y, y, w, w, lp)) CHECK(std::abs(v) < 1e-12);

    // Constant predictions: the subgradient moves them along (y - mean y).
    const std::vector<double> flat(10, 0.3);
    lp.lambda = 1.0;
    const auto gw = loss_gradient(y, flat, w, w, lp);
    const auto gm = loss_gradient(y, flat, w, w, LossParams{0.0, 1e-8, true});
    double mean = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) mean += w[i] * y[i];
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += (gw[i] - gm[i]) * (y[i] - mean);
    CHECK(dot < 0.0); // descent increases correlation with y
}

TEST_CASE("correlation term separates models of equal error")
{
    // Model 1 predicts a constant, model 2 tracks y with the same MSE.
    const std::vector<double> y{1, 2, 3, 4, 5};
    const std::vector<double> m2{3, 0, 5, 2, 7};
    double mse2 = 0.0;
    double mean = 3.0;
    for (std::size_t i = 0; i < y.size(); ++i) mse2 += (y[i] - m2[i]) * (y[i] - m2[i]) / 5.0;
    // MSE of a constant c is var(y) + (mean - c)^2; solve for the tie.
    const double var = 2.0;
    REQUIRE(mse2 > var);
    const std::vector<double> m1(5, mean + std::sqrt(mse2 - var));
    const auto w = uniform_weights(5);
    LossParams lp;
    lp.lambda = 0.0;
    CHECK(combined_loss(y, m1, w, w, lp).total == doctest::Approx(combined_loss(y, m2, w, w, lp).total));
    lp.lambda = 0.5;
    CHECK(combined_loss(y, m2, w, w, lp).total < combined_loss(y, m1, w, w, lp).total);
}

TEST_CASE("loss parameter validation")
{
    CHECK_THROWS_AS((LossParams{-0.1, 1e-8, true}.validate()), ConfigError);
    CHECK_THROWS_AS((LossParams{0.5, 0.0, true}.validate()), ConfigError);
    CHECK_THROWS_AS((LossParams{std::nan(""), 1e-8, true}.validate()), ConfigError);
}
