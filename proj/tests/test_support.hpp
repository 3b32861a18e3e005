#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cisir/matrix.hpp"

namespace test {

inline cisir::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    cisir::Matrix m(rows, cols);
    for (double& v : m.values()) v = n01(rng);
    return m;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

/// Fresh per-process scratch directory under the system temp dir.
inline std::filesystem::path temp_path(const std::string& name)
{
    static const auto dir = [] {
        auto d = std::filesystem::temp_directory_path() /
                 ("cisir-test-" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(d);
        return d;
    }();
    return dir / name;
}

} // namespace test
