#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cisir {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input data (unreadable file, bad cell, empty table).
class DataError : public Error {
public:
    using Error::Error;
};

/// A configuration or argument outside its admissible range.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Raised when a training run produces a non-finite or exploding loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

using Index = std::size_t;
using IndexList = std::vector<Index>;

/// Neumaier-compensated running sum; order-stable to a few ulps.
class CompensatedSum {
public:
    void add(double x) noexcept
    {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) noexcept
{
    CompensatedSum s;
    for (double x : xs) {
        s.add(x);
    }
    return s.value();
}

inline void require(bool condition, const std::string& message)
{
    if (!condition) {
        throw ConfigError(message);
    }
}

} // namespace cisir
