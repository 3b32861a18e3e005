#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "cisir/density.hpp"

namespace cisir {

enum class ImportanceFamily { recip, mdi, constant };

ImportanceFamily parse_importance_family(const std::string& name);
std::string to_string(ImportanceFamily f);

struct ImportanceSpec {
    ImportanceFamily family = ImportanceFamily::constant;
    double alpha = 1.0;

    void validate() const;
    friend bool operator==(const ImportanceSpec&, const ImportanceSpec&) = default;
};

/// Reciprocal importance d^-alpha, alpha >= 0. alpha = 1 is the inverse
/// (balancing) weight, alpha = 0.5 the square-root inverse.
double recip(double d, double alpha);

/// Monotonically decreasing involution (1 - d^alpha)^(1/alpha), alpha > 0.
/// Convex for alpha < 1, equal to 1 - d at alpha = 1, concave above.
double mdi(double d, double alpha);

/// log of mdi evaluated from log d, accurate where mdi itself underflows
/// (small alpha with d near 1).
double log_mdi(double log_d, double alpha);

/// Per-instance importances, strictly positive and summing to one.
class ImportanceVector {
public:
    ImportanceVector() = default;

    /// Normalizes log-importances without overflow. Values that would
    /// underflow to zero are floored at 1e-300 and counted.
    static ImportanceVector from_log(std::span<const double> log_values);
    static ImportanceVector from_raw(std::span<const double> raw);
    static ImportanceVector uniform(std::size_t n);

    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }
    std::size_t size() const noexcept { return values_.size(); }
    std::size_t clamped() const noexcept { return clamped_; }
    std::size_t floored() const noexcept { return floored_; }

    void check_invariants() const;

private:
    friend ImportanceVector compute_importances(std::span<const double>, const ImportanceSpec&);
    std::vector<double> values_;
    std::size_t clamped_ = 0;
    std::size_t floored_ = 0;
};

/// Applies the family pointwise to normalized densities (clamped into
/// [1e-12, 1 - 1e-12]) and normalizes the result to sum one.
ImportanceVector compute_importances(std::span<const double> normalized_densities, const ImportanceSpec& spec);
ImportanceVector compute_importances(const DensityProfile& profile, const ImportanceSpec& spec);

/// Memoizes importance vectors per (profile, spec). Thread-safe; returned
/// vectors are immutable.
class ImportanceCache {
public:
    std::shared_ptr<const ImportanceVector> get(const DensityProfile& profile, const ImportanceSpec& spec);
    std::size_t size() const;

private:
    using Key = std::tuple<std::uint64_t, double, double, int, double>;
    mutable std::mutex mutex_;
    std::map<Key, std::shared_ptr<const ImportanceVector>> entries_;
};

/// Importances for instances outside the training set: each query takes
/// the importance of its nearest training target, then the result is
/// renormalized to sum one over the queries.
ImportanceVector lookup_importances(std::span<const double> train_targets,
                                    const ImportanceVector& train_importances,
                                    std::span<const double> query_targets);

} // namespace cisir
