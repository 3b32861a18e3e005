#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"

namespace cisir {

/// Ratio of the most to the least populated non-empty bin when
/// [min(y), max(y)] is cut into `n_bins` equal-width bins.
double frequency_imbalance_ratio(std::span<const double> targets, int n_bins = 100);

enum class KdeMethod {
    direct,    // exact kernel sum, optional tail cutoff
    fast,      // boxed Taylor expansion of the Gaussian, same cutoff
    automatic, // fast above a size threshold, direct otherwise
};

struct KdeOptions {
    /// Kernel contributions with |q - y_j| > cutoff_sigmas * h are skipped
    /// (Gaussian tail below 1e-14 at the default). Zero disables the cutoff.
    double cutoff_sigmas = 8.0;
    KdeMethod method = KdeMethod::direct;
};

/// Gaussian kernel density estimate (1 / (N h)) sum_j K((q - y_j) / h)
/// at each query point.
std::vector<double> kde_density(std::span<const double> targets,
                                double bandwidth,
                                std::span<const double> queries,
                                const KdeOptions& options = {});

/// d_i = raw_i / (max(raw) + epsilon).
std::vector<double> normalize_densities(std::span<const double> raw, double epsilon = 1e-3);

/// max(d) / min(d).
double density_imbalance_ratio(std::span<const double> densities);

/// Density imbalance ratio of the KDE with bandwidth h evaluated at the
/// targets themselves.
double density_ratio_at(std::span<const double> targets, double bandwidth, KdeMethod method = KdeMethod::automatic);

struct BandwidthResult {
    double bandwidth = 0.0;
    double rho_density = 0.0;
    double log_mismatch = 0.0; // |log rho_d - log rho_target|
    bool within_tolerance = false;
    int evaluations = 0;
};

/// Default search interval: [1e-4, 1] times the target range.
std::pair<double, double> default_bandwidth_range(std::span<const double> targets);

/// Minimizes |log rho_d(h) - log rho_target| over h in `h_range` with a
/// log-spaced grid scan followed by golden-section refinement around the
/// best grid point. rho_d(h) is not monotone, so no bracketing is assumed.
BandwidthResult solve_bandwidth(std::span<const double> targets,
                                double rho_target,
                                double tolerance = 0.1,
                                std::optional<std::pair<double, double>> h_range = std::nullopt,
                                int grid_points = 64);

struct DensityProfile {
    std::vector<double> raw;        // KDE at each training target
    std::vector<double> normalized; // in (0, 1)
    double bandwidth = 0.0;
    double epsilon = 1e-3;
    double rho_freq = 1.0;
    double rho_density = 1.0;
    double log_mismatch = 0.0;
    bool bandwidth_solved = false;
    bool within_tolerance = true;
    std::uint64_t dataset_hash = 0;

    std::size_t size() const noexcept { return normalized.size(); }
    /// Throws `Error` if any DensityProfile invariant is violated.
    void check_invariants() const;
};

struct ProfileOptions {
    int n_bins = 100;
    double epsilon = 1e-3;
    std::optional<double> bandwidth; // bypasses the solver
    double tolerance = 0.1;
    std::optional<std::pair<double, double>> h_range;
    int grid_points = 64;
};

DensityProfile build_profile(std::span<const double> targets, const ProfileOptions& options = {});

/// FNV-1a over the bit patterns of the targets.
std::uint64_t dataset_hash(std::span<const double> targets);

nlohmann::json to_json(const DensityProfile& profile);
DensityProfile profile_from_json(const nlohmann::json& j);

} // namespace cisir
