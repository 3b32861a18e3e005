#include "cisir/density.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>

#include "cisir/common.hpp"

namespace cisir {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343818684758586311649;
constexpr std::size_t kFastThreshold = 2048;
constexpr int kTaylorTerms = 18;

void require_targets(std::span<const double> targets)
{
    if (targets.empty()) {
        throw ConfigError("density: empty target vector");
    }
    for (double y : targets) {
        if (!std::isfinite(y)) throw ConfigError("density: non-finite target");
    }
}

std::vector<double> sorted_copy(std::span<const double> xs)
{
    std::vector<double> s(xs.begin(), xs.end());
    std::sort(s.begin(), s.end());
    return s;
}

/// Kernel sums sum_j exp(-((q - y_j) / h)^2 / 2), unscaled.
std::vector<double> kernel_sums_direct(const std::vector<double>& sorted,
                                       double h,
                                       std::span<const double> queries,
                                       double cutoff)
{
    std::vector<double> out(queries.size());
    const double inv_h = 1.0 / h;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const double x = queries[q];
        auto first = sorted.begin();
        auto last = sorted.end();
        if (cutoff > 0.0) {
            first = std::lower_bound(sorted.begin(), sorted.end(), x - cutoff * h);
            last = std::upper_bound(first, sorted.end(), x + cutoff * h);
        }
        CompensatedSum sum;
        for (auto it = first; it != last; ++it) {
            const double u = (x - *it) * inv_h;
            sum.add(std::exp(-0.5 * u * u));
        }
        out[q] = sum.value();
    }
    return out;
}

/// Same sums via boxes of width h/2: inside a box with centre c,
///   exp(-(u - v)^2) = exp(-u^2) sum_k (2u)^k / k! * exp(-v^2) v^k
/// with u = (q - c) / (sqrt2 h), v = (y - c) / (sqrt2 h), |v| <= 0.177.
/// Eighteen terms keep the truncation below 1e-17 of a unit kernel.
std::vector<double> kernel_sums_fast(const std::vector<double>& sorted,
                                     double h,
                                     std::span<const double> queries,
                                     double cutoff)
{
    struct Box {
        double center;
        std::array<double, kTaylorTerms> moments;
    };
    const double width = 0.5 * h;
    const double scale = 1.0 / (std::numbers::sqrt2 * h);
    const double origin = sorted.front();
    std::vector<Box> boxes;
    long current = -1;
    for (double y : sorted) {
        const long b = static_cast<long>(std::floor((y - origin) / width));
        if (b != current) {
            current = b;
            Box box{};
            box.center = origin + (static_cast<double>(b) + 0.5) * width;
            boxes.push_back(box);
        }
        Box& box = boxes.back();
        const double v = (y - box.center) * scale;
        double term = std::exp(-v * v);
        for (int k = 0; k < kTaylorTerms; ++k) {
            box.moments[static_cast<std::size_t>(k)] += term;
            term *= v;
        }
    }
    const double reach = cutoff > 0.0 ? cutoff * h + width : std::numeric_limits<double>::infinity();
    std::vector<double> out(queries.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const double x = queries[q];
        auto first = std::lower_bound(boxes.begin(), boxes.end(), x - reach,
                                      [](const Box& b, double c) { return b.center < c; });
        CompensatedSum sum;
        for (auto it = first; it != boxes.end() && it->center <= x + reach; ++it) {
            const double u = (x - it->center) * scale;
            const double two_u = 2.0 * u;
            double coeff = 1.0;
            double s = it->moments[0];
            for (int k = 1; k < kTaylorTerms; ++k) {
                coeff *= two_u / k;
                s += coeff * it->moments[static_cast<std::size_t>(k)];
            }
            sum.add(std::exp(-u * u) * s);
        }
        out[q] = sum.value();
    }
    return out;
}

std::vector<double> kernel_sums(std::span<const double> targets,
                                double h,
                                std::span<const double> queries,
                                const KdeOptions& options)
{
    const auto sorted = sorted_copy(targets);
    const bool fast = options.method == KdeMethod::fast ||
                      (options.method == KdeMethod::automatic && targets.size() > kFastThreshold);
    return fast ? kernel_sums_fast(sorted, h, queries, options.cutoff_sigmas)
                : kernel_sums_direct(sorted, h, queries, options.cutoff_sigmas);
}

} // namespace

double frequency_imbalance_ratio(std::span<const double> targets, int n_bins)
{
    require(n_bins >= 2, "frequency_imbalance_ratio: n_bins must be at least 2");
    require(targets.size() >= 2, "frequency_imbalance_ratio: need at least 2 targets");
    require_targets(targets);
    const auto [lo_it, hi_it] = std::minmax_element(targets.begin(), targets.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) {
        throw ConfigError("frequency_imbalance_ratio: all targets are identical");
    }
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_bins), 0);
    const double width = (hi - lo) / n_bins;
    for (double y : targets) {
        auto b = static_cast<std::size_t>((y - lo) / width);
        counts[std::min(b, counts.size() - 1)] += 1;
    }
    std::size_t max_count = 0;
    std::size_t min_count = targets.size();
    for (std::size_t c : counts) {
        if (c == 0) continue;
        max_count = std::max(max_count, c);
        min_count = std::min(min_count, c);
    }
    return static_cast<double>(max_count) / static_cast<double>(min_count);
}

std::vector<double> kde_density(std::span<const double> targets,
                                double bandwidth,
                                std::span<const double> queries,
                                const KdeOptions& options)
{
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
        throw ConfigError("kde_density: bandwidth must be positive");
    }
    require_targets(targets);
    auto sums = kernel_sums(targets, bandwidth, queries, options);
    const double scale = kInvSqrt2Pi / (static_cast<double>(targets.size()) * bandwidth);
    for (double& s : sums) {
        s *= scale;
    }
    return sums;
}

std::vector<double> normalize_densities(std::span<const double> raw, double epsilon)
{
    if (raw.empty()) {
        throw ConfigError("normalize_densities: empty input");
    }
    require(epsilon > 0.0, "normalize_densities: epsilon must be positive");
    const double max_raw = *std::max_element(raw.begin(), raw.end());
    const double denom = max_raw + epsilon;
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!(raw[i] > 0.0)) {
            throw ConfigError("normalize_densities: densities must be strictly positive");
        }
        out[i] = raw[i] / denom;
    }
    return out;
}

double density_imbalance_ratio(std::span<const double> densities)
{
    if (densities.empty()) {
        throw ConfigError("density_imbalance_ratio: empty input");
    }
    const auto [lo, hi] = std::minmax_element(densities.begin(), densities.end());
    return *hi / *lo;
}

double density_ratio_at(std::span<const double> targets, double bandwidth, KdeMethod method)
{
    KdeOptions options;
    options.method = method;
    // The 1/(N h) factor and the epsilon normalization cancel in the ratio.
    const auto sums = kernel_sums(targets, bandwidth, targets, options);
    return density_imbalance_ratio(sums);
}

std::pair<double, double> default_bandwidth_range(std::span<const double> targets)
{
    require_targets(targets);
    const auto [lo, hi] = std::minmax_element(targets.begin(), targets.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) {
        throw ConfigError("solve_bandwidth: all targets are identical");
    }
    return {range * 1e-4, range};
}

BandwidthResult solve_bandwidth(std::span<const double> targets,
                                double rho_target,
                                double tolerance,
                                std::optional<std::pair<double, double>> h_range,
                                int grid_points)
{
    require(rho_target >= 1.0, "solve_bandwidth: rho_target must be at least 1");
    require(grid_points >= 3, "solve_bandwidth: grid needs at least 3 points");
    const auto [h_lo, h_hi] = h_range ? *h_range : default_bandwidth_range(targets);
    require(h_lo > 0.0 && h_lo < h_hi, "solve_bandwidth: need 0 < h_lo < h_hi");
    {
        const auto [lo, hi] = std::minmax_element(targets.begin(), targets.end());
        if (!(*hi > *lo)) throw ConfigError("solve_bandwidth: all targets are identical");
    }

    const double log_target = std::log(rho_target);
    BandwidthResult best;
    best.log_mismatch = std::numeric_limits<double>::infinity();
    int evaluations = 0;
    auto mismatch = [&](double log_h) {
        const double h = std::exp(log_h);
        const double rho_d = density_ratio_at(targets, h);
        ++evaluations;
        const double m = std::abs(std::log(rho_d) - log_target);
        if (m < best.log_mismatch) {
            best.bandwidth = h;
            best.rho_density = rho_d;
            best.log_mismatch = m;
        }
        return m;
    };

    const double a = std::log(h_lo);
    const double b = std::log(h_hi);
    const auto n = static_cast<std::size_t>(grid_points);
    std::vector<double> grid(n);
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        grid[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
        values[i] = mismatch(grid[i]);
    }
    const auto i_best = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
    double lo = grid[i_best == 0 ? 0 : i_best - 1];
    double hi = grid[std::min(i_best + 1, n - 1)];

    constexpr double inv_phi = 0.6180339887498948482;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = mismatch(x1);
    double f2 = mismatch(x2);
    for (int iter = 0; iter < 60 && (hi - lo) > 1e-7; ++iter) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = mismatch(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = mismatch(x2);
        }
    }
    best.within_tolerance = best.log_mismatch <= tolerance;
    best.evaluations = evaluations;
    return best;
}

void DensityProfile::check_invariants() const
{
    if (raw.size() != normalized.size() || normalized.empty()) {
        throw Error("profile: raw and normalized densities must be non-empty and equally long");
    }
    if (!(bandwidth > 0.0) || !(epsilon > 0.0)) {
        throw Error("profile: bandwidth and epsilon must be positive");
    }
    for (double d : normalized) {
        if (!(d > 0.0 && d < 1.0)) throw Error("profile: normalized density outside (0, 1)");
    }
    const auto [dmin, dmax] = std::minmax_element(normalized.begin(), normalized.end());
    const double raw_max = *std::max_element(raw.begin(), raw.end());
    const double expected_max = raw_max / (raw_max + epsilon);
    if (std::abs(*dmax - expected_max) > 1e-12 * expected_max) {
        throw Error("profile: max normalized density inconsistent with raw maximum");
    }
    const double ratio = *dmax / *dmin;
    if (std::abs(ratio - rho_density) > 1e-9 * ratio) {
        throw Error("profile: rho_density does not equal max(d) / min(d)");
    }
    if (!(rho_freq >= 1.0) || !(rho_density >= 1.0)) {
        throw Error("profile: imbalance ratios must be at least 1");
    }
}

DensityProfile build_profile(std::span<const double> targets, const ProfileOptions& options)
{
    require(targets.size() >= 2, "build_profile: need at least 2 targets");
    require_targets(targets);
    DensityProfile p;
    p.epsilon = options.epsilon;
    p.rho_freq = frequency_imbalance_ratio(targets, options.n_bins);
    if (options.bandwidth) {
        require(*options.bandwidth > 0.0, "build_profile: bandwidth override must be positive");
        p.bandwidth = *options.bandwidth;
        p.bandwidth_solved = false;
    } else {
        const auto solved = solve_bandwidth(targets, p.rho_freq, options.tolerance, options.h_range, options.grid_points);
        p.bandwidth = solved.bandwidth;
        p.bandwidth_solved = true;
    }
    p.raw = kde_density(targets, p.bandwidth, targets);
    p.normalized = normalize_densities(p.raw, p.epsilon);
    p.rho_density = density_imbalance_ratio(p.normalized);
    p.log_mismatch = std::abs(std::log(p.rho_density) - std::log(p.rho_freq));
    p.within_tolerance = p.log_mismatch <= options.tolerance;
    p.dataset_hash = dataset_hash(targets);
    p.check_invariants();
    return p;
}

std::uint64_t dataset_hash(std::span<const double> targets)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double y : targets) {
        auto bits = std::bit_cast<std::uint64_t>(y);
        for (int k = 0; k < 8; ++k) {
            h ^= (bits >> (8 * k)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

nlohmann::json to_json(const DensityProfile& p)
{
    return {
        {"key", {{"dataset_hash", p.dataset_hash}, {"bandwidth", p.bandwidth}, {"epsilon", p.epsilon}}},
        {"rho_freq", p.rho_freq},
        {"rho_density", p.rho_density},
        {"log_mismatch", p.log_mismatch},
        {"bandwidth_solved", p.bandwidth_solved},
        {"within_tolerance", p.within_tolerance},
        {"raw", p.raw},
        {"normalized", p.normalized},
    };
}

DensityProfile profile_from_json(const nlohmann::json& j)
{
    DensityProfile p;
    const auto& key = j.at("key");
    p.dataset_hash = key.at("dataset_hash").get<std::uint64_t>();
    p.bandwidth = key.at("bandwidth").get<double>();
    p.epsilon = key.at("epsilon").get<double>();
    p.rho_freq = j.at("rho_freq").get<double>();
    p.rho_density = j.at("rho_density").get<double>();
    p.log_mismatch = j.at("log_mismatch").get<double>();
    p.bandwidth_solved = j.at("bandwidth_solved").get<bool>();
    p.within_tolerance = j.at("within_tolerance").get<bool>();
    p.raw = j.at("raw").get<std::vector<double>>();
    p.normalized = j.at("normalized").get<std::vector<double>>();
    p.check_invariants();
    return p;
}

} // namespace cisir
