#include "cisir/importance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>

#include "cisir/common.hpp"

namespace cisir {

namespace {

constexpr double kClampLow = 1e-12;
constexpr double kClampHigh = 1.0 - 1e-12;
constexpr double kFloor = 1e-300;

void require_open_unit(double d, const char* what)
{
    if (!(d > 0.0 && d < 1.0)) {
        throw ConfigError(std::string(what) + ": density must lie in (0, 1)");
    }
}

} // namespace

ImportanceFamily parse_importance_family(const std::string& name)
{
    if (name == "recip" || name == "reciprocal") return ImportanceFamily::recip;
    if (name == "mdi") return ImportanceFamily::mdi;
    if (name == "constant" || name == "uniform" || name == "none") return ImportanceFamily::constant;
    throw ConfigError("unknown importance family '" + name + "'");
}

std::string to_string(ImportanceFamily f)
{
    switch (f) {
    case ImportanceFamily::recip: return "recip";
    case ImportanceFamily::mdi: return "mdi";
    case ImportanceFamily::constant: return "constant";
    }
    return "constant";
}

void ImportanceSpec::validate() const
{
    require(std::isfinite(alpha), "importance: alpha must be finite");
    switch (family) {
    case ImportanceFamily::recip:
        require(alpha >= 0.0, "importance: recip requires alpha >= 0");
        break;
    case ImportanceFamily::mdi:
        require(alpha > 0.0, "importance: mdi requires alpha > 0");
        break;
    case ImportanceFamily::constant:
        break;
    }
}

double recip(double d, double alpha)
{
    require_open_unit(d, "recip");
    require(alpha >= 0.0, "recip: alpha must be non-negative");
    return std::pow(d, -alpha);
}

double mdi(double d, double alpha)
{
    require_open_unit(d, "mdi");
    require(alpha > 0.0, "mdi: alpha must be positive");
    return std::exp(log_mdi(std::log(d), alpha));
}

double log_mdi(double log_d, double alpha)
{
    require(alpha > 0.0, "mdi: alpha must be positive");
    require(log_d < 0.0, "mdi: density must lie in (0, 1)");
    // log(1 - e^x): expm1 when e^x is close to one, log1p when it is small.
    const double x = alpha * log_d;
    const double log_one_minus = x > -std::numbers::ln2 ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x));
    return log_one_minus / alpha;
}

ImportanceVector ImportanceVector::from_log(std::span<const double> log_values)
{
    if (log_values.empty()) {
        throw ConfigError("importance: empty input");
    }
    const double top = *std::max_element(log_values.begin(), log_values.end());
    ImportanceVector v;
    v.values_.resize(log_values.size());
    CompensatedSum total;
    for (std::size_t i = 0; i < log_values.size(); ++i) {
        const double r = std::exp(log_values[i] - top);
        v.values_[i] = r;
        total.add(r);
    }
    const double inv = 1.0 / total.value();
    for (double& r : v.values_) {
        r *= inv;
        if (!(r >= kFloor)) {
            r = kFloor;
            ++v.floored_;
        }
    }
    if (v.floored_ > 0) {
        const double s = compensated_sum(v.values_);
        for (double& r : v.values_) r /= s;
    }
    return v;
}

ImportanceVector ImportanceVector::from_raw(std::span<const double> raw)
{
    std::vector<double> logs(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!(raw[i] > 0.0) || !std::isfinite(raw[i])) {
            throw ConfigError("importance: raw importances must be positive and finite");
        }
        logs[i] = std::log(raw[i]);
    }
    return from_log(logs);
}

ImportanceVector ImportanceVector::uniform(std::size_t n)
{
    std::vector<double> zeros(n, 0.0);
    return from_log(zeros);
}

void ImportanceVector::check_invariants() const
{
    if (values_.empty()) throw Error("importance vector is empty");
    for (double r : values_) {
        if (!(r > 0.0) || !std::isfinite(r)) throw Error("importance vector has a non-positive entry");
    }
    const double s = compensated_sum(values_);
    if (std::abs(s - 1.0) > 1e-12) throw Error("importance vector does not sum to one");
}

ImportanceVector compute_importances(std::span<const double> normalized_densities, const ImportanceSpec& spec)
{
    spec.validate();
    std::vector<double> logs(normalized_densities.size());
    std::size_t clamped = 0;
    for (std::size_t i = 0; i < normalized_densities.size(); ++i) {
        double d = normalized_densities[i];
        if (!std::isfinite(d)) {
            throw ConfigError("importance: non-finite density");
        }
        if (d < kClampLow || d > kClampHigh) {
            d = std::clamp(d, kClampLow, kClampHigh);
            ++clamped;
        }
        const double log_d = std::log(d);
        switch (spec.family) {
        case ImportanceFamily::recip: logs[i] = -spec.alpha * log_d; break;
        case ImportanceFamily::mdi: logs[i] = log_mdi(log_d, spec.alpha); break;
        case ImportanceFamily::constant: logs[i] = 0.0; break;
        }
    }
    auto v = ImportanceVector::from_log(logs);
    v.clamped_ = clamped;
    return v;
}

ImportanceVector compute_importances(const DensityProfile& profile, const ImportanceSpec& spec)
{
    return compute_importances(profile.normalized, spec);
}

std::shared_ptr<const ImportanceVector> ImportanceCache::get(const DensityProfile& profile, const ImportanceSpec& spec)
{
    const Key key{profile.dataset_hash, profile.bandwidth, profile.epsilon, static_cast<int>(spec.family), spec.alpha};
    {
        std::lock_guard lock(mutex_);
        if (auto it = entries_.find(key); it != entries_.end()) {
            return it->second;
        }
    }
    auto value = std::make_shared<const ImportanceVector>(compute_importances(profile, spec));
    std::lock_guard lock(mutex_);
    return entries_.emplace(key, std::move(value)).first->second;
}

std::size_t ImportanceCache::size() const
{
    std::lock_guard lock(mutex_);
    return entries_.size();
}

ImportanceVector lookup_importances(std::span<const double> train_targets,
                                    const ImportanceVector& train_importances,
                                    std::span<const double> query_targets)
{
    if (train_targets.size() != train_importances.size() || train_targets.empty()) {
        throw ConfigError("lookup_importances: training targets and importances must match");
    }
    std::vector<std::size_t> order(train_targets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return train_targets[a] < train_targets[b]; });
    std::vector<double> sorted(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) sorted[k] = train_targets[order[k]];

    std::vector<double> logs(query_targets.size());
    for (std::size_t q = 0; q < query_targets.size(); ++q) {
        const double y = query_targets[q];
        auto it = std::lower_bound(sorted.begin(), sorted.end(), y);
        std::size_t k = static_cast<std::size_t>(it - sorted.begin());
        if (k == sorted.size()) {
            k = sorted.size() - 1;
        } else if (k > 0 && std::abs(sorted[k - 1] - y) <= std::abs(sorted[k] - y)) {
            k = k - 1;
        }
        logs[q] = std::log(train_importances[order[k]]);
    }
    return ImportanceVector::from_log(logs);
}

} // namespace cisir
