#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cisir/common.hpp"
#include "json.hpp"

namespace cisir {

enum class Metric { mae, mae_rare, aore, pcc, pcc_rare, aorc };

inline constexpr std::array<Metric, 6> kAllMetrics{Metric::mae,      Metric::mae_rare, Metric::aore,
                                                  Metric::pcc,      Metric::pcc_rare, Metric::aorc};

std::string to_string(Metric m);
/// MAE-type metrics are minimized, PCC-type maximized.
bool lower_is_better(Metric m);

/// Metrics of one run, or the mean over runs after `aggregate`. Missing
/// values mark undefined statistics (zero variance, too few rare points).
struct EvalReport {
    std::array<std::optional<double>, 6> value{};
    std::array<std::optional<double>, 6> standard_error{};
    std::array<std::vector<double>, 6> per_run{}; // defined values only
    std::size_t n = 0;
    std::size_t n_rare = 0;
    std::size_t runs = 1;

    std::optional<double> get(Metric m) const { return value[static_cast<std::size_t>(m)]; }
    std::optional<double> se(Metric m) const { return standard_error[static_cast<std::size_t>(m)]; }
    std::optional<double> mae() const { return get(Metric::mae); }
    std::optional<double> mae_rare() const { return get(Metric::mae_rare); }
    std::optional<double> aore() const { return get(Metric::aore); }
    std::optional<double> pcc() const { return get(Metric::pcc); }
    std::optional<double> pcc_rare() const { return get(Metric::pcc_rare); }
    std::optional<double> aorc() const { return get(Metric::aorc); }
    double rare_fraction() const { return n == 0 ? 0.0 : static_cast<double>(n_rare) / static_cast<double>(n); }

    /// Throws `Error` when the AORE/AORC identities or se >= 0 fail.
    void check_invariants() const;
};

double mean_absolute_error(std::span<const double> y, std::span<const double> yhat);
/// Unweighted Pearson correlation; empty when either side has zero variance
/// or fewer than two points are given.
std::optional<double> pearson(std::span<const double> y, std::span<const double> yhat);

/// (a + b) / 2, missing when either input is.
std::optional<double> average_of(std::optional<double> overall, std::optional<double> rare);

EvalReport evaluate(std::span<const double> y, std::span<const double> yhat, const std::vector<bool>& rare);

/// Mean and standard error (sample sd / sqrt(runs)) per metric. AORE and
/// AORC are recomputed from the aggregated components so the identities
/// hold exactly; their standard errors come from the per-run values.
/// A single report yields means without standard errors.
EvalReport aggregate(std::span<const EvalReport> reports);

/// Collapses a group (e.g. the folds of one seed) into its mean without
/// standard errors; the result counts as one run.
EvalReport mean_report(std::span<const EvalReport> reports);

/// The declared significance rule: |mean difference| exceeds the sum of the
/// two standard errors (non-overlapping mean +- 1 se intervals).
bool significantly_different(const EvalReport& a, const EvalReport& b, Metric m);

nlohmann::json to_json(const EvalReport& report);

using NamedReport = std::pair<std::string, EvalReport>;

/// Table with columns MAE, MAE_R, AORE, PCC, PCC_R, AORC as mean and se.
std::string render_csv(std::span<const NamedReport> rows);
/// Aligned text; the best value per column carries "(1)", the runner-up
/// "(2)". A footer states the aggregation and significance convention.
std::string render_text_table(std::span<const NamedReport> rows);

} // namespace cisir
