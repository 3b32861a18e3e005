#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cisir/data.hpp"
#include "cisir/density.hpp"
#include "cisir/evaluation.hpp"
#include "cisir/importance.hpp"
#include "cisir/loss.hpp"
#include "cisir/network.hpp"
#include "cisir/sampler.hpp"

namespace cisir {

enum class EarlyStopMetric { combined, wmse };

EarlyStopMetric parse_early_stop_metric(const std::string& name);
std::string to_string(EarlyStopMetric m);

struct TrainConfig {
    ArchitectureConfig arch;
    OptimizerConfig opt;
    ImportanceSpec importance_e{ImportanceFamily::mdi, 1.0};
    ImportanceSpec importance_c{ImportanceFamily::constant, 1.0}; // rc = 1 unless tuned
    LossParams loss;
    SamplerKind sampler = SamplerKind::ssb;
    std::size_t batch_size = 256;
    std::size_t max_epochs = 1000;
    std::size_t early_stop_patience = 200;
    double lr_decay_factor = 0.95;
    std::size_t lr_plateau_epochs = 50;
    double plateau_threshold = 1e-5; // relative improvement
    double divergence_factor = 1e6;
    EarlyStopMetric early_stop_metric = EarlyStopMetric::combined;
    ProfileOptions density;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);

struct EpochRecord {
    std::size_t epoch = 0;
    LossBreakdown train;      // batch average
    double validation_loss = 0.0;
    double learning_rate = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_validation_loss = 0.0;
    std::optional<std::size_t> early_stop_epoch; // set when patience ran out
    std::size_t rare_free_batches = 0;            // batches without a rare instance
    std::size_t total_batches = 0;

    friend bool operator==(const TrainHistory& a, const TrainHistory& b);
};

nlohmann::json to_json(const TrainHistory& history);

/// Stops after `patience` consecutive epochs without a relative
/// improvement larger than `threshold`.
class EarlyStopping {
public:
    EarlyStopping(std::size_t patience, double threshold);
    /// Returns true when the value counts as an improvement.
    bool update(double value);
    bool should_stop() const noexcept { return stale_ >= patience_; }
    std::size_t stale_epochs() const noexcept { return stale_; }

private:
    std::size_t patience_;
    double threshold_;
    std::optional<double> best_;
    std::size_t stale_ = 0;
};

/// Multiplies the learning rate by `factor` after every `epochs`
/// consecutive epochs without relative improvement above `threshold`.
class PlateauScheduler {
public:
    PlateauScheduler(double initial_lr, double factor, std::size_t epochs, double threshold);
    /// Feeds one epoch's monitored value and returns the rate for the next epoch.
    double update(double value);
    double learning_rate() const noexcept { return lr_; }
    std::size_t decays() const noexcept { return decays_; }

private:
    double lr_;
    double factor_;
    std::size_t epochs_;
    double threshold_;
    std::optional<double> best_;
    std::size_t stale_ = 0;
    std::size_t decays_ = 0;
};

struct TrainResult {
    ModelState model;   // best-validation parameters
    TrainHistory history;
    DensityProfile profile; // of the fold's training targets
};

/// One run of the training procedure on `fold` (indices into `table`).
/// An empty validation fold falls back to monitoring the training loss.
TrainResult train_one(const DatasetTable& table,
                      const DatasetDescriptor& descriptor,
                      const Fold& fold,
                      const TrainConfig& config,
                      std::uint64_t seed);

using RunFunction = std::function<TrainResult(const DatasetTable&, const DatasetDescriptor&, const Fold&,
                                              const TrainConfig&, std::uint64_t)>;

struct RunOutcome {
    std::size_t fold = 0;
    std::uint64_t seed = 0;
    std::optional<TrainResult> result;
    std::optional<EvalReport> validation; // metrics on the validation fold
    std::optional<EvalReport> test;       // metrics on the held-out test set
    std::string error;                    // non-empty when the run failed

    bool ok() const noexcept { return result.has_value(); }
};

struct CvOptions {
    std::size_t jobs = 1;
    RunFunction runner; // defaults to train_one
    bool keep_models = true;
};

/// Every (fold, seed) pair, ordered fold-major. A failing run records its
/// error and leaves the others untouched.
std::vector<RunOutcome> train_cv(const DatasetTable& table,
                                 const DatasetDescriptor& descriptor,
                                 const SplitPlan& plan,
                                 const TrainConfig& config,
                                 const CvOptions& options = {});

/// Test metrics averaged over folds per seed, then aggregated over seeds.
/// Falls back to validation metrics when there is no test set.
std::optional<EvalReport> aggregate_outcomes(const std::vector<RunOutcome>& outcomes, bool use_test = true);

struct SweepGrid {
    std::vector<double> alpha_e{1.0};
    std::vector<double> lambda{0.5};
    std::vector<double> alpha_c; // stage 3 runs only when non-empty
};

struct SweepCell {
    std::string stage; // "alpha_e", "lambda" or "alpha_c"
    double alpha_e = 0.0;
    double lambda = 0.0;
    double alpha_c = 0.0;
    std::optional<EvalReport> validation;
    std::optional<EvalReport> test;
    std::vector<RunOutcome> outcomes;
    std::size_t failures = 0;
};

struct SweepReport {
    std::vector<SweepCell> cells; // in execution order, stage by stage
    std::size_t best_cell = 0;
    TrainConfig best_config;
    std::vector<std::string> log;
};

/// Staged grid search: lambda fixed at 0.5 while alpha_e is scanned, then
/// lambda at the best alpha_e, then (optionally) alpha_c. Cells are chosen
/// by validation AORE, AORC breaking near-ties. Repeated cells are reused.
SweepReport sweep(const DatasetTable& table,
                  const DatasetDescriptor& descriptor,
                  const SplitPlan& plan,
                  const TrainConfig& base,
                  const SweepGrid& grid,
                  const CvOptions& options = {});

} // namespace cisir
