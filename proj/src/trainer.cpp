#include "cisir/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "cisir/rng.hpp"

namespace cisir {

EarlyStopMetric parse_early_stop_metric(const std::string& name)
{
    if (name == "combined") return EarlyStopMetric::combined;
    if (name == "wmse") return EarlyStopMetric::wmse;
    throw ConfigError("unknown early-stop metric '" + name + "' (expected combined or wmse)");
}

std::string to_string(EarlyStopMetric m)
{
    return m == EarlyStopMetric::combined ? "combined" : "wmse";
}

void TrainConfig::validate() const
{
    arch.validate();
    opt.validate();
    importance_e.validate();
    importance_c.validate();
    loss.validate();
    require(batch_size >= 2, "train: batch_size must be at least 2");
    require(max_epochs >= 1, "train: max_epochs must be at least 1");
    require(early_stop_patience >= 1, "train: early_stop_patience must be at least 1");
    require(lr_decay_factor > 0.0 && lr_decay_factor < 1.0, "train: lr_decay_factor must be in (0, 1)");
    require(lr_plateau_epochs >= 1, "train: lr_plateau_epochs must be at least 1");
    require(plateau_threshold >= 0.0, "train: plateau_threshold must be non-negative");
    require(divergence_factor > 1.0, "train: divergence_factor must exceed 1");
    require(!seeds.empty(), "train: at least one seed is required");
}

nlohmann::json to_json(const TrainConfig& c)
{
    nlohmann::json density = {
        {"n_bins", c.density.n_bins},
        {"epsilon", c.density.epsilon},
        {"tolerance", c.density.tolerance},
        {"grid_points", c.density.grid_points},
    };
    if (c.density.bandwidth) density["bandwidth"] = *c.density.bandwidth;
    if (c.density.h_range) density["h_range"] = {c.density.h_range->first, c.density.h_range->second};
    return {
        {"arch", to_json(c.arch)},
        {"optimizer",
         {{"learning_rate", c.opt.learning_rate},
          {"weight_decay", c.opt.weight_decay},
          {"beta1", c.opt.beta1},
          {"beta2", c.opt.beta2},
          {"epsilon", c.opt.epsilon}}},
        {"importance",
         {{"family_e", to_string(c.importance_e.family)},
          {"alpha_e", c.importance_e.alpha},
          {"family_c", to_string(c.importance_c.family)},
          {"alpha_c", c.importance_c.alpha}}},
        {"loss",
         {{"lambda", c.loss.lambda}, {"sd_epsilon", c.loss.sd_epsilon}, {"weighted_means", c.loss.weighted_means}}},
        {"sampler", {{"kind", to_string(c.sampler)}, {"batch_size", c.batch_size}}},
        {"trainer",
         {{"max_epochs", c.max_epochs},
          {"early_stop_patience", c.early_stop_patience},
          {"lr_decay_factor", c.lr_decay_factor},
          {"lr_plateau_epochs", c.lr_plateau_epochs},
          {"plateau_threshold", c.plateau_threshold},
          {"divergence_factor", c.divergence_factor},
          {"early_stop_metric", to_string(c.early_stop_metric)}}},
        {"density", density},
        {"seeds", c.seeds},
    };
}

bool operator==(const TrainHistory& a, const TrainHistory& b)
{
    if (a.epochs.size() != b.epochs.size() || a.best_epoch != b.best_epoch ||
        a.best_validation_loss != b.best_validation_loss || a.early_stop_epoch != b.early_stop_epoch ||
        a.rare_free_batches != b.rare_free_batches || a.total_batches != b.total_batches) {
        return false;
    }
    for (std::size_t i = 0; i < a.epochs.size(); ++i) {
        const auto& x = a.epochs[i];
        const auto& y = b.epochs[i];
        if (x.epoch != y.epoch || x.train.total != y.train.total || x.train.wmse != y.train.wmse ||
            x.train.wpcc_loss != y.train.wpcc_loss || x.validation_loss != y.validation_loss ||
            x.learning_rate != y.learning_rate) {
            return false;
        }
    }
    return true;
}

nlohmann::json to_json(const TrainHistory& h)
{
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : h.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"train_total", e.train.total},
                          {"train_wmse", e.train.wmse},
                          {"train_wpcc_loss", e.train.wpcc_loss},
                          {"validation_loss", e.validation_loss},
                          {"learning_rate", e.learning_rate}});
    }
    nlohmann::json j = {
        {"epochs", epochs},
        {"best_epoch", h.best_epoch},
        {"best_validation_loss", h.best_validation_loss},
        {"rare_free_batches", h.rare_free_batches},
        {"total_batches", h.total_batches},
    };
    j["early_stop_epoch"] = h.early_stop_epoch ? nlohmann::json(*h.early_stop_epoch) : nlohmann::json(nullptr);
    return j;
}

namespace {

bool improves(double value, const std::optional<double>& best, double threshold)
{
    if (!best) return true;
    return value < *best - threshold * std::abs(*best);
}

} // namespace

EarlyStopping::EarlyStopping(std::size_t patience, double threshold) : patience_(patience), threshold_(threshold)
{
    require(patience >= 1, "early stopping: patience must be at least 1");
}

bool EarlyStopping::update(double value)
{
    if (improves(value, best_, threshold_)) {
        best_ = value;
        stale_ = 0;
        return true;
    }
    ++stale_;
    return false;
}

PlateauScheduler::PlateauScheduler(double initial_lr, double factor, std::size_t epochs, double threshold)
    : lr_(initial_lr), factor_(factor), epochs_(epochs), threshold_(threshold)
{
    require(factor > 0.0 && factor < 1.0, "plateau scheduler: factor must be in (0, 1)");
    require(epochs >= 1, "plateau scheduler: epochs must be at least 1");
}

double PlateauScheduler::update(double value)
{
    if (improves(value, best_, threshold_)) {
        best_ = value;
        stale_ = 0;
    } else if (++stale_ >= epochs_) {
        lr_ *= factor_;
        ++decays_;
        stale_ = 0;
    }
    return lr_;
}

namespace {

struct Batch {
    Matrix x;
    std::vector<double> y;
    std::vector<double> re;
    std::vector<double> rc;
};

Batch gather(const DatasetTable& t, const IndexList& rows, std::span<const double> re, std::span<const double> rc)
{
    Batch b;
    b.x = t.features.select_rows(rows);
    const double scale = static_cast<double>(t.size()) / static_cast<double>(rows.size());
    b.y.reserve(rows.size());
    for (Index i : rows) {
        b.y.push_back(t.targets[i]);
        b.re.push_back(re[i] * scale);
        b.rc.push_back(rc[i] * scale);
    }
    return b;
}

double monitored(const LossBreakdown& l, EarlyStopMetric m)
{
    return m == EarlyStopMetric::combined ? l.total : l.wmse;
}

} // namespace

TrainResult train_one(const DatasetTable& table,
                      const DatasetDescriptor& descriptor,
                      const Fold& fold,
                      const TrainConfig& config,
                      std::uint64_t seed)
{
    config.validate();
    require(!fold.train.empty(), "train_one: empty training fold");
    for (Index i : fold.train) require(i < table.size(), "train_one: training index out of range");
    for (Index i : fold.validation) require(i < table.size(), "train_one: validation index out of range");

    const DatasetTable train = table.subset(fold.train);
    const bool has_validation = fold.validation.size() >= 2;
    const DatasetTable val = has_validation ? table.subset(fold.validation) : train;
    const std::size_t n = train.size();
    require(config.batch_size <= n, "train_one: batch_size exceeds the training fold size");

    // Densities, importances, groups.
    TrainResult result;
    result.profile = build_profile(train.targets, config.density);
    const auto re = compute_importances(result.profile, config.importance_e);
    const auto rc = compute_importances(result.profile, config.importance_c);
    const auto val_re = has_validation ? lookup_importances(train.targets, re, val.targets) : re;
    const auto val_rc = has_validation ? lookup_importances(train.targets, rc, val.targets) : rc;

    const auto train_rare = rare_mask(train.targets, descriptor);
    GroupPlan plan;
    if (config.sampler == SamplerKind::ssb) {
        plan = build_groups(train.targets, config.batch_size, count_true(train_rare));
    }

    ModelState model = init_model(config.arch, train.dim(), seed);
    set_input_standardization(model, train.features);

    auto validation_loss = [&](const ModelState& m) {
        const auto pred = predict(m, val.features);
        return combined_loss(val.targets, pred, val_re.values(), val_rc.values(), config.loss);
    };

    TrainHistory& history = result.history;
    EarlyStopping stopper(config.early_stop_patience, config.plateau_threshold);
    PlateauScheduler scheduler(config.opt.learning_rate, config.lr_decay_factor, config.lr_plateau_epochs,
                               config.plateau_threshold);
    OptimizerConfig opt = config.opt;
    std::optional<double> initial_loss;
    std::optional<ModelState> best_model;
    double best_value = 0.0;

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        opt.learning_rate = scheduler.learning_rate();
        const BatchList batches = config.sampler == SamplerKind::ssb
                                      ? epoch_batches(plan, seed, epoch)
                                      : uniform_epoch_batches(n, config.batch_size, seed, epoch);
        LossBreakdown epoch_loss;
        std::size_t used = 0;
        for (std::size_t j = 0; j < batches.size(); ++j) {
            const auto& rows = batches[j];
            if (rows.size() < 2) continue; // correlation and batch statistics need two points
            ++history.total_batches;
            if (std::none_of(rows.begin(), rows.end(), [&](Index i) { return bool(train_rare[i]); })) {
                ++history.rare_free_batches;
            }
            const Batch b = gather(train, rows, re.values(), rc.values());
            const std::uint64_t dropout_seed = mix64(mix64(seed ^ 0x6472ULL) ^ mix64(epoch * 1000003ULL + j));
            ForwardResult fwd = forward(model, b.x, true, dropout_seed);
            const LossBreakdown loss = combined_loss(b.y, fwd.predictions, b.re, b.rc, config.loss);
            if (!initial_loss) initial_loss = std::max(std::abs(loss.total), 1e-300);
            if (!std::isfinite(loss.total) || std::abs(loss.total) > config.divergence_factor * *initial_loss) {
                std::ostringstream os;
                os << "training diverged at epoch " << epoch << ", batch " << j << ": loss " << loss.total
                   << " (initial " << *initial_loss << ", lr " << opt.learning_rate << ")";
                throw DivergenceError(os.str());
            }
            const auto grad = loss_gradient(b.y, fwd.predictions, b.re, b.rc, config.loss);
            const Gradients g = backward(model, fwd.cache, grad);
            update_running_statistics(model, fwd.cache);
            adam_step(model, g, opt);
            epoch_loss.total += loss.total;
            epoch_loss.wmse += loss.wmse;
            epoch_loss.wpcc_loss += loss.wpcc_loss;
            ++used;
        }
        if (used > 0) {
            epoch_loss.total /= static_cast<double>(used);
            epoch_loss.wmse /= static_cast<double>(used);
            epoch_loss.wpcc_loss /= static_cast<double>(used);
        }
        const LossBreakdown vloss = validation_loss(model);
        const double value = monitored(vloss, config.early_stop_metric);
        if (!std::isfinite(value)) {
            throw DivergenceError("validation loss became non-finite at epoch " + std::to_string(epoch));
        }
        history.epochs.push_back({epoch, epoch_loss, value, opt.learning_rate});
        if (!best_model || value < best_value) {
            best_value = value;
            best_model = model;
            history.best_epoch = epoch;
        }
        stopper.update(value);
        scheduler.update(value);
        if (stopper.should_stop()) {
            history.early_stop_epoch = epoch;
            break;
        }
    }
    history.best_validation_loss = best_value;
    result.model = std::move(*best_model);
    return result;
}

namespace {

EvalReport evaluate_rows(const ModelState& model,
                         const DatasetTable& table,
                         const DatasetDescriptor& descriptor,
                         std::span<const Index> rows)
{
    const DatasetTable part = table.subset(rows);
    const auto pred = predict(model, part.features);
    return evaluate(part.targets, pred, rare_mask(part.targets, descriptor));
}

} // namespace

std::vector<RunOutcome> train_cv(const DatasetTable& table,
                                 const DatasetDescriptor& descriptor,
                                 const SplitPlan& plan,
                                 const TrainConfig& config,
                                 const CvOptions& options)
{
    config.validate();
    plan.validate(table.size());
    require(!plan.folds.empty(), "train_cv: the split plan has no folds");
    const RunFunction runner = options.runner ? options.runner : RunFunction(train_one);

    std::vector<RunOutcome> outcomes;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        for (std::uint64_t s : config.seeds) {
            RunOutcome o;
            o.fold = f;
            o.seed = s;
            outcomes.push_back(std::move(o));
        }
    }
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < outcomes.size(); i = next++) {
            RunOutcome& o = outcomes[i];
            try {
                const Fold& fold = plan.folds[o.fold];
                TrainResult r = runner(table, descriptor, fold, config, o.seed);
                if (fold.validation.size() >= 1) {
                    o.validation = evaluate_rows(r.model, table, descriptor, fold.validation);
                }
                if (!plan.test_indices.empty()) {
                    o.test = evaluate_rows(r.model, table, descriptor, plan.test_indices);
                }
                if (!options.keep_models) r.model = ModelState{};
                o.result = std::move(r);
            } catch (const std::exception& e) {
                o.error = e.what();
                o.result.reset();
            }
        }
    };
    const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, outcomes.size());
    if (jobs == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    return outcomes;
}

std::optional<EvalReport> aggregate_outcomes(const std::vector<RunOutcome>& outcomes, bool use_test)
{
    std::map<std::uint64_t, std::vector<EvalReport>> by_seed;
    for (const auto& o : outcomes) {
        if (!o.ok()) continue;
        const auto& r = use_test && o.test ? o.test : o.validation;
        if (r) by_seed[o.seed].push_back(*r);
    }
    if (by_seed.empty()) return std::nullopt;
    std::vector<EvalReport> per_seed;
    for (const auto& [seed, reports] : by_seed) per_seed.push_back(mean_report(reports));
    return aggregate(per_seed);
}

namespace {

/// True when `a` is a better validation result than `b`.
bool better(const std::optional<EvalReport>& a, const std::optional<EvalReport>& b)
{
    if (!a || !a->aore()) return false;
    if (!b || !b->aore()) return true;
    const double ea = *a->aore();
    const double eb = *b->aore();
    const double tol = 1e-9 * std::max({std::abs(ea), std::abs(eb), 1e-300});
    if (std::abs(ea - eb) > tol) return ea < eb;
    return a->aorc().value_or(-2.0) > b->aorc().value_or(-2.0);
}

std::string describe(const SweepCell& c)
{
    std::ostringstream os;
    os << "stage " << c.stage << ": alpha_e=" << c.alpha_e << " lambda=" << c.lambda << " alpha_c=" << c.alpha_c;
    if (c.validation && c.validation->aore()) os << " val_AORE=" << *c.validation->aore();
    if (c.validation && c.validation->aorc()) os << " val_AORC=" << *c.validation->aorc();
    if (c.failures) os << " failures=" << c.failures;
    return os.str();
}

} // namespace

SweepReport sweep(const DatasetTable& table,
                  const DatasetDescriptor& descriptor,
                  const SplitPlan& plan,
                  const TrainConfig& base,
                  const SweepGrid& grid,
                  const CvOptions& options)
{
    require(!grid.alpha_e.empty() && !grid.lambda.empty(), "sweep: alpha_e and lambda grids must be non-empty");
    base.validate();
    SweepReport report;
    std::map<std::tuple<double, double, double, int>, std::size_t> seen;

    auto run_cell = [&](const std::string& stage, TrainConfig cfg) -> std::size_t {
        const auto key = std::make_tuple(cfg.importance_e.alpha, cfg.loss.lambda, cfg.importance_c.alpha,
                                         static_cast<int>(cfg.importance_c.family));
        if (auto it = seen.find(key); it != seen.end()) {
            report.log.push_back("stage " + stage + ": reusing " + describe(report.cells[it->second]));
            return it->second;
        }
        SweepCell cell;
        cell.stage = stage;
        cell.alpha_e = cfg.importance_e.alpha;
        cell.lambda = cfg.loss.lambda;
        cell.alpha_c = cfg.importance_c.alpha;
        cell.outcomes = train_cv(table, descriptor, plan, cfg, options);
        for (const auto& o : cell.outcomes) cell.failures += o.ok() ? 0 : 1;
        cell.validation = aggregate_outcomes(cell.outcomes, false);
        cell.test = aggregate_outcomes(cell.outcomes, true);
        report.log.push_back(describe(cell));
        report.cells.push_back(std::move(cell));
        seen.emplace(key, report.cells.size() - 1);
        return report.cells.size() - 1;
    };
    auto best_of = [&](const std::vector<std::size_t>& ids) {
        std::size_t best = ids.front();
        for (std::size_t id : ids) {
            if (better(report.cells[id].validation, report.cells[best].validation)) best = id;
        }
        return best;
    };

    TrainConfig cfg = base;
    cfg.loss.lambda = 0.5;
    std::vector<std::size_t> ids;
    for (double a : grid.alpha_e) {
        cfg.importance_e.alpha = a;
        ids.push_back(run_cell("alpha_e", cfg));
    }
    std::size_t best = best_of(ids);
    cfg.importance_e.alpha = report.cells[best].alpha_e;

    ids.clear();
    for (double l : grid.lambda) {
        cfg.loss.lambda = l;
        ids.push_back(run_cell("lambda", cfg));
    }
    best = best_of(ids);
    cfg.loss.lambda = report.cells[best].lambda;

    if (!grid.alpha_c.empty()) {
        ids.assign(1, best);
        if (cfg.importance_c.family == ImportanceFamily::constant) cfg.importance_c.family = ImportanceFamily::mdi;
        for (double a : grid.alpha_c) {
            cfg.importance_c.alpha = a;
            ids.push_back(run_cell("alpha_c", cfg));
        }
        best = best_of(ids);
        if (best == ids.front()) {
            cfg.importance_c = base.importance_c;
        } else {
            cfg.importance_c.alpha = report.cells[best].alpha_c;
        }
    }
    report.best_cell = best;
    report.best_config = cfg;
    report.log.push_back("selected " + describe(report.cells[best]));
    return report;
}

} // namespace cisir
