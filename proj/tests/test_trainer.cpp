#include "doctest.h"

#include <atomic>
#include <cmath>
#include <random>

#include "cisir/common.hpp"
#include "cisir/trainer.hpp"
#include "test_support.hpp"

using namespace cisir;

namespace {

/// y = w . x on standard normal features; `flip` rows get y = -w . x.
DatasetTable linear_table(std::size_t n, std::size_t d, std::uint64_t seed, std::size_t flip_from = SIZE_MAX)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    DatasetTable t;
    t.features = Matrix(n, d);
    std::vector<double> w(d);
    for (std::size_t j = 0; j < d; ++j) w[j] = 1.0 / std::sqrt(static_cast<double>(d)) * (j % 2 ? -1.0 : 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        double y = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            t.features(i, j) = g(rng);
            y += w[j] * t.features(i, j);
        }
        t.targets.push_back(i >= flip_from ? -y : y);
        t.ids.push_back(i);
    }
    for (std::size_t j = 0; j < d; ++j) t.feature_names.push_back("x" + std::to_string(j));
    t.target_name = "y";
    return t;
}

DatasetDescriptor descriptor()
{
    DatasetDescriptor d;
    d.name = "linear";
    d.target_column = "y";
    d.lower_threshold = -1.5;
    d.upper_threshold = 1.5;
    return d;
}

TrainConfig tiny_config()
{
    TrainConfig c;
    c.arch.hidden_widths = {16, 8};
    c.arch.embed_dim = 8;
    c.batch_size = 32;
    c.max_epochs = 20;
    c.early_stop_patience = 20;
    c.seeds = {0};
    return c;
}

Fold first_fold(std::size_t n_train, std::size_t n_val)
{
    Fold f;
    for (std::size_t i = 0; i < n_train; ++i) f.train.push_back(i);
    for (std::size_t i = n_train; i < n_train + n_val; ++i) f.validation.push_back(i);
    return f;
}

/// Quick deterministic runner: skips training, records the call.
TrainResult fake_run(const DatasetTable& table, const DatasetDescriptor&, const Fold& fold, const TrainConfig& cfg,
                     std::uint64_t seed)
{
    TrainResult r;
    r.model = init_model(cfg.arch, table.dim(), seed);
    set_input_standardization(r.model, table.subset(fold.train).features);
    r.history.epochs.push_back({0, {}, 1.0, cfg.opt.learning_rate});
    r.history.best_validation_loss = 1.0;
    r.profile = build_profile(table.subset(fold.train).targets, cfg.density);
    return r;
}

} // namespace

TEST_CASE("early stopping semantics")
{
    EarlyStopping s(3, 1e-5);
    CHECK(s.update(1.0));
    CHECK_FALSE(s.update(1.0)); // no relative improvement
    CHECK_FALSE(s.update(0.999995)); // below the threshold
    CHECK(s.stale_epochs() == 2);
    CHECK(s.update(0.9));
    CHECK(s.stale_epochs() == 0);
    for (int i = 0; i < 3; ++i) s.update(2.0);
    CHECK(s.should_stop());
    CHECK_THROWS_AS(EarlyStopping(0, 1e-5), ConfigError);
}

TEST_CASE("plateau scheduler decays by a factor after the plateau length")
{
    PlateauScheduler p(1e-3, 0.95, 50, 1e-5);
    p.update(1.0);
    for (int i = 0; i < 49; ++i) CHECK(p.update(1.0) == 1e-3);
    CHECK(p.update(1.0) == doctest::Approx(1e-3 * 0.95));
    for (int i = 0; i < 100; ++i) p.update(1.0);
    CHECK(p.decays() == 3);
    CHECK(p.learning_rate() == doctest::Approx(1e-3 * std::pow(0.95, 3)));
    p.update(0.5); // improvement resets the counter, not the rate
    CHECK(p.learning_rate() == doctest::Approx(1e-3 * std::pow(0.95, 3)));
    CHECK_THROWS_AS(PlateauScheduler(1e-3, 1.0, 50, 1e-5), ConfigError);
}

TEST_CASE("training is deterministic in the seed")
{
    const auto t = linear_table(300, 4, 1);
    const auto fold = first_fold(240, 60);
    auto cfg = tiny_config();
    cfg.max_epochs = 5;
    const auto a = train_one(t, descriptor(), fold, cfg, 3);
    const auto b = train_one(t, descriptor(), fold, cfg, 3);
    CHECK(a.history == b.history);
    CHECK(checkpoint_to_json(a.model) == checkpoint_to_json(b.model));
    const auto c = train_one(t, descriptor(), fold, cfg, 4);
    CHECK_FALSE(a.history == c.history);
}

TEST_CASE("weighted MSE alone fits noiseless linear data")
{
    const auto t = linear_table(512, 4, 2);
    const auto fold = first_fold(448, 64);
    auto cfg = tiny_config();
    cfg.loss.lambda = 0.0;
    cfg.importance_e = {ImportanceFamily::constant, 1.0};
    cfg.sampler = SamplerKind::uniform;
    cfg.arch.use_batchnorm = false;
    cfg.opt.learning_rate = 3e-3;
    cfg.max_epochs = 300;
    cfg.early_stop_patience = 300;
    const auto r = train_one(t, descriptor(), fold, cfg, 0);
    CHECK(r.history.epochs.back().train.wmse < 1e-3);
    CHECK(r.history.best_validation_loss < 1e-2);
}

TEST_CASE("patience one stops right after the first worsening epoch")
{
    // Validation rows follow the opposite relationship, so fitting the
    // training rows makes the validation loss worse.
    const auto t = linear_table(400, 4, 3, 300);
    const auto fold = first_fold(300, 100);
    auto cfg = tiny_config();
    cfg.early_stop_patience = 1;
    cfg.opt.learning_rate = 1e-2;
    cfg.max_epochs = 50;
    const auto r = train_one(t, descriptor(), fold, cfg, 0);
    REQUIRE(r.history.early_stop_epoch.has_value());
    CHECK(*r.history.early_stop_epoch <= 1);
    CHECK(r.history.epochs.size() <= 2);
}

TEST_CASE("history invariants: best model, lr schedule, batch counts")
{
    const auto t = linear_table(300, 4, 4);
    const auto fold = first_fold(240, 60);
    auto cfg = tiny_config();
    cfg.max_epochs = 30;
    cfg.lr_plateau_epochs = 2; // make decays happen in a short run
    cfg.opt.learning_rate = 5e-2;
    const auto r = train_one(t, descriptor(), fold, cfg, 1);
    const auto& h = r.history;
    double best = 1e300;
    std::size_t arg = 0;
    for (const auto& e : h.epochs) {
        if (e.validation_loss < best) best = e.validation_loss, arg = e.epoch;
        const double k = std::log(e.learning_rate / cfg.opt.learning_rate) / std::log(0.95);
        CHECK(std::abs(k - std::round(k)) < 1e-9);
    }
    for (std::size_t i = 1; i < h.epochs.size(); ++i) CHECK(h.epochs[i].learning_rate <= h.epochs[i - 1].learning_rate);
    CHECK(h.best_validation_loss == best);
    CHECK(h.best_epoch == arg);
    CHECK(h.total_batches == h.epochs.size() * ((240 + 31) / 32));
    CHECK(h.rare_free_batches <= h.total_batches);

    // The returned model is the best-epoch one: its validation loss matches.
    const auto val = t.subset(fold.validation);
    const auto train = t.subset(fold.train);
    const auto profile = build_profile(train.targets, cfg.density);
    const auto re = compute_importances(profile, cfg.importance_e);
    const auto rc = compute_importances(profile, cfg.importance_c);
    const auto vre = lookup_importances(train.targets, re, val.targets);
    const auto vrc = lookup_importances(train.targets, rc, val.targets);
    const auto loss = combined_loss(val.targets, predict(r.model, val.features), vre.values(), vrc.values(), cfg.loss);
    CHECK(loss.total == doctest::Approx(h.best_validation_loss).epsilon(1e-12));
}

TEST_CASE("divergence is detected")
{
    const auto t = linear_table(200, 4, 5);
    auto cfg = tiny_config();
    cfg.divergence_factor = 1.0 + 1e-12; // any growth counts
    cfg.opt.learning_rate = 5.0;
    CHECK_THROWS_AS(train_one(t, descriptor(), first_fold(160, 40), cfg, 0), DivergenceError);
}

TEST_CASE("cross-validation runs every fold and seed")
{
    const auto t = linear_table(600, 4, 6);
    const auto plan = stratified_split(t, 1.0 / 3.0, 4, 0);
    auto cfg = tiny_config();
    cfg.seeds = {0, 1, 2, 3, 4};
    std::atomic<int> calls{0};
    CvOptions opt;
    opt.jobs = 3;
    opt.runner = [&](const DatasetTable& a, const DatasetDescriptor& b, const Fold& f, const TrainConfig& c,
                     std::uint64_t s) {
        ++calls;
        return fake_run(a, b, f, c, s);
    };
    const auto out = train_cv(t, descriptor(), plan, cfg, opt);
    CHECK(calls == 20);
    REQUIRE(out.size() == 20);
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i].fold == i / 5);
        CHECK(out[i].seed == i % 5);
        CHECK(out[i].ok());
        CHECK(out[i].test.has_value());
        CHECK(out[i].validation.has_value());
    }
    const auto agg = aggregate_outcomes(out);
    REQUIRE(agg.has_value());
    CHECK(agg->runs == 5);
}

TEST_CASE("a failing run leaves the others intact")
{
    const auto t = linear_table(600, 4, 7);
    const auto plan = stratified_split(t, 1.0 / 3.0, 4, 0);
    auto cfg = tiny_config();
    cfg.seeds = {0, 1, 2, 3, 4};
    CvOptions opt;
    opt.jobs = 2;
    std::atomic<bool> thrown{false};
    opt.runner = [&](const DatasetTable& a, const DatasetDescriptor& b, const Fold& f, const TrainConfig& c,
                     std::uint64_t s) {
        if (s == 2 && !thrown.exchange(true)) throw DivergenceError("synthetic divergence");
        return fake_run(a, b, f, c, s);
    };
    const auto out = train_cv(t, descriptor(), plan, cfg, opt);
    int failed = 0;
    for (const auto& o : out) {
        if (!o.ok()) {
            ++failed;
            CHECK(o.error.find("synthetic divergence") != std::string::npos);
            CHECK(o.seed == 2);
        }
    }
    CHECK(failed == 1);
    CHECK(out.size() == 20);
    CHECK(aggregate_outcomes(out).has_value());
}

TEST_CASE("aggregation averages folds within a seed first")
{
    std::vector<RunOutcome> out;
    for (std::size_t fold = 0; fold < 2; ++fold) {
        for (std::uint64_t seed = 0; seed < 2; ++seed) {
            RunOutcome o;
            o.fold = fold;
            o.seed = seed;
            o.result = TrainResult{};
            EvalReport r;
            r.value[0] = 0.1 * static_cast<double>(1 + fold + 2 * seed); // seed 0: .1,.2  seed 1: .3,.4
            o.test = r;
            o.validation = r;
            out.push_back(o);
        }
    }
    const auto agg = aggregate_outcomes(out);
    REQUIRE(agg.has_value());
    CHECK(agg->runs == 2);
    CHECK(*agg->mae() == doctest::Approx(0.25));
    CHECK(*agg->se(Metric::mae) == doctest::Approx(0.1)); // sd(.15,.35)/sqrt 2
}

TEST_CASE("single-point sweep equals plain cross-validation")
{
    const auto t = linear_table(300, 4, 8);
    auto plan = stratified_split(t, 1.0 / 3.0, 4, 0);
    plan.folds.resize(1);
    auto cfg = tiny_config();
    cfg.max_epochs = 3;
    cfg.seeds = {0, 1};
    const SweepGrid grid{{cfg.importance_e.alpha}, {cfg.loss.lambda}, {}};
    const auto rep = sweep(t, descriptor(), plan, cfg, grid);
    REQUIRE(rep.cells.size() == 1);
    const auto direct = aggregate_outcomes(train_cv(t, descriptor(), plan, cfg));
    REQUIRE(direct.has_value());
    REQUIRE(rep.cells[0].test.has_value());
    for (Metric m : kAllMetrics) CHECK(rep.cells[0].test->get(m) == direct->get(m));
    CHECK(rep.best_cell == 0);
}

TEST_CASE("staged sweep order and reuse")
{
    const auto t = linear_table(300, 4, 9);
    auto plan = stratified_split(t, 1.0 / 3.0, 4, 0);
    plan.folds.resize(1);
    auto cfg = tiny_config();
    cfg.seeds = {0};
    CvOptions opt;
    opt.runner = fake_run;
    const SweepGrid grid{{0.5, 1.0}, {0.1, 0.5}, {2.0}};
    const auto rep = sweep(t, descriptor(), plan, cfg, grid, opt);
    // alpha_e x2 at lambda 0.5, lambda 0.1 (0.5 reused), alpha_c x1.
    REQUIRE(rep.cells.size() == 4);
    CHECK(rep.cells[0].stage == "alpha_e");
    CHECK(rep.cells[1].stage == "alpha_e");
    CHECK(rep.cells[2].stage == "lambda");
    CHECK(rep.cells[2].lambda == 0.1);
    CHECK(rep.cells[3].stage == "alpha_c");
    CHECK(rep.cells[3].alpha_c == 2.0);
    CHECK(rep.best_config.importance_e.alpha == rep.cells[rep.best_cell].alpha_e);
    bool reused = false;
    for (const auto& line : rep.log) reused = reused || line.find("reusing") != std::string::npos;
    CHECK(reused);
}

TEST_CASE("train config validation")
{
    auto c = tiny_config();
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.seeds.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(train_one(linear_table(20, 2, 1), descriptor(), first_fold(10, 10),
                              [] {
                                  auto k = tiny_config();
                                  k.batch_size = 64;
                                  return k;
                              }(),
                              0),
                    Error);
    CHECK(parse_early_stop_metric("wmse") == EarlyStopMetric::wmse);
}
