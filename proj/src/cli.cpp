#include "cisir/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <regex>
#include <sstream>

#include "cisir/plot.hpp"

namespace cisir {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::uint64_t> parse_seed_list(const std::string& text)
{
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    auto number = [&](const std::string& s) -> std::uint64_t {
        require(!s.empty() && s.find_first_not_of("0123456789") == std::string::npos,
                "bad seed list '" + text + "': expected e.g. 0,1,2 or 0-4");
        return std::stoull(s);
    };
    while (std::getline(ss, item, ',')) {
        item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
        const auto dash = item.find('-');
        if (dash == std::string::npos) {
            seeds.push_back(number(item));
        } else {
            const auto lo = number(item.substr(0, dash));
            const auto hi = number(item.substr(dash + 1));
            require(lo <= hi && hi - lo < 1000000, "bad seed range '" + item + "'");
            for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
        }
    }
    require(!seeds.empty(), "seed list is empty");
    return seeds;
}

ExperimentConfig resolve_config(const CliOptions& opts)
{
    require(!opts.config.empty(), "a config file is required (--config)");
    ExperimentConfig c = load_experiment_config(opts.config, opts.paper_scale);
    json overrides = json::object();
    if (opts.seed_list) {
        c.train.seeds = *opts.seed_list;
        overrides["seeds"] = *opts.seed_list;
    }
    if (opts.sampler) {
        c.train.sampler = parse_sampler_kind(*opts.sampler);
        overrides["sampler"] = *opts.sampler;
    }
    if (opts.bandwidth) {
        require(*opts.bandwidth > 0.0, "--bandwidth must be positive");
        c.train.density.bandwidth = *opts.bandwidth;
        overrides["bandwidth"] = *opts.bandwidth;
    }
    if (opts.lambda) {
        c.train.loss.lambda = *opts.lambda;
        c.sweep.lambda = {*opts.lambda};
        overrides["lambda"] = *opts.lambda;
    }
    if (opts.alpha_e) {
        c.train.importance_e.alpha = *opts.alpha_e;
        c.sweep.alpha_e = {*opts.alpha_e};
        overrides["alpha_e"] = *opts.alpha_e;
    }
    if (opts.alpha_c) {
        // A shape parameter only means something for a non-constant family.
        if (c.train.importance_c.family == ImportanceFamily::constant) c.train.importance_c.family = ImportanceFamily::mdi;
        c.train.importance_c.alpha = *opts.alpha_c;
        overrides["alpha_c"] = *opts.alpha_c;
    }
    if (!opts.grid_alpha_e.empty()) c.sweep.alpha_e = opts.grid_alpha_e;
    if (!opts.grid_lambda.empty()) c.sweep.lambda = opts.grid_lambda;
    if (!opts.grid_alpha_c.empty()) c.sweep.alpha_c = opts.grid_alpha_c;
    if (opts.out) c.output_dir = *opts.out;
    if (!overrides.empty()) c.source["cli_overrides"] = overrides;
    c.validate();
    return c;
}

namespace {

std::string fmt(double v, int precision = 4)
{
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

json effective_json(const ExperimentConfig& c)
{
    json j;
    j["name"] = c.name;
    j["descriptor"] = to_json(c.descriptor);
    j["data"] = c.csv ? json(c.csv->string()) : json(to_json(*c.synthetic));
    if (c.test_csv) j["test_csv"] = c.test_csv->string();
    j["split"] = {{"test_fraction", c.split.test_fraction},
                  {"k_folds", c.split.k_folds},
                  {"folds_used", c.split.folds_used ? json(*c.split.folds_used) : json(nullptr)},
                  {"seed", c.split.seed}};
    j["train"] = to_json(c.train);
    return j;
}

std::string run_name(std::size_t fold, std::uint64_t seed)
{
    return "fold" + std::to_string(fold) + "_seed" + std::to_string(seed);
}

std::size_t total_rare(const PreparedData& d, const IndexList& rows)
{
    std::size_t n = 0;
    for (Index i : rows) n += rare_mask(std::span<const double>(&d.table.targets[i], 1), d.descriptor)[0] ? 1 : 0;
    return n;
}

void describe_data(const PreparedData& d, std::ostream& out)
{
    out << "dataset: " << d.table.size() << " rows x " << d.table.dim() << " features, "
        << count_true(rare_mask(d.table, d.descriptor)) << " rare\n";
    out << "split: " << d.plan.train_indices.size() << " train+validation, " << d.plan.test_indices.size() << " test ("
        << total_rare(d, d.plan.test_indices) << " rare), " << d.plan.folds.size() << " fold(s)\n";
    for (std::size_t f = 0; f < d.plan.folds.size(); ++f) {
        out << "  fold " << f << ": " << d.plan.folds[f].train.size() << " train / " << d.plan.folds[f].validation.size()
            << " validation\n";
    }
}

/// Self-checks that do not depend on the training dynamics.
std::vector<std::string> check_outcome(const RunOutcome& o)
{
    std::vector<std::string> problems;
    auto guard = [&](const char* what, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            problems.push_back(run_name(o.fold, o.seed) + ": " + what + ": " + e.what());
        }
    };
    if (!o.ok()) return problems;
    guard("profile", [&] { o.result->profile.check_invariants(); });
    guard("model", [&] { o.result->model.check_invariants(); });
    if (o.validation) guard("validation metrics", [&] { o.validation->check_invariants(); });
    if (o.test) guard("test metrics", [&] { o.test->check_invariants(); });
    guard("history", [&] {
        const auto& h = o.result->history;
        double lr = std::numeric_limits<double>::infinity();
        double best = std::numeric_limits<double>::infinity();
        for (const auto& e : h.epochs) {
            require(e.learning_rate <= lr, "learning rate increased");
            lr = e.learning_rate;
            best = std::min(best, e.validation_loss);
        }
        require(h.epochs.empty() || best == h.best_validation_loss, "best validation loss is not the minimum");
    });
    return problems;
}

PlotSpec scatter_plot(const RunOutcome& o, const PreparedData& d, const std::string& title)
{
    const bool has_test = !d.plan.test_indices.empty();
    const IndexList& rows = has_test ? d.plan.test_indices : d.plan.folds[o.fold].validation;
    const DatasetTable sub = d.table.subset(rows);
    const auto yhat = predict(o.result->model, sub.features);
    const auto rare = rare_mask(sub, d.descriptor);
    PlotSeries frequent{"frequent", {}, {}, "#7f7f7f", true, 1.4};
    PlotSeries rare_s{"rare", {}, {}, "#d62728", true, 2.2};
    for (std::size_t i = 0; i < sub.size(); ++i) {
        auto& s = rare[i] ? rare_s : frequent;
        s.x.push_back(sub.targets[i]);
        s.y.push_back(yhat[i]);
    }
    PlotSpec spec;
    spec.title = title + (has_test ? " (test)" : " (validation)");
    spec.x_label = "actual";
    spec.y_label = "predicted";
    spec.diagonal = true;
    spec.series = {frequent, rare_s};
    return spec;
}

void write_json(const fs::path& path, const json& j)
{
    write_file_atomic(path, j.dump(2) + "\n");
}

json outcome_record(const RunOutcome& o, const std::string& hash, const std::optional<fs::path>& checkpoint)
{
    json r;
    r["config_hash"] = hash;
    r["fold"] = o.fold;
    r["seed"] = o.seed;
    r["ok"] = o.ok();
    if (!o.ok()) {
        r["error"] = o.error;
        return r;
    }
    const auto& p = o.result->profile;
    r["density"] = {{"bandwidth", p.bandwidth},
                    {"rho_freq", p.rho_freq},
                    {"rho_density", p.rho_density},
                    {"log_mismatch", p.log_mismatch},
                    {"within_tolerance", p.within_tolerance}};
    r["history"] = to_json(o.result->history);
    r["validation"] = o.validation ? to_json(*o.validation) : json(nullptr);
    r["test"] = o.test ? to_json(*o.test) : json(nullptr);
    r["checkpoint"] = checkpoint ? json(checkpoint->string()) : json(nullptr);
    return r;
}

struct RunArtifacts {
    std::optional<EvalReport> summary;
    std::vector<std::string> problems;
    std::size_t failures = 0;
};

/// Per-run records, checkpoints and scatter plots below `dir`.
RunArtifacts write_runs(const fs::path& dir,
                        const std::vector<RunOutcome>& outcomes,
                        const PreparedData& data,
                        const std::string& hash,
                        bool checkpoints,
                        std::ostream& out)
{
    RunArtifacts a;
    for (const auto& o : outcomes) {
        const std::string name = run_name(o.fold, o.seed);
        std::optional<fs::path> ckpt;
        if (o.ok()) {
            if (checkpoints) {
                ckpt = dir / "checkpoints" / (name + ".json");
                fs::create_directories(ckpt->parent_path());
                save_checkpoint(o.result->model, *ckpt);
            }
            write_svg(dir / "plots" / ("scatter_" + name + ".svg"), scatter_plot(o, data, name));
        } else {
            ++a.failures;
            a.problems.push_back(name + ": run failed: " + o.error);
        }
        for (auto& p : check_outcome(o)) a.problems.push_back(std::move(p));
        write_json(dir / "runs" / (name + ".json"), outcome_record(o, hash, ckpt));
        out << "  " << name << ": ";
        if (o.ok()) {
            const auto& h = o.result->history;
            out << h.epochs.size() << " epochs, best " << h.best_epoch << ", val loss " << fmt(h.best_validation_loss);
            const auto& r = o.test ? o.test : o.validation;
            if (r && r->aore()) out << ", AORE " << fmt(*r->aore());
            if (r && r->aorc()) out << ", AORC " << fmt(*r->aorc());
            out << "\n";
        } else {
            out << "FAILED (" << o.error << ")\n";
        }
    }
    a.summary = aggregate_outcomes(outcomes, !data.plan.test_indices.empty());
    if (a.summary) {
        try {
            a.summary->check_invariants();
        } catch (const std::exception& e) {
            a.problems.push_back(std::string("aggregate metrics: ") + e.what());
        }
    }
    return a;
}

void write_reports(const fs::path& dir, const std::vector<NamedReport>& rows, const std::string& stem = "report")
{
    write_file_atomic(dir / (stem + ".txt"), render_text_table(rows));
    write_file_atomic(dir / (stem + ".csv"), render_csv(rows));
    json j = json::object();
    for (const auto& [name, r] : rows) j[name] = to_json(r);
    write_json(dir / (stem + ".json"), j);
}

void write_config_copy(const fs::path& dir, const ExperimentConfig& c, const std::string& hash)
{
    json j = c.source;
    j["resolved"] = effective_json(c);
    j["config_hash"] = hash;
    write_json(dir / "config.json", j);
}

int finish(const std::vector<std::string>& problems, std::ostream& out)
{
    for (const auto& p : problems) out << "error: " << p << "\n";
    return problems.empty() ? 0 : 1;
}

template <typename Fn>
int guarded(std::ostream& out, Fn&& fn)
{
    try {
        return fn();
    } catch (const ConfigError& e) {
        out << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        out << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        out << "error: " << e.what() << "\n";
        return 1;
    }
}

std::vector<double> training_targets(const PreparedData& d)
{
    std::vector<double> y;
    y.reserve(d.plan.train_indices.size());
    for (Index i : d.plan.train_indices) y.push_back(d.table.targets[i]);
    return y;
}

} // namespace

int cmd_density(const CliOptions& opts, std::ostream& out)
{
    return guarded(out, [&] {
        const ExperimentConfig c = resolve_config(opts);
        const PreparedData data = prepare_data(c);
        describe_data(data, out);
        const auto y = training_targets(data);
        const DensityProfile p = build_profile(y, c.train.density);
        p.check_invariants();
        out << "rho (frequency, " << c.train.density.n_bins << " bins): " << fmt(p.rho_freq, 6) << "\n";
        out << "bandwidth h: " << fmt(p.bandwidth, 6) << (p.bandwidth_solved ? " (solved)" : " (given)") << "\n";
        out << "rho_d: " << fmt(p.rho_density, 6) << "\n";
        out << "log mismatch |log rho_d - log rho|: " << fmt(p.log_mismatch, 4)
            << (p.within_tolerance ? "" : "  WARNING: outside tolerance " + fmt(c.train.density.tolerance)) << "\n";

        fs::create_directories(c.output_dir);
        json j = to_json(p);
        j["config_hash"] = hex64(config_hash(effective_json(c)));
        write_json(c.output_dir / "profile.json", j);

        const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
        const double pad = 0.05 * (*hi - *lo);
        std::vector<double> grid(400);
        for (std::size_t i = 0; i < grid.size(); ++i)
            grid[i] = *lo - pad + (*hi - *lo + 2 * pad) * static_cast<double>(i) / static_cast<double>(grid.size() - 1);
        auto curve = kde_density(y, p.bandwidth, grid, {8.0, KdeMethod::automatic});
        const double peak = *std::max_element(p.raw.begin(), p.raw.end());
        for (double& v : curve) v /= peak + p.epsilon;
        PlotSpec spec;
        spec.title = c.name + ": normalized target density (h = " + fmt(p.bandwidth) + ")";
        spec.x_label = "target";
        spec.y_label = "d(y)";
        spec.series.push_back({"KDE", grid, curve, "#1f77b4", false, 1.6});
        std::vector<double> ty(p.normalized.begin(), p.normalized.end());
        PlotSeries rare{"rare targets", {}, {}, "#d62728", true, 1.4};
        PlotSeries frequent{"frequent targets", {}, {}, "#7f7f7f", true, 1.0};
        const auto mask = rare_mask(y, data.descriptor);
        for (std::size_t i = 0; i < y.size(); ++i) (mask[i] ? rare : frequent).x.push_back(y[i]), (mask[i] ? rare : frequent).y.push_back(ty[i]);
        spec.series.push_back(frequent);
        spec.series.push_back(rare);
        write_svg(c.output_dir / "density.svg", spec);
        out << "wrote " << (c.output_dir / "density.svg").string() << " and " << (c.output_dir / "profile.json").string() << "\n";
        return 0;
    });
}

int cmd_train(const CliOptions& opts, std::ostream& out)
{
    return guarded(out, [&] {
        const ExperimentConfig c = resolve_config(opts);
        const std::string hash = hex64(config_hash(effective_json(c)));
        if (opts.dry_run) out << effective_json(c).dump(2) << "\n";
        const PreparedData data = prepare_data(c);
        describe_data(data, out);
        out << "config hash " << hash << ", " << data.plan.folds.size() * c.train.seeds.size() << " run(s), output "
            << c.output_dir.string() << "\n";
        if (opts.dry_run) return 0;
        fs::create_directories(c.output_dir);
        write_config_copy(c.output_dir, c, hash);
        CvOptions cv;
        cv.jobs = std::max<std::size_t>(1, opts.jobs);
        const auto outcomes = train_cv(data.table, data.descriptor, data.plan, c.train, cv);
        auto artifacts = write_runs(c.output_dir, outcomes, data, hash, !opts.no_checkpoints, out);
        if (artifacts.summary) {
            const std::vector<NamedReport> rows{{c.name, *artifacts.summary}};
            const std::string table = render_text_table(rows);
            out << table;
            write_reports(c.output_dir, rows);
        } else {
            artifacts.problems.push_back("no run produced metrics");
        }
        out << (outcomes.size() - artifacts.failures) << "/" << outcomes.size() << " runs completed\n";
        return finish(artifacts.problems, out);
    });
}

int cmd_sweep(const CliOptions& opts, std::ostream& out)
{
    return guarded(out, [&] {
        const ExperimentConfig c = resolve_config(opts);
        if (opts.dry_run) out << effective_json(c).dump(2) << "\n";
        const PreparedData data = prepare_data(c);
        describe_data(data, out);
        const std::size_t cells_max = c.sweep.alpha_e.size() + c.sweep.lambda.size() + c.sweep.alpha_c.size();
        out << "grid: alpha_e " << json(c.sweep.alpha_e).dump() << ", lambda " << json(c.sweep.lambda).dump()
            << ", alpha_c " << json(c.sweep.alpha_c).dump() << " (at most " << cells_max << " cells x "
            << data.plan.folds.size() * c.train.seeds.size() << " runs)\n";
        if (opts.dry_run) return 0;
        fs::create_directories(c.output_dir);
        CvOptions cv;
        cv.jobs = std::max<std::size_t>(1, opts.jobs);
        const SweepReport report = sweep(data.table, data.descriptor, data.plan, c.train, c.sweep, cv);
        for (const auto& line : report.log) out << line << "\n";
        write_file_atomic(c.output_dir / "sweep_log.txt", [&] {
            std::string s;
            for (const auto& line : report.log) s += line + "\n";
            return s;
        }());

        // One row per cell x seed (folds averaged); cell means go to sweep_table.*.
        std::vector<std::string> problems;
        std::ostringstream csv;
        csv << std::setprecision(17);
        csv << "cell,stage,alpha_e,lambda,alpha_c,seed";
        for (const char* split : {"val", "test"})
            for (Metric m : kAllMetrics) csv << "," << split << "_" << to_string(m);
        csv << "\n";
        auto metrics = [&](const std::optional<EvalReport>& r) {
            for (Metric m : kAllMetrics) {
                csv << ",";
                if (r && r->get(m)) csv << *r->get(m);
            }
        };
        std::vector<NamedReport> rows;
        for (std::size_t idx = 0; idx < report.cells.size(); ++idx) {
            const auto& cell = report.cells[idx];
            std::map<std::uint64_t, std::vector<RunOutcome>> by_seed;
            for (const auto& o : cell.outcomes) by_seed[o.seed].push_back(o);
            for (const auto& [seed, group] : by_seed) {
                csv << idx << "," << cell.stage << "," << cell.alpha_e << "," << cell.lambda << "," << cell.alpha_c << ","
                    << seed;
                metrics(aggregate_outcomes(group, false));
                metrics(data.plan.test_indices.empty() ? std::nullopt : aggregate_outcomes(group, true));
                csv << "\n";
            }
            if (cell.failures) problems.push_back("cell " + std::to_string(idx) + ": " + std::to_string(cell.failures) + " failed run(s)");
            const auto& shown = cell.test ? cell.test : cell.validation;
            if (shown) {
                std::string label = cell.stage + " ae=" + fmt(cell.alpha_e, 3) + " l=" + fmt(cell.lambda, 3);
                if (!c.sweep.alpha_c.empty()) label += " ac=" + fmt(cell.alpha_c, 3);
                if (idx == report.best_cell) label += " *";
                rows.emplace_back(label, *shown);
            }
        }
        write_file_atomic(c.output_dir / "sweep.csv", csv.str());

        auto stage_plot = [&](const std::string& stage, const std::string& axis, auto key, const fs::path& path) {
            PlotSpec spec;
            spec.title = c.name + ": validation AORE / AORC vs " + axis;
            spec.x_label = axis;
            spec.y_label = "metric";
            PlotSeries aore{"AORE (lower is better)", {}, {}, "#d62728", false, 1.6};
            PlotSeries aorc{"AORC (higher is better)", {}, {}, "#1f77b4", false, 1.6};
            std::vector<const SweepCell*> cells;
            for (const auto& cell : report.cells)
                if (cell.stage == stage && cell.validation) cells.push_back(&cell);
            std::sort(cells.begin(), cells.end(), [&](auto* a, auto* b) { return key(*a) < key(*b); });
            for (const auto* cell : cells) {
                if (cell->validation->aore()) aore.x.push_back(key(*cell)), aore.y.push_back(*cell->validation->aore());
                if (cell->validation->aorc()) aorc.x.push_back(key(*cell)), aorc.y.push_back(*cell->validation->aorc());
            }
            if (aore.x.empty() && aorc.x.empty()) return;
            aore.points = aorc.points = aore.x.size() == 1;
            spec.series = {aore, aorc};
            write_svg(path, spec);
        };
        stage_plot("alpha_e", "alpha_e", [](const SweepCell& s) { return s.alpha_e; }, c.output_dir / "sweep_alpha_e.svg");
        stage_plot("lambda", "lambda", [](const SweepCell& s) { return s.lambda; }, c.output_dir / "sweep_lambda.svg");
        stage_plot("alpha_c", "alpha_c", [](const SweepCell& s) { return s.alpha_c; }, c.output_dir / "sweep_alpha_c.svg");

        if (!rows.empty()) {
            out << render_text_table(rows);
            write_reports(c.output_dir, rows, "sweep_table");
        }

        // The selected cell is written exactly like a train run.
        ExperimentConfig best = c;
        best.train = report.best_config;
        const std::string hash = hex64(config_hash(effective_json(best)));
        const fs::path best_dir = c.output_dir / "best";
        fs::create_directories(best_dir);
        write_config_copy(best_dir, best, hash);
        if (report.cells.empty()) return finish({"sweep produced no cells"}, out);
        auto artifacts = write_runs(best_dir, report.cells[report.best_cell].outcomes, data, hash, !opts.no_checkpoints, out);
        if (artifacts.summary) {
            write_reports(best_dir, {{best.name, *artifacts.summary}});
        } else {
            artifacts.problems.push_back("selected cell produced no metrics");
        }
        for (auto& p : artifacts.problems) problems.push_back(std::move(p));
        json sel = {{"best_cell", report.best_cell}, {"config_hash", hash}, {"train", to_json(report.best_config)}};
        write_json(c.output_dir / "selection.json", sel);
        return finish(problems, out);
    });
}

int cmd_evaluate(const CliOptions& opts, std::ostream& out)
{
    return guarded(out, [&] {
        const ExperimentConfig c = resolve_config(opts);
        const PreparedData data = prepare_data(c);
        describe_data(data, out);
        std::vector<fs::path> checkpoints = opts.checkpoints;
        if (checkpoints.empty()) {
            const fs::path dir = c.output_dir / "checkpoints";
            require(fs::is_directory(dir), "no --checkpoint given and '" + dir.string() + "' does not exist");
            for (const auto& e : fs::directory_iterator(dir))
                if (e.path().extension() == ".json") checkpoints.push_back(e.path());
            std::sort(checkpoints.begin(), checkpoints.end());
        }
        require(!checkpoints.empty(), "no checkpoints to evaluate");
        const bool has_test = !data.plan.test_indices.empty();
        IndexList rows = data.plan.test_indices;
        if (!has_test) {
            rows.resize(data.table.size());
            std::iota(rows.begin(), rows.end(), Index{0});
            out << "note: no test set, evaluating on every row\n";
        }
        const DatasetTable sub = data.table.subset(rows);
        const auto rare = rare_mask(sub, data.descriptor);

        // Checkpoints named like train outputs are grouped by seed, folds averaged first.
        static const std::regex pattern(R"(fold(\d+)_seed(\d+))");
        std::map<std::string, std::vector<EvalReport>> groups;
        std::vector<NamedReport> table_rows;
        std::vector<std::string> problems;
        for (const auto& path : checkpoints) {
            try {
                const ModelState model = load_checkpoint(path);
                require(model.input_dim == sub.dim(), "checkpoint expects " + std::to_string(model.input_dim) +
                                                          " features, data has " + std::to_string(sub.dim()));
                const auto yhat = predict(model, sub.features);
                EvalReport r = evaluate(sub.targets, yhat, rare);
                r.check_invariants();
                std::smatch m;
                const std::string stem = path.stem().string();
                groups[std::regex_search(stem, m, pattern) ? m[2].str() : stem].push_back(r);
                table_rows.emplace_back(stem, r);
            } catch (const std::exception& e) {
                problems.push_back(path.string() + ": " + e.what());
            }
        }
        std::vector<EvalReport> per_seed;
        for (const auto& [key, reports] : groups) per_seed.push_back(mean_report(reports));
        if (!per_seed.empty()) table_rows.emplace_back("aggregate", aggregate(per_seed));
        out << render_text_table(table_rows);
        fs::create_directories(c.output_dir);
        write_reports(c.output_dir, table_rows, "evaluation");
        return finish(problems, out);
    });
}

int cmd_synth(const CliOptions& opts, std::ostream& out)
{
    return guarded(out, [&] {
        SynthConfig s;
        std::string name = "synthetic";
        if (!opts.config.empty()) {
            const ExperimentConfig c = load_experiment_config(opts.config, opts.paper_scale);
            require(c.synthetic.has_value(), "config '" + opts.config.string() + "' has no synthetic section");
            s = *c.synthetic;
            name = c.name;
        }
        if (opts.preset) s.preset = parse_synth_preset(*opts.preset);
        if (opts.n) s.n = *opts.n;
        if (opts.noise) s.noise = *opts.noise;
        if (opts.tail_power) s.tail_power = *opts.tail_power;
        if (opts.min_imbalance) s.min_imbalance = *opts.min_imbalance;
        if (opts.synth_seed) s.seed = *opts.synth_seed;
        s.validate();
        const SynthDataset d = generate_synthetic(s);
        const fs::path dir = opts.out.value_or("synthetic");
        fs::create_directories(dir);
        const fs::path csv = dir / (name + ".csv");
        write_csv(d.table, csv);

        json cfg;
        cfg["name"] = name;
        json desc = to_json(d.descriptor);
        desc["csv"] = csv.filename().string();
        cfg["dataset"] = desc;
        cfg["notes"] = {{"generator", to_json(s)}, {"imbalance_ratio", d.imbalance_ratio}, {"tail_power", d.tail_power}};
        write_json(dir / (name + ".config.json"), cfg);
        out << "wrote " << d.table.size() << " rows x " << d.table.dim() << " features to " << csv.string() << "\n";
        out << "frequency imbalance ratio " << fmt(d.imbalance_ratio, 6) << ", rare " << count_true(rare_mask(d.table, d.descriptor))
            << (s.preset == SynthPreset::tail ? ", tail power " + fmt(d.tail_power) : std::string()) << "\n";
        out << "experiment config: " << (dir / (name + ".config.json")).string() << "\n";
        return 0;
    });
}

} // namespace cisir
