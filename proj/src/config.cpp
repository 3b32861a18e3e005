#include "cisir/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "cisir/rng.hpp"

namespace cisir {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& section)
{
    if (!j.is_object()) throw ConfigError("config: '" + section + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw ConfigError("config: unknown key '" + key + "' in '" + section + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out)
{
    if (j.contains(key) && !j[key].is_null()) {
        try {
            out = j[key].get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
        }
    }
}

template <typename T>
void read_optional(const json& j, const char* key, std::optional<T>& out)
{
    if (j.contains(key)) {
        if (j[key].is_null()) {
            out.reset();
        } else {
            T v{};
            read(j, key, v);
            out = v;
        }
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p)
{
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

} // namespace

DatasetDescriptor descriptor_from_json(const json& j)
{
    check_keys(j,
               {"csv", "test_csv", "name", "target_column", "feature_columns", "target_transform", "lower_threshold",
                "upper_threshold", "rare_bins", "rare_sign_filter", "drop_invalid"},
               "dataset");
    DatasetDescriptor d;
    read(j, "name", d.name);
    read(j, "target_column", d.target_column);
    read(j, "feature_columns", d.feature_columns);
    if (j.contains("target_transform")) d.target_transform = parse_target_transform(j["target_transform"].get<std::string>());
    read_optional(j, "lower_threshold", d.lower_threshold);
    read_optional(j, "upper_threshold", d.upper_threshold);
    if (j.contains("rare_bins")) {
        const auto bins = j["rare_bins"].get<std::vector<int>>();
        d.rare_bins = std::set<int>(bins.begin(), bins.end());
    }
    if (j.contains("rare_sign_filter")) d.rare_sign_filter = parse_sign_filter(j["rare_sign_filter"].get<std::string>());
    read(j, "drop_invalid", d.drop_invalid);
    d.validate();
    return d;
}

json to_json(const DatasetDescriptor& d)
{
    json j = {
        {"name", d.name},
        {"target_column", d.target_column},
        {"feature_columns", d.feature_columns},
        {"target_transform", to_string(d.target_transform)},
        {"rare_bins", std::vector<int>(d.rare_bins.begin(), d.rare_bins.end())},
        {"rare_sign_filter", to_string(d.rare_sign_filter)},
        {"drop_invalid", d.drop_invalid},
    };
    j["lower_threshold"] = d.lower_threshold ? json(*d.lower_threshold) : json(nullptr);
    j["upper_threshold"] = d.upper_threshold ? json(*d.upper_threshold) : json(nullptr);
    return j;
}

TrainConfig train_config_from_json(const json& doc, TrainConfig c)
{
    if (doc.contains("arch")) {
        const auto& a = doc["arch"];
        check_keys(a, {"hidden_widths", "embed_dim", "dropout_rate", "leaky_slope", "use_batchnorm"}, "arch");
        read(a, "hidden_widths", c.arch.hidden_widths);
        if (!a.contains("embed_dim") && !c.arch.hidden_widths.empty()) c.arch.embed_dim = c.arch.hidden_widths.back();
        read(a, "embed_dim", c.arch.embed_dim);
        read(a, "dropout_rate", c.arch.dropout_rate);
        read(a, "leaky_slope", c.arch.leaky_slope);
        read(a, "use_batchnorm", c.arch.use_batchnorm);
    }
    if (doc.contains("optimizer")) {
        const auto& o = doc["optimizer"];
        check_keys(o, {"learning_rate", "weight_decay", "beta1", "beta2", "epsilon"}, "optimizer");
        read(o, "learning_rate", c.opt.learning_rate);
        read(o, "weight_decay", c.opt.weight_decay);
        read(o, "beta1", c.opt.beta1);
        read(o, "beta2", c.opt.beta2);
        read(o, "epsilon", c.opt.epsilon);
    }
    if (doc.contains("importance")) {
        const auto& i = doc["importance"];
        check_keys(i, {"family_e", "alpha_e", "family_c", "alpha_c"}, "importance");
        if (i.contains("family_e")) c.importance_e.family = parse_importance_family(i["family_e"].get<std::string>());
        read(i, "alpha_e", c.importance_e.alpha);
        if (i.contains("family_c")) c.importance_c.family = parse_importance_family(i["family_c"].get<std::string>());
        read(i, "alpha_c", c.importance_c.alpha);
    }
    if (doc.contains("loss")) {
        const auto& l = doc["loss"];
        check_keys(l, {"lambda", "sd_epsilon", "weighted_means"}, "loss");
        read(l, "lambda", c.loss.lambda);
        read(l, "sd_epsilon", c.loss.sd_epsilon);
        read(l, "weighted_means", c.loss.weighted_means);
    }
    if (doc.contains("sampler")) {
        const auto& s = doc["sampler"];
        check_keys(s, {"kind", "batch_size"}, "sampler");
        if (s.contains("kind")) c.sampler = parse_sampler_kind(s["kind"].get<std::string>());
        read(s, "batch_size", c.batch_size);
    }
    if (doc.contains("trainer")) {
        const auto& t = doc["trainer"];
        check_keys(t,
                   {"max_epochs", "early_stop_patience", "lr_decay_factor", "lr_plateau_epochs", "plateau_threshold",
                    "divergence_factor", "early_stop_metric"},
                   "trainer");
        read(t, "max_epochs", c.max_epochs);
        read(t, "early_stop_patience", c.early_stop_patience);
        read(t, "lr_decay_factor", c.lr_decay_factor);
        read(t, "lr_plateau_epochs", c.lr_plateau_epochs);
        read(t, "plateau_threshold", c.plateau_threshold);
        read(t, "divergence_factor", c.divergence_factor);
        if (t.contains("early_stop_metric")) c.early_stop_metric = parse_early_stop_metric(t["early_stop_metric"].get<std::string>());
    }
    if (doc.contains("density")) {
        const auto& d = doc["density"];
        check_keys(d, {"n_bins", "epsilon", "bandwidth", "tolerance", "h_range", "grid_points"}, "density");
        read(d, "n_bins", c.density.n_bins);
        read(d, "epsilon", c.density.epsilon);
        read_optional(d, "bandwidth", c.density.bandwidth);
        read(d, "tolerance", c.density.tolerance);
        read(d, "grid_points", c.density.grid_points);
        if (d.contains("h_range")) {
            if (d["h_range"].is_null()) {
                c.density.h_range.reset();
            } else {
                const auto r = d["h_range"].get<std::vector<double>>();
                require(r.size() == 2 && r[0] > 0.0 && r[0] < r[1], "config: density.h_range must be [lo, hi] with 0 < lo < hi");
                c.density.h_range = std::make_pair(r[0], r[1]);
            }
        }
        require(c.density.n_bins >= 1, "config: density.n_bins must be positive");
        require(c.density.epsilon > 0.0, "config: density.epsilon must be positive");
        if (c.density.bandwidth) require(*c.density.bandwidth > 0.0, "config: density.bandwidth must be positive");
    }
    if (doc.contains("seeds")) c.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
    c.validate();
    return c;
}

void ExperimentConfig::validate() const
{
    require(csv.has_value() || synthetic.has_value(), "config: need dataset.csv or a synthetic section");
    descriptor.validate();
    train.validate();
    require(split.test_fraction > 0.0 && split.test_fraction < 1.0, "config: split.test_fraction must be in (0, 1)");
    require(split.k_folds >= 2, "config: split.k_folds must be at least 2");
    if (split.folds_used) {
        require(*split.folds_used >= 1 && *split.folds_used <= static_cast<std::size_t>(split.k_folds),
                "config: split.folds_used must be in [1, k_folds]");
    }
    require(!sweep.alpha_e.empty() && !sweep.lambda.empty(), "config: sweep grids must be non-empty");
}

ExperimentConfig parse_experiment_config(const json& input, const std::filesystem::path& base_dir, bool paper_scale)
{
    json doc = input;
    check_keys(doc,
               {"name", "dataset", "synthetic", "split", "density", "importance", "loss", "sampler", "arch",
                "optimizer", "trainer", "seeds", "sweep", "output_dir", "paper_scale", "notes"},
               "top level");
    if (paper_scale) {
        if (!doc.contains("paper_scale")) throw ConfigError("config: --paper-scale given but the file has no paper_scale section");
        doc.merge_patch(doc["paper_scale"]);
    }
    doc.erase("paper_scale");

    ExperimentConfig c;
    read(doc, "name", c.name);
    if (doc.contains("synthetic")) {
        c.synthetic = synth_config_from_json(doc["synthetic"]);
        const auto generated = generate_synthetic(*c.synthetic);
        c.descriptor = generated.descriptor;
    }
    if (doc.contains("dataset")) {
        const auto& d = doc["dataset"];
        c.descriptor = descriptor_from_json(d);
        if (d.contains("csv")) c.csv = resolve(base_dir, d["csv"].get<std::string>());
        if (d.contains("test_csv")) c.test_csv = resolve(base_dir, d["test_csv"].get<std::string>());
    }
    if (c.name.empty()) c.name = c.descriptor.name;
    if (doc.contains("split")) {
        const auto& s = doc["split"];
        check_keys(s, {"test_fraction", "k_folds", "folds_used", "seed"}, "split");
        read(s, "test_fraction", c.split.test_fraction);
        read(s, "k_folds", c.split.k_folds);
        read_optional(s, "folds_used", c.split.folds_used);
        read(s, "seed", c.split.seed);
    }
    c.train = train_config_from_json(doc);
    if (doc.contains("sweep")) {
        const auto& g = doc["sweep"];
        check_keys(g, {"alpha_e", "lambda", "alpha_c"}, "sweep");
        read(g, "alpha_e", c.sweep.alpha_e);
        read(g, "lambda", c.sweep.lambda);
        read(g, "alpha_c", c.sweep.alpha_c);
    } else {
        c.sweep.alpha_e = {c.train.importance_e.alpha};
        c.sweep.lambda = {c.train.loss.lambda};
    }
    if (doc.contains("output_dir")) c.output_dir = resolve(base_dir, doc["output_dir"].get<std::string>());
    c.source = doc;
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, bool paper_scale)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    auto base = std::filesystem::absolute(path).parent_path();
    return parse_experiment_config(doc, base, paper_scale);
}

PreparedData prepare_data(const ExperimentConfig& config)
{
    PreparedData out;
    out.descriptor = config.descriptor;
    if (config.csv) {
        if (!std::filesystem::exists(*config.csv)) throw DataError("dataset file '" + config.csv->string() + "' does not exist");
        out.table = load_csv(*config.csv, config.descriptor);
    } else {
        auto generated = generate_synthetic(*config.synthetic);
        out.table = std::move(generated.table);
        out.descriptor = generated.descriptor;
    }
    if (config.test_csv) {
        // Predefined test subset: appended rows form the test set, folds stratify the rest.
        if (!std::filesystem::exists(*config.test_csv)) throw DataError("test file '" + config.test_csv->string() + "' does not exist");
        const DatasetTable test = load_csv(*config.test_csv, config.descriptor);
        require(test.dim() == out.table.dim(), "test CSV has a different feature count");
        const std::size_t n_train = out.table.size();
        Matrix merged(n_train + test.size(), out.table.dim());
        std::copy(out.table.features.values().begin(), out.table.features.values().end(), merged.values().begin());
        std::copy(test.features.values().begin(), test.features.values().end(),
                  merged.values().begin() + static_cast<std::ptrdiff_t>(out.table.features.values().size()));
        out.table.features = std::move(merged);
        out.table.targets.insert(out.table.targets.end(), test.targets.begin(), test.targets.end());
        for (Index id : test.ids) out.table.ids.push_back(id);
        out.plan.train_indices.resize(n_train);
        std::iota(out.plan.train_indices.begin(), out.plan.train_indices.end(), Index{0});
        for (Index i = n_train; i < out.table.size(); ++i) out.plan.test_indices.push_back(i);
        const auto labels = stratified_partition(out.table.targets, out.plan.train_indices, config.split.k_folds,
                                                 mix64(config.split.seed ^ 0x5bd1e995ULL));
        out.plan.folds.resize(static_cast<std::size_t>(config.split.k_folds));
        for (std::size_t j = 0; j < n_train; ++j) {
            for (int f = 0; f < config.split.k_folds; ++f) {
                auto& fold = out.plan.folds[static_cast<std::size_t>(f)];
                (labels[j] == f ? fold.validation : fold.train).push_back(j);
            }
        }
    } else {
        out.plan = stratified_split(out.table, config.split.test_fraction, config.split.k_folds, config.split.seed);
    }
    if (config.split.folds_used) out.plan.folds.resize(*config.split.folds_used);
    out.plan.validate(out.table.size());
    return out;
}

std::uint64_t config_hash(const json& j)
{
    const std::string s = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace cisir
