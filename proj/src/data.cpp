#include "cisir/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "cisir/rng.hpp"

namespace cisir {

TargetTransform parse_target_transform(const std::string& name)
{
    if (name == "identity" || name == "none") return TargetTransform::identity;
    if (name == "natural-log" || name == "natural_log" || name == "ln" || name == "log") return TargetTransform::natural_log;
    if (name == "log10") return TargetTransform::log10;
    if (name == "log1p") return TargetTransform::log1p;
    if (name == "delta") return TargetTransform::delta;
    throw ConfigError("unknown target transform '" + name + "'");
}

std::string to_string(TargetTransform t)
{
    switch (t) {
    case TargetTransform::identity: return "identity";
    case TargetTransform::natural_log: return "natural-log";
    case TargetTransform::log10: return "log10";
    case TargetTransform::log1p: return "log1p";
    case TargetTransform::delta: return "delta";
    }
    return "identity";
}

SignFilter parse_sign_filter(const std::string& name)
{
    if (name == "none" || name.empty()) return SignFilter::none;
    if (name == "positive-only" || name == "positive_only" || name == "positive") return SignFilter::positive_only;
    throw ConfigError("unknown rare sign filter '" + name + "'");
}

std::string to_string(SignFilter f)
{
    return f == SignFilter::positive_only ? "positive-only" : "none";
}

void DatasetDescriptor::validate() const
{
    require(!target_column.empty(), "descriptor: target column must be named");
    require(!rare_bins.empty(), "descriptor: rare_bins must be non-empty");
    for (int b : rare_bins) {
        require(b >= 1 && b <= 3, "descriptor: rare bin indices must be 1, 2 or 3");
    }
    if (lower_threshold && upper_threshold) {
        require(*lower_threshold < *upper_threshold, "descriptor: lower_threshold must be below upper_threshold");
    }
}

DatasetTable DatasetTable::subset(std::span<const Index> rows) const
{
    DatasetTable out;
    out.features = features.select_rows(rows);
    out.targets.reserve(rows.size());
    out.ids.reserve(rows.size());
    for (Index r : rows) {
        out.targets.push_back(targets.at(r));
        out.ids.push_back(ids.at(r));
    }
    out.feature_names = feature_names;
    out.target_name = target_name;
    return out;
}

void DatasetTable::validate() const
{
    if (targets.size() < 2) {
        throw DataError("dataset must contain at least 2 rows");
    }
    if (features.rows() != targets.size() || ids.size() != targets.size()) {
        throw DataError("dataset: feature/target/id row counts differ");
    }
    for (double y : targets) {
        if (!std::isfinite(y)) throw DataError("dataset: non-finite target");
    }
    for (double x : features.values()) {
        if (!std::isfinite(x)) throw DataError("dataset: non-finite feature");
    }
}

namespace {

double transform_one(double y, TargetTransform t)
{
    switch (t) {
    case TargetTransform::identity:
    case TargetTransform::delta:
        return y;
    case TargetTransform::natural_log:
        return y > 0.0 ? std::log(y) : std::numeric_limits<double>::quiet_NaN();
    case TargetTransform::log10:
        return y > 0.0 ? std::log10(y) : std::numeric_limits<double>::quiet_NaN();
    case TargetTransform::log1p:
        return y > -1.0 ? std::log1p(y) : std::numeric_limits<double>::quiet_NaN();
    }
    return y;
}

std::string trim(std::string_view s)
{
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    std::string out(s.substr(b, e - b));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
        out = out.substr(1, out.size() - 2);
    }
    return out;
}

std::vector<std::string> split_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::string current;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
            current.push_back(c);
        } else if (c == ',' && !quoted) {
            cells.push_back(trim(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    cells.push_back(trim(current));
    return cells;
}

enum class CellStatus { ok, missing, non_numeric };

CellStatus parse_cell(const std::string& cell, double& value)
{
    if (cell.empty() || cell == "NA" || cell == "na" || cell == "null" || cell == "NaN" || cell == "nan") {
        return CellStatus::missing;
    }
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        return CellStatus::non_numeric;
    }
    return CellStatus::ok;
}

} // namespace

std::vector<double> apply_target_transform(std::span<const double> raw, TargetTransform t)
{
    std::vector<double> out(raw.size());
    std::transform(raw.begin(), raw.end(), out.begin(), [t](double y) { return transform_one(y, t); });
    return out;
}

DatasetTable load_csv(const std::filesystem::path& path, const DatasetDescriptor& descriptor)
{
    descriptor.validate();
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path.string() + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("'" + path.string() + "' is empty");
    }
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) {
        line = line.substr(3); // UTF-8 BOM
    }
    const auto header = split_line(line);
    std::unordered_map<std::string, std::size_t> column_of;
    for (std::size_t c = 0; c < header.size(); ++c) {
        column_of.emplace(header[c], c);
    }
    auto target_it = column_of.find(descriptor.target_column);
    if (target_it == column_of.end()) {
        throw DataError("target column '" + descriptor.target_column + "' not found in header");
    }
    const std::size_t target_col = target_it->second;

    std::vector<std::size_t> feature_cols;
    std::vector<std::string> feature_names;
    if (descriptor.feature_columns.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (c != target_col) {
                feature_cols.push_back(c);
                feature_names.push_back(header[c]);
            }
        }
    } else {
        for (const auto& name : descriptor.feature_columns) {
            auto it = column_of.find(name);
            if (it == column_of.end()) {
                throw DataError("feature column '" + name + "' not found in header");
            }
            feature_cols.push_back(it->second);
            feature_names.push_back(name);
        }
    }

    std::vector<double> features;
    std::vector<double> targets;
    IndexList ids;
    std::vector<double> row(feature_cols.size());
    std::size_t data_row = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto cells = split_line(line);
        const std::size_t this_row = data_row++;
        auto reject = [&](const std::string& why) {
            if (!descriptor.drop_invalid) {
                throw DataError(why + " at line " + std::to_string(line_no) + " of '" + path.string() + "'");
            }
        };
        if (cells.size() != header.size()) {
            reject("wrong number of cells");
            continue;
        }
        bool valid = true;
        double y = 0.0;
        for (std::size_t k = 0; k <= feature_cols.size() && valid; ++k) {
            const std::size_t col = k < feature_cols.size() ? feature_cols[k] : target_col;
            double v = 0.0;
            switch (parse_cell(cells[col], v)) {
            case CellStatus::missing:
                reject("missing value");
                valid = false;
                break;
            case CellStatus::non_numeric:
                reject("non-numeric cell '" + cells[col] + "'");
                valid = false;
                break;
            case CellStatus::ok:
                if (!std::isfinite(v)) {
                    reject("non-finite value");
                    valid = false;
                }
                break;
            }
            if (!valid) break;
            if (k < feature_cols.size()) {
                row[k] = v;
            } else {
                y = transform_one(v, descriptor.target_transform);
                if (!std::isfinite(y)) {
                    reject("target outside the domain of transform " + to_string(descriptor.target_transform));
                    valid = false;
                }
            }
        }
        if (!valid) {
            continue;
        }
        features.insert(features.end(), row.begin(), row.end());
        targets.push_back(y);
        ids.push_back(this_row);
    }
    if (targets.empty()) {
        throw DataError("dataset '" + path.string() + "' is empty after filtering");
    }

    DatasetTable table;
    table.features = Matrix(targets.size(), feature_cols.size());
    table.features.values() = std::move(features);
    table.targets = std::move(targets);
    table.ids = std::move(ids);
    table.feature_names = std::move(feature_names);
    table.target_name = descriptor.target_column;
    table.validate();
    return table;
}

namespace {

void append_number(std::string& out, double v)
{
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

} // namespace

void write_csv(const DatasetTable& table, const std::filesystem::path& path)
{
    std::string out;
    for (const auto& name : table.feature_names) {
        out += name;
        out += ',';
    }
    out += table.target_name.empty() ? "target" : table.target_name;
    out += '\n';
    for (std::size_t i = 0; i < table.size(); ++i) {
        for (double x : table.features.row(i)) {
            append_number(out, x);
            out += ',';
        }
        append_number(out, table.targets[i]);
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw DataError("cannot write '" + path.string() + "'");
    }
    f << out;
}

int target_bin(double y, const DatasetDescriptor& descriptor)
{
    if (descriptor.lower_threshold && y < *descriptor.lower_threshold) return 1;
    if (descriptor.upper_threshold && y > *descriptor.upper_threshold) return 3;
    return 2;
}

std::vector<bool> rare_mask(std::span<const double> targets, const DatasetDescriptor& descriptor)
{
    std::vector<bool> mask(targets.size(), false);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double y = targets[i];
        bool rare = descriptor.rare_bins.contains(target_bin(y, descriptor));
        if (descriptor.rare_sign_filter == SignFilter::positive_only && !(y > 0.0)) {
            rare = false;
        }
        mask[i] = rare;
    }
    return mask;
}

std::vector<bool> rare_mask(const DatasetTable& table, const DatasetDescriptor& descriptor)
{
    return rare_mask(table.targets, descriptor);
}

std::size_t count_true(const std::vector<bool>& mask)
{
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

void SplitPlan::validate(std::size_t n) const
{
    std::vector<int> seen(n, 0);
    for (Index i : train_indices) {
        if (i >= n) throw ConfigError("split: train index out of range");
        seen[i] += 1;
    }
    for (Index i : test_indices) {
        if (i >= n) throw ConfigError("split: test index out of range");
        seen[i] += 2;
    }
    for (int s : seen) {
        if (s != 1 && s != 2) throw ConfigError("split: train and test must partition all indices");
    }
    std::vector<int> in_train(n, 0);
    for (Index i : train_indices) in_train[i] = 1;
    std::vector<int> validated(n, 0);
    for (const auto& fold : folds) {
        std::vector<int> in_fold(n, 0);
        for (Index i : fold.validation) {
            if (!in_train[i]) throw ConfigError("split: validation index outside the training portion");
            validated[i] += 1;
            in_fold[i] = 1;
        }
        for (Index i : fold.train) {
            if (!in_train[i] || in_fold[i]) throw ConfigError("split: fold train overlaps its validation set");
        }
        if (fold.train.size() + fold.validation.size() != train_indices.size()) {
            throw ConfigError("split: fold does not cover the training portion");
        }
    }
    // Validation sets are disjoint; a plan may keep only some of the folds.
    for (Index i : train_indices) {
        if (validated[i] > 1) throw ConfigError("split: validation sets overlap");
    }
}

std::vector<int> stratified_partition(std::span<const double> targets,
                                      std::span<const Index> indices,
                                      int n_partitions,
                                      std::uint64_t seed)
{
    require(n_partitions >= 1, "stratified_partition: need at least one partition");
    std::vector<std::size_t> order(indices.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return targets[indices[a]] < targets[indices[b]];
    });
    std::vector<int> labels(indices.size(), 0);
    std::vector<int> deal(static_cast<std::size_t>(n_partitions));
    const auto p = static_cast<std::size_t>(n_partitions);
    for (std::size_t start = 0, block = 0; start < order.size(); start += p, ++block) {
        std::iota(deal.begin(), deal.end(), 0);
        auto rng = keyed_rng({seed, block});
        shuffle_in_place(std::span<int>(deal), rng);
        const std::size_t len = std::min(p, order.size() - start);
        for (std::size_t k = 0; k < len; ++k) {
            labels[order[start + k]] = deal[k];
        }
    }
    return labels;
}

namespace {

/// Smallest block size P (and test share T) with T / P == fraction.
std::pair<int, int> test_share(double fraction)
{
    for (int p = 2; p <= 100; ++p) {
        const double t = fraction * p;
        const double rt = std::round(t);
        if (std::abs(t - rt) < 1e-6 && rt >= 1.0 && rt < p) {
            return {p, static_cast<int>(rt)};
        }
    }
    const int t = std::clamp(static_cast<int>(std::round(fraction * 100.0)), 1, 99);
    return {100, t};
}

} // namespace

SplitPlan stratified_split(std::span<const double> targets, double test_fraction, int k_folds, std::uint64_t seed)
{
    require(test_fraction > 0.0 && test_fraction < 1.0, "stratified_split: test_fraction must be in (0, 1)");
    require(k_folds >= 2, "stratified_split: k_folds must be at least 2");
    if (static_cast<std::size_t>(k_folds) > targets.size()) {
        throw ConfigError("stratified_split: k_folds exceeds the number of rows");
    }
    IndexList all(targets.size());
    std::iota(all.begin(), all.end(), Index{0});
    const auto [blocks, test_slots] = test_share(test_fraction);
    const auto labels = stratified_partition(targets, all, blocks, mix64(seed));

    SplitPlan plan;
    for (Index i = 0; i < all.size(); ++i) {
        (labels[i] < test_slots ? plan.test_indices : plan.train_indices).push_back(i);
    }
    if (static_cast<std::size_t>(k_folds) > plan.train_indices.size()) {
        throw ConfigError("stratified_split: k_folds exceeds the training portion");
    }
    const auto fold_labels = stratified_partition(targets, plan.train_indices, k_folds, mix64(seed ^ 0x5bd1e995ULL));
    plan.folds.resize(static_cast<std::size_t>(k_folds));
    for (std::size_t j = 0; j < plan.train_indices.size(); ++j) {
        const Index idx = plan.train_indices[j];
        for (int f = 0; f < k_folds; ++f) {
            auto& fold = plan.folds[static_cast<std::size_t>(f)];
            (fold_labels[j] == f ? fold.validation : fold.train).push_back(idx);
        }
    }
    return plan;
}

SplitPlan stratified_split(const DatasetTable& table, double test_fraction, int k_folds, std::uint64_t seed)
{
    return stratified_split(table.targets, test_fraction, k_folds, seed);
}

} // namespace cisir
