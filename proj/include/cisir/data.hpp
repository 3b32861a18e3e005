#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cisir/common.hpp"
#include "cisir/matrix.hpp"

namespace cisir {

enum class TargetTransform { identity, natural_log, log10, log1p, delta };
enum class SignFilter { none, positive_only };

TargetTransform parse_target_transform(const std::string& name);
std::string to_string(TargetTransform t);
SignFilter parse_sign_filter(const std::string& name);
std::string to_string(SignFilter f);

/// Per-dataset ingestion and rare-region description.
///
/// Thresholds are expressed in transformed target units. Bin 1 holds
/// targets below `lower_threshold`, bin 3 targets above `upper_threshold`,
/// bin 2 everything in between. A missing threshold leaves its outer bin
/// empty.
struct DatasetDescriptor {
    std::string name;
    std::string target_column;
    std::vector<std::string> feature_columns; // empty: every non-target column
    TargetTransform target_transform = TargetTransform::identity;
    std::optional<double> lower_threshold;
    std::optional<double> upper_threshold;
    std::set<int> rare_bins{1, 3};
    SignFilter rare_sign_filter = SignFilter::none;
    bool drop_invalid = false;

    void validate() const;
};

struct DatasetTable {
    Matrix features;              // N x d
    std::vector<double> targets;  // post-transform
    IndexList ids;                // source row index of each row
    std::vector<std::string> feature_names;
    std::string target_name;

    std::size_t size() const noexcept { return targets.size(); }
    std::size_t dim() const noexcept { return features.cols(); }

    DatasetTable subset(std::span<const Index> rows) const;
    void validate() const;
};

std::vector<double> apply_target_transform(std::span<const double> raw, TargetTransform t);

/// Reads a comma-separated file with a header row. Rows with missing,
/// non-numeric or non-finite cells raise `DataError` unless the descriptor
/// sets `drop_invalid`, in which case they are skipped.
DatasetTable load_csv(const std::filesystem::path& path, const DatasetDescriptor& descriptor);

/// Writes features followed by the target column using shortest round-trip
/// formatting, so reading back with an identity transform is bit-exact.
void write_csv(const DatasetTable& table, const std::filesystem::path& path);

/// Bin index (1, 2 or 3) of a target under the descriptor thresholds.
int target_bin(double y, const DatasetDescriptor& descriptor);

std::vector<bool> rare_mask(std::span<const double> targets, const DatasetDescriptor& descriptor);
std::vector<bool> rare_mask(const DatasetTable& table, const DatasetDescriptor& descriptor);
std::size_t count_true(const std::vector<bool>& mask);

struct Fold {
    IndexList train;
    IndexList validation;
};

struct SplitPlan {
    IndexList train_indices;
    IndexList test_indices;
    std::vector<Fold> folds;

    void validate(std::size_t n) const;
};

/// Assigns each listed index to one of `n_partitions` partitions by
/// walking the target-sorted order in blocks of `n_partitions` and dealing
/// a seed-shuffled permutation of partition labels within each block.
/// Returns the label of each entry of `indices` (same order).
std::vector<int> stratified_partition(std::span<const double> targets,
                                      std::span<const Index> indices,
                                      int n_partitions,
                                      std::uint64_t seed);

SplitPlan stratified_split(std::span<const double> targets,
                           double test_fraction,
                           int k_folds,
                           std::uint64_t seed);
SplitPlan stratified_split(const DatasetTable& table, double test_fraction, int k_folds, std::uint64_t seed);

} // namespace cisir
