#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cisir/data.hpp"
#include "cisir/synth.hpp"
#include "cisir/trainer.hpp"
#include "json.hpp"

namespace cisir {

struct SplitConfig {
    double test_fraction = 1.0 / 3.0;
    int k_folds = 4;
    std::optional<std::size_t> folds_used; // first n folds only
    std::uint64_t seed = 0;
};

/// Everything an experiment needs, resolved from one JSON file.
struct ExperimentConfig {
    std::string name;
    DatasetDescriptor descriptor;
    std::optional<std::filesystem::path> csv;      // absolute after loading
    std::optional<std::filesystem::path> test_csv; // predefined test subset
    std::optional<SynthConfig> synthetic;          // used when no csv is given
    SplitConfig split;
    TrainConfig train;
    SweepGrid sweep;
    std::filesystem::path output_dir = "runs";
    nlohmann::json source; // the resolved document, for provenance

    void validate() const;
};

/// Parses a config document. Relative paths are resolved against
/// `base_dir`. With `paper_scale`, the optional "paper_scale" section is
/// merged over the document first (JSON merge patch). Unknown keys are
/// rejected so typos cannot silently fall back to defaults.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc,
                                         const std::filesystem::path& base_dir,
                                         bool paper_scale = false);
ExperimentConfig load_experiment_config(const std::filesystem::path& path, bool paper_scale = false);

/// Dataset and split described by a config: loads the CSV(s) or generates
/// the synthetic set.
struct PreparedData {
    DatasetTable table;
    DatasetDescriptor descriptor;
    SplitPlan plan;
};

PreparedData prepare_data(const ExperimentConfig& config);

/// FNV-1a of the compact JSON dump.
std::uint64_t config_hash(const nlohmann::json& j);
std::string hex64(std::uint64_t v);

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
DatasetDescriptor descriptor_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetDescriptor& d);

} // namespace cisir
