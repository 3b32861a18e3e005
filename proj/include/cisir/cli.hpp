#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cisir/config.hpp"

namespace cisir {

/// Parsed command-line flags shared by all subcommands.
struct CliOptions {
    std::filesystem::path config;
    std::optional<std::vector<std::uint64_t>> seed_list;
    std::size_t jobs = 1;
    bool paper_scale = false;
    bool dry_run = false;
    std::optional<std::string> sampler;
    std::optional<double> bandwidth;
    std::optional<double> lambda;
    std::optional<double> alpha_e;
    std::optional<double> alpha_c;
    std::optional<std::filesystem::path> out;
    std::vector<double> grid_alpha_e;
    std::vector<double> grid_lambda;
    std::vector<double> grid_alpha_c;
    std::vector<std::filesystem::path> checkpoints; // evaluate
    bool no_checkpoints = false;                    // train: skip writing checkpoints
    // synth
    std::optional<std::string> preset;
    std::optional<std::size_t> n;
    std::optional<double> noise;
    std::optional<double> tail_power;
    std::optional<double> min_imbalance;
    std::optional<std::uint64_t> synth_seed;
};

/// Applies flag overrides on top of the config file.
ExperimentConfig resolve_config(const CliOptions& opts);

/// "1,2,5" or "0-4" (inclusive) or a mix of both.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

// Each command returns the process exit code: 0 when every run finished
// and every self-check passed, 1 for failed runs or checks, 2 for bad
// input or configuration.
int cmd_density(const CliOptions& opts, std::ostream& out);
int cmd_train(const CliOptions& opts, std::ostream& out);
int cmd_sweep(const CliOptions& opts, std::ostream& out);
int cmd_evaluate(const CliOptions& opts, std::ostream& out);
int cmd_synth(const CliOptions& opts, std::ostream& out);

} // namespace cisir
