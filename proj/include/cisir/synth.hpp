#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "cisir/data.hpp"
#include "json.hpp"

namespace cisir {

enum class SynthPreset {
    tail,    // symmetric heavy tails: y = sign(z) |z|^p, rare = both tails
    bimodal, // a dominant narrow mode and a small distant one, rare = the small mode
};

SynthPreset parse_synth_preset(const std::string& name);
std::string to_string(SynthPreset p);

struct SynthConfig {
    SynthPreset preset = SynthPreset::tail;
    std::size_t n = 10000;
    std::size_t dim = 8;
    double noise = 0.05;       // sd of additive target noise (signal sd is 1)
    /// Relative sd of a latent component no feature explains; the rest of
    /// the latent score is a smooth function of the first four features.
    double latent_noise = 0.6;
    double target_scale = 0.25; // multiplies targets and thresholds
    double tail_power = 3.0;   // tail preset shape p
    double rare_fraction = 0.02;
    /// When set, the tail power is raised in steps of 0.25 until the
    /// frequency imbalance ratio reaches this value.
    std::optional<double> min_imbalance;
    std::uint64_t seed = 0;

    void validate() const;
};

SynthConfig synth_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthConfig& c);

struct SynthDataset {
    DatasetTable table;
    DatasetDescriptor descriptor; // thresholds matching the rare definition
    double imbalance_ratio = 0.0;
    double tail_power = 0.0;      // after any min_imbalance adjustment
};

/// Deterministic in the config. Features are standard normal; the target is
/// a smooth nonlinear function of them, so rare values are predictable.
SynthDataset generate_synthetic(const SynthConfig& config);

} // namespace cisir
