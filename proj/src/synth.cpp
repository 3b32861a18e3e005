#include "cisir/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "cisir/density.hpp"
#include "cisir/rng.hpp"

namespace cisir {

SynthPreset parse_synth_preset(const std::string& name)
{
    if (name == "tail") return SynthPreset::tail;
    if (name == "bimodal") return SynthPreset::bimodal;
    throw ConfigError("unknown synthetic preset '" + name + "' (expected tail or bimodal)");
}

std::string to_string(SynthPreset p)
{
    return p == SynthPreset::tail ? "tail" : "bimodal";
}

void SynthConfig::validate() const
{
    require(n >= 10, "synth: n must be at least 10");
    require(dim >= 4, "synth: dim must be at least 4");
    require(noise >= 0.0 && std::isfinite(noise), "synth: noise must be non-negative");
    require(latent_noise >= 0.0 && std::isfinite(latent_noise), "synth: latent_noise must be non-negative");
    require(target_scale > 0.0 && std::isfinite(target_scale), "synth: target_scale must be positive");
    require(tail_power >= 1.0 && tail_power <= 12.0, "synth: tail_power must be in [1, 12]");
    require(rare_fraction > 0.0 && rare_fraction < 0.5, "synth: rare_fraction must be in (0, 0.5)");
    if (min_imbalance) require(*min_imbalance >= 1.0, "synth: min_imbalance must be at least 1");
}

SynthConfig synth_config_from_json(const nlohmann::json& j)
{
    SynthConfig c;
    c.preset = parse_synth_preset(j.value("preset", std::string("tail")));
    c.n = j.value("n", c.n);
    c.dim = j.value("dim", c.dim);
    c.noise = j.value("noise", c.noise);
    c.latent_noise = j.value("latent_noise", c.latent_noise);
    c.target_scale = j.value("target_scale", c.target_scale);
    c.tail_power = j.value("tail_power", c.tail_power);
    c.rare_fraction = j.value("rare_fraction", c.rare_fraction);
    if (j.contains("min_imbalance") && !j["min_imbalance"].is_null()) c.min_imbalance = j["min_imbalance"].get<double>();
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

nlohmann::json to_json(const SynthConfig& c)
{
    nlohmann::json j = {{"preset", to_string(c.preset)}, {"n", c.n},         {"dim", c.dim},
                        {"noise", c.noise},              {"latent_noise", c.latent_noise}, {"target_scale", c.target_scale}, {"tail_power", c.tail_power},
                        {"rare_fraction", c.rare_fraction}, {"seed", c.seed}};
    j["min_imbalance"] = c.min_imbalance ? nlohmann::json(*c.min_imbalance) : nlohmann::json(nullptr);
    return j;
}

namespace {

/// Smooth latent score with unit variance under standard normal inputs;
/// features past the fourth are pure distractors.
double latent(std::span<const double> x)
{
    const double s = 0.8 * x[0] + 0.5 * x[1] + 0.3 * std::sin(1.5 * x[2]) + 0.2 * std::tanh(x[3]);
    // E[sin^2(1.5 x)] = (1 - exp(-4.5)) / 2; E[tanh^2(x)] ~= 0.394. Terms are independent.
    return s / std::sqrt(0.64 + 0.25 + 0.09 * (1.0 - std::exp(-4.5)) / 2.0 + 0.04 * 0.3943);
}

double quantile(std::vector<double> v, double q)
{
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

} // namespace

SynthDataset generate_synthetic(const SynthConfig& config)
{
    config.validate();
    SynthDataset out;
    DatasetTable& t = out.table;
    t.features = Matrix(config.n, config.dim);
    t.ids.resize(config.n);
    std::iota(t.ids.begin(), t.ids.end(), Index{0});
    for (std::size_t c = 0; c < config.dim; ++c) t.feature_names.push_back("x" + std::to_string(c));
    t.target_name = "y";

    auto rng = keyed_rng({config.seed, 0x73796e74ULL});
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> z(config.n);
    std::vector<double> eps(config.n);
    auto latent_rng = keyed_rng({config.seed, 0x6c6174ULL});
    for (std::size_t i = 0; i < config.n; ++i) {
        for (std::size_t c = 0; c < config.dim; ++c) t.features(i, c) = normal(rng);
        eps[i] = normal(rng);
        // Unobserved part of the latent score, rescaled to keep unit variance.
        const double hidden = normal(latent_rng);
        z[i] = (latent(t.features.row(i)) + config.latent_noise * hidden) /
               std::sqrt(1.0 + config.latent_noise * config.latent_noise);
    }

    DatasetDescriptor& d = out.descriptor;
    d.name = "synthetic-" + to_string(config.preset);
    d.target_column = "y";
    d.feature_columns = t.feature_names;

    if (config.preset == SynthPreset::tail) {
        // Signal scaled to unit population sd, E|z|^(2p) = 2^p Gamma(p + 1/2) / sqrt(pi),
        // then additive target noise.
        auto make = [&](double p) {
            const double second = std::pow(2.0, p) * std::tgamma(p + 0.5) / std::sqrt(std::numbers::pi);
            const double scale = 1.0 / std::sqrt(second);
            std::vector<double> y(config.n);
            for (std::size_t i = 0; i < config.n; ++i) {
                y[i] = scale * std::copysign(std::pow(std::abs(z[i]), p), z[i]) + config.noise * eps[i];
            }
            return y;
        };
        double p = config.tail_power;
        t.targets = make(p);
        if (config.min_imbalance) {
            while (frequency_imbalance_ratio(t.targets) < *config.min_imbalance && p < 12.0) {
                p += 0.25;
                t.targets = make(p);
            }
        }
        out.tail_power = p;
        std::vector<double> mag(config.n);
        for (std::size_t i = 0; i < config.n; ++i) mag[i] = std::abs(t.targets[i]);
        const double thr = quantile(mag, 1.0 - config.rare_fraction);
        d.lower_threshold = -thr;
        d.upper_threshold = thr;
        d.rare_bins = {1, 3};
    } else {
        // Instances whose first feature passes its (1 - rare_fraction)
        // quantile form a distant narrow mode; the rest a tight main mode.
        std::vector<double> x0(config.n);
        for (std::size_t i = 0; i < config.n; ++i) x0[i] = t.features(i, 0);
        const double gate = quantile(x0, 1.0 - config.rare_fraction);
        t.targets.resize(config.n);
        for (std::size_t i = 0; i < config.n; ++i) {
            const auto row = t.features.row(i);
            const double shape = 0.6 * row[1] + 0.4 * std::sin(1.5 * row[2]) + 0.3 * row[3];
            const double e = config.noise * eps[i];
            if (row[0] > gate) {
                t.targets[i] = 5.0 + 0.4 * shape + 0.5 * (row[0] - gate) + e;
            } else {
                t.targets[i] = 0.15 * shape + e;
            }
        }
        d.upper_threshold = 2.5;
        d.rare_bins = {3};
        out.tail_power = 1.0;
    }
    for (double& y : t.targets) y *= config.target_scale;
    if (d.lower_threshold) *d.lower_threshold *= config.target_scale;
    if (d.upper_threshold) *d.upper_threshold *= config.target_scale;
    out.imbalance_ratio = frequency_imbalance_ratio(t.targets);
    t.validate();
    return out;
}

} // namespace cisir
