#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cisir/common.hpp"
#include "cisir/matrix.hpp"
#include "json.hpp"

namespace cisir {

/// Residual MLP description. Hidden widths are read left to right; a block
/// closes at every width equal to `embed_dim`, so 64-16-32-16 with embed 16
/// gives blocks (64, 16) and (32, 16). Every block after the first adds its
/// input (an embed-width activation) to its output. The list must end at
/// the embed width; a linear head maps the embedding to one output.
struct ArchitectureConfig {
    std::vector<std::size_t> hidden_widths{64, 16, 32, 16};
    std::size_t embed_dim = 16;
    double dropout_rate = 0.0;
    double leaky_slope = 0.01;
    bool use_batchnorm = true;

    void validate() const;
};

struct OptimizerConfig {
    double learning_rate = 1e-3;
    double weight_decay = 0.0; // decoupled
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> values;
};

/// Indices into ModelState::params / ModelState::buffers for one
/// Linear -> [BatchNorm] -> LeakyReLU -> [Dropout] layer.
struct DenseLayout {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight = 0; // in x out
    std::size_t bias = 0;
    std::optional<std::size_t> gamma;
    std::optional<std::size_t> beta;
    std::optional<std::size_t> running_mean; // buffers
    std::optional<std::size_t> running_var;
};

struct BlockLayout {
    std::vector<DenseLayout> layers;
    bool residual = false;
};

struct ModelState {
    ArchitectureConfig arch;
    std::size_t input_dim = 0;
    std::vector<Tensor> params;  // trainable
    std::vector<Tensor> buffers; // batchnorm running statistics
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    std::uint64_t step = 0;
    std::vector<BlockLayout> blocks;
    std::size_t head_weight = 0; // embed x 1
    std::size_t head_bias = 0;
    /// Fixed input standardization x' = (x - shift) * scale, identity by default.
    std::vector<double> input_shift;
    std::vector<double> input_scale;

    std::size_t parameter_count() const;
    Tensor& param(const std::string& name);
    const Tensor& param(const std::string& name) const;
    void check_invariants() const;
};

struct Gradients {
    std::vector<std::vector<double>> tensors; // aligned with ModelState::params

    double max_abs() const;
};

struct LayerCache {
    Matrix input;      // n x in
    Matrix activation_input; // value fed to LeakyReLU, n x out
    Matrix normalized; // batchnorm x-hat, n x out (empty without batchnorm)
    std::vector<double> inv_std;
    std::vector<double> batch_mean;
    std::vector<double> batch_var;
    Matrix dropout_mask; // empty when dropout is off
};

struct ForwardCache {
    std::uint64_t step = 0;
    std::size_t input_dim = 0;
    std::size_t rows = 0;
    bool train_mode = false;
    std::vector<std::vector<LayerCache>> layers; // per block, per layer
    Matrix embedding; // n x embed
};

struct ForwardResult {
    std::vector<double> predictions;
    ForwardCache cache;
};

constexpr double kBatchNormEpsilon = 1e-3;
constexpr double kBatchNormMomentum = 0.99;

/// He-scaled normal weights, zero biases, identity batchnorm; deterministic
/// in `seed`.
ModelState init_model(const ArchitectureConfig& arch, std::size_t input_dim, std::uint64_t seed);

/// Stores per-feature mean and 1/sd of `features` as the input
/// standardization (sd floored at 1e-12).
void set_input_standardization(ModelState& state, const Matrix& features);

/// Train mode uses batch statistics and seeded dropout masks; eval mode
/// uses running statistics and no dropout. Neither mutates the state.
ForwardResult forward(const ModelState& state, const Matrix& inputs, bool train_mode, std::uint64_t seed);

/// Eval-mode predictions.
std::vector<double> predict(const ModelState& state, const Matrix& inputs);

/// Reverse-mode gradients of sum_i dL_dyhat[i] * yhat_i for every
/// trainable tensor. Throws if the cache does not belong to `state`.
Gradients backward(const ModelState& state, const ForwardCache& cache, std::span<const double> dl_dyhat);

/// Folds the batch statistics of a train-mode forward into the running
/// averages: running = momentum * running + (1 - momentum) * batch.
void update_running_statistics(ModelState& state, const ForwardCache& cache, double momentum = kBatchNormMomentum);

/// Decoupled weight decay then a bias-corrected Adam update.
void adam_step(ModelState& state, const Gradients& gradients, const OptimizerConfig& opt);

nlohmann::json to_json(const ArchitectureConfig& arch);
ArchitectureConfig architecture_from_json(const nlohmann::json& j);

/// Checkpoint container: header (architecture, input_dim, step, input
/// standardization) followed by every tensor with its declared shape and
/// row-major values.
nlohmann::json checkpoint_to_json(const ModelState& state);
ModelState checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

} // namespace cisir
