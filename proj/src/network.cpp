#include "cisir/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "cisir/common.hpp"
#include "cisir/rng.hpp"

namespace cisir {

void ArchitectureConfig::validate() const
{
    require(!hidden_widths.empty(), "architecture: need at least one hidden layer");
    require(embed_dim > 0, "architecture: embed_dim must be positive");
    for (std::size_t w : hidden_widths) {
        require(w > 0, "architecture: widths must be positive");
    }
    require(hidden_widths.back() == embed_dim, "architecture: the last hidden width must equal embed_dim");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, "architecture: dropout_rate must be in [0, 1)");
    require(std::isfinite(leaky_slope), "architecture: leaky_slope must be finite");
}

void OptimizerConfig::validate() const
{
    require(std::isfinite(learning_rate) && learning_rate > 0.0, "optimizer: learning rate must be positive");
    require(weight_decay >= 0.0, "optimizer: weight decay must be non-negative");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "optimizer: betas must be in [0, 1)");
    require(epsilon > 0.0, "optimizer: epsilon must be positive");
}

std::size_t ModelState::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& t : params) n += t.values.size();
    return n;
}

Tensor& ModelState::param(const std::string& name)
{
    for (auto& t : params) {
        if (t.name == name) return t;
    }
    throw Error("model has no parameter '" + name + "'");
}

const Tensor& ModelState::param(const std::string& name) const
{
    return const_cast<ModelState*>(this)->param(name);
}

void ModelState::check_invariants() const
{
    arch.validate();
    if (first_moment.size() != params.size() || second_moment.size() != params.size()) {
        throw Error("model: optimizer moments do not match parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::size_t expect = 1;
        for (std::size_t s : params[i].shape) expect *= s;
        if (params[i].values.size() != expect || first_moment[i].size() != expect || second_moment[i].size() != expect) {
            throw Error("model: tensor '" + params[i].name + "' has inconsistent shape");
        }
    }
    for (const auto& b : blocks) {
        for (const auto& l : b.layers) {
            if (l.running_var) {
                for (double v : buffers[*l.running_var].values) {
                    if (!(v >= 0.0)) throw Error("model: negative running variance");
                }
            }
        }
    }
    if (input_shift.size() != input_dim || input_scale.size() != input_dim) {
        throw Error("model: input standardization has the wrong size");
    }
}

double Gradients::max_abs() const
{
    double m = 0.0;
    for (const auto& t : tensors) {
        for (double g : t) m = std::max(m, std::abs(g));
    }
    return m;
}

namespace {

std::size_t add_tensor(std::vector<Tensor>& list, std::string name, std::vector<std::size_t> shape, double fill)
{
    std::size_t count = 1;
    for (std::size_t s : shape) count *= s;
    list.push_back(Tensor{std::move(name), std::move(shape), std::vector<double>(count, fill)});
    return list.size() - 1;
}

/// Builds the tensor layout for an architecture; values are zero/one
/// filled and overwritten by init_model or a checkpoint.
void build_layout(ModelState& s)
{
    s.params.clear();
    s.buffers.clear();
    s.blocks.clear();
    std::size_t in = s.input_dim;
    BlockLayout current;
    current.residual = false;
    for (std::size_t w : s.arch.hidden_widths) {
        const std::string prefix = "block" + std::to_string(s.blocks.size()) + ".layer" + std::to_string(current.layers.size());
        DenseLayout l;
        l.in = in;
        l.out = w;
        l.weight = add_tensor(s.params, prefix + ".weight", {in, w}, 0.0);
        l.bias = add_tensor(s.params, prefix + ".bias", {w}, 0.0);
        if (s.arch.use_batchnorm) {
            l.gamma = add_tensor(s.params, prefix + ".gamma", {w}, 1.0);
            l.beta = add_tensor(s.params, prefix + ".beta", {w}, 0.0);
            l.running_mean = add_tensor(s.buffers, prefix + ".running_mean", {w}, 0.0);
            l.running_var = add_tensor(s.buffers, prefix + ".running_var", {w}, 1.0);
        }
        current.layers.push_back(l);
        in = w;
        if (w == s.arch.embed_dim) {
            s.blocks.push_back(current);
            current = BlockLayout{};
            current.residual = true;
        }
    }
    s.head_weight = add_tensor(s.params, "head.weight", {s.arch.embed_dim, 1}, 0.0);
    s.head_bias = add_tensor(s.params, "head.bias", {1}, 0.0);
    s.first_moment.assign(s.params.size(), {});
    s.second_moment.assign(s.params.size(), {});
    for (std::size_t i = 0; i < s.params.size(); ++i) {
        s.first_moment[i].assign(s.params[i].values.size(), 0.0);
        s.second_moment[i].assign(s.params[i].values.size(), 0.0);
    }
}

// C = A * W + bias (A: n x in, W: in x out)
void affine(const Matrix& a, std::span<const double> w, std::span<const double> bias, Matrix& c)
{
    const std::size_t n = a.rows();
    const std::size_t in = a.cols();
    const std::size_t out = bias.size();
    c = Matrix(n, out);
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = c.row(i).data();
        std::copy(bias.begin(), bias.end(), ci);
        const double* ai = a.row(i).data();
        for (std::size_t k = 0; k < in; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* wk = w.data() + k * out;
            for (std::size_t j = 0; j < out; ++j) ci[j] += aik * wk[j];
        }
    }
}

double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }

} // namespace

ModelState init_model(const ArchitectureConfig& arch, std::size_t input_dim, std::uint64_t seed)
{
    arch.validate();
    require(input_dim > 0, "init_model: input_dim must be positive");
    ModelState s;
    s.arch = arch;
    s.input_dim = input_dim;
    s.input_shift.assign(input_dim, 0.0);
    s.input_scale.assign(input_dim, 1.0);
    build_layout(s);
    auto init_weight = [&](std::size_t index, double gain) {
        Tensor& t = s.params[index];
        const double fan_in = static_cast<double>(t.shape[0]);
        std::normal_distribution<double> normal(0.0, std::sqrt(gain / fan_in));
        auto rng = keyed_rng({seed, 0x696e6974ULL, index});
        for (double& v : t.values) v = normal(rng);
    };
    for (const auto& b : s.blocks) {
        for (const auto& l : b.layers) init_weight(l.weight, 2.0);
    }
    init_weight(s.head_weight, 1.0);
    return s;
}

void set_input_standardization(ModelState& state, const Matrix& features)
{
    require(features.cols() == state.input_dim, "input standardization: feature count mismatch");
    require(features.rows() >= 1, "input standardization: no rows");
    const std::size_t d = features.cols();
    const double n = static_cast<double>(features.rows());
    for (std::size_t c = 0; c < d; ++c) {
        CompensatedSum s;
        for (std::size_t r = 0; r < features.rows(); ++r) s.add(features(r, c));
        const double mean = s.value() / n;
        CompensatedSum v;
        for (std::size_t r = 0; r < features.rows(); ++r) {
            const double e = features(r, c) - mean;
            v.add(e * e);
        }
        const double sd = std::sqrt(v.value() / n);
        state.input_shift[c] = mean;
        state.input_scale[c] = 1.0 / std::max(sd, 1e-12);
    }
}

ForwardResult forward(const ModelState& state, const Matrix& inputs, bool train_mode, std::uint64_t seed)
{
    if (inputs.cols() != state.input_dim) {
        throw ConfigError("forward: input has " + std::to_string(inputs.cols()) + " columns, model expects " +
                          std::to_string(state.input_dim));
    }
    const std::size_t n = inputs.rows();
    ForwardResult result;
    ForwardCache& cache = result.cache;
    cache.step = state.step;
    cache.input_dim = state.input_dim;
    cache.rows = n;
    cache.train_mode = train_mode;

    Matrix x(n, state.input_dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < state.input_dim; ++c) {
            x(i, c) = (inputs(i, c) - state.input_shift[c]) * state.input_scale[c];
        }
    }
    const double slope = state.arch.leaky_slope;
    const double drop = train_mode ? state.arch.dropout_rate : 0.0;
    std::size_t layer_counter = 0;
    cache.layers.resize(state.blocks.size());
    for (std::size_t b = 0; b < state.blocks.size(); ++b) {
        const auto& block = state.blocks[b];
        Matrix block_input = x;
        cache.layers[b].resize(block.layers.size());
        for (std::size_t l = 0; l < block.layers.size(); ++l) {
            const DenseLayout& lay = block.layers[l];
            LayerCache& lc = cache.layers[b][l];
            lc.input = std::move(x);
            Matrix z;
            affine(lc.input, state.params[lay.weight].values, state.params[lay.bias].values, z);
            if (lay.gamma) {
                const auto& gamma = state.params[*lay.gamma].values;
                const auto& beta = state.params[*lay.beta].values;
                lc.normalized = Matrix(n, lay.out);
                lc.inv_std.assign(lay.out, 0.0);
                if (train_mode) {
                    lc.batch_mean.assign(lay.out, 0.0);
                    lc.batch_var.assign(lay.out, 0.0);
                    for (std::size_t j = 0; j < lay.out; ++j) {
                        double mean = 0.0;
                        for (std::size_t i = 0; i < n; ++i) mean += z(i, j);
                        mean /= static_cast<double>(n);
                        double var = 0.0;
                        for (std::size_t i = 0; i < n; ++i) {
                            const double e = z(i, j) - mean;
                            var += e * e;
                        }
                        var /= static_cast<double>(n);
                        lc.batch_mean[j] = mean;
                        lc.batch_var[j] = var;
                        lc.inv_std[j] = 1.0 / std::sqrt(var + kBatchNormEpsilon);
                    }
                } else {
                    const auto& rm = state.buffers[*lay.running_mean].values;
                    const auto& rv = state.buffers[*lay.running_var].values;
                    lc.batch_mean = rm;
                    for (std::size_t j = 0; j < lay.out; ++j) lc.inv_std[j] = 1.0 / std::sqrt(rv[j] + kBatchNormEpsilon);
                }
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < lay.out; ++j) {
                        const double xh = (z(i, j) - lc.batch_mean[j]) * lc.inv_std[j];
                        lc.normalized(i, j) = xh;
                        z(i, j) = gamma[j] * xh + beta[j];
                    }
                }
            }
            lc.activation_input = z;
            for (double& v : z.values()) v = leaky(v, slope);
            if (drop > 0.0) {
                lc.dropout_mask = Matrix(n, lay.out);
                auto rng = keyed_rng({seed, 0x64726f70ULL, layer_counter});
                const double keep_scale = 1.0 / (1.0 - drop);
                auto& mask = lc.dropout_mask.values();
                auto& zv = z.values();
                for (std::size_t k = 0; k < mask.size(); ++k) {
                    mask[k] = uniform01(rng) < drop ? 0.0 : keep_scale;
                    zv[k] *= mask[k];
                }
            }
            x = std::move(z);
            ++layer_counter;
        }
        if (block.residual) {
            auto& xv = x.values();
            const auto& iv = block_input.values();
            for (std::size_t k = 0; k < xv.size(); ++k) xv[k] += iv[k];
        }
    }
    cache.embedding = x;
    const auto& hw = state.params[state.head_weight].values;
    const double hb = state.params[state.head_bias].values[0];
    result.predictions.assign(n, hb);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = cache.embedding.row(i);
        double s = hb;
        for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * hw[j];
        result.predictions[i] = s;
    }
    return result;
}

std::vector<double> predict(const ModelState& state, const Matrix& inputs)
{
    return forward(state, inputs, false, 0).predictions;
}

Gradients backward(const ModelState& state, const ForwardCache& cache, std::span<const double> dl_dyhat)
{
    if (cache.step != state.step || cache.input_dim != state.input_dim || cache.layers.size() != state.blocks.size()) {
        throw Error("backward: stale or mismatched forward cache");
    }
    if (dl_dyhat.size() != cache.rows) {
        throw ConfigError("backward: gradient length does not match the batch");
    }
    const std::size_t n = cache.rows;
    Gradients g;
    g.tensors.resize(state.params.size());
    for (std::size_t i = 0; i < state.params.size(); ++i) g.tensors[i].assign(state.params[i].values.size(), 0.0);

    // Head.
    const std::size_t embed = state.arch.embed_dim;
    const auto& hw = state.params[state.head_weight].values;
    auto& ghw = g.tensors[state.head_weight];
    double ghb = 0.0;
    Matrix d(n, embed);
    for (std::size_t i = 0; i < n; ++i) {
        const double gi = dl_dyhat[i];
        ghb += gi;
        const auto e = cache.embedding.row(i);
        for (std::size_t j = 0; j < embed; ++j) {
            ghw[j] += e[j] * gi;
            d(i, j) = gi * hw[j];
        }
    }
    g.tensors[state.head_bias][0] = ghb;

    const double slope = state.arch.leaky_slope;
    for (std::size_t b = state.blocks.size(); b-- > 0;) {
        const auto& block = state.blocks[b];
        Matrix skip;
        if (block.residual) skip = d;
        for (std::size_t l = block.layers.size(); l-- > 0;) {
            const DenseLayout& lay = block.layers[l];
            const LayerCache& lc = cache.layers[b][l];
            auto& dv = d.values();
            if (!lc.dropout_mask.empty()) {
                const auto& mask = lc.dropout_mask.values();
                for (std::size_t k = 0; k < dv.size(); ++k) dv[k] *= mask[k];
            }
            const auto& pre = lc.activation_input.values();
            for (std::size_t k = 0; k < dv.size(); ++k) {
                if (!(pre[k] > 0.0)) dv[k] *= slope;
            }
            if (lay.gamma) {
                const auto& gamma = state.params[*lay.gamma].values;
                auto& gg = g.tensors[*lay.gamma];
                auto& gb = g.tensors[*lay.beta];
                for (std::size_t j = 0; j < lay.out; ++j) {
                    double sum_d = 0.0;
                    double sum_dx = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        sum_d += d(i, j);
                        sum_dx += d(i, j) * lc.normalized(i, j);
                    }
                    gg[j] += sum_dx;
                    gb[j] += sum_d;
                    const double k = gamma[j] * lc.inv_std[j];
                    if (cache.train_mode) {
                        const double mean_d = sum_d / static_cast<double>(n);
                        const double mean_dx = sum_dx / static_cast<double>(n);
                        for (std::size_t i = 0; i < n; ++i) {
                            d(i, j) = k * (d(i, j) - mean_d - lc.normalized(i, j) * mean_dx);
                        }
                    } else {
                        for (std::size_t i = 0; i < n; ++i) d(i, j) *= k;
                    }
                }
            }
            // d now holds dL/dz for z = input * W + bias.
            auto& gw = g.tensors[lay.weight];
            auto& gbias = g.tensors[lay.bias];
            const auto& w = state.params[lay.weight].values;
            for (std::size_t i = 0; i < n; ++i) {
                const double* di = d.row(i).data();
                const double* ai = lc.input.row(i).data();
                for (std::size_t j = 0; j < lay.out; ++j) gbias[j] += di[j];
                for (std::size_t k = 0; k < lay.in; ++k) {
                    const double aik = ai[k];
                    if (aik == 0.0) continue;
                    double* gwk = gw.data() + k * lay.out;
                    for (std::size_t j = 0; j < lay.out; ++j) gwk[j] += aik * di[j];
                }
            }
            const bool need_input_grad = !(b == 0 && l == 0);
            if (need_input_grad) {
                Matrix din(n, lay.in);
                for (std::size_t i = 0; i < n; ++i) {
                    const double* di = d.row(i).data();
                    double* dini = din.row(i).data();
                    for (std::size_t k = 0; k < lay.in; ++k) {
                        const double* wk = w.data() + k * lay.out;
                        double s = 0.0;
                        for (std::size_t j = 0; j < lay.out; ++j) s += di[j] * wk[j];
                        dini[k] = s;
                    }
                }
                d = std::move(din);
            }
        }
        if (block.residual) {
            auto& dv = d.values();
            const auto& sv = skip.values();
            for (std::size_t k = 0; k < dv.size(); ++k) dv[k] += sv[k];
        }
    }
    return g;
}

void update_running_statistics(ModelState& state, const ForwardCache& cache, double momentum)
{
    if (!cache.train_mode || cache.layers.size() != state.blocks.size()) {
        return;
    }
    for (std::size_t b = 0; b < state.blocks.size(); ++b) {
        for (std::size_t l = 0; l < state.blocks[b].layers.size(); ++l) {
            const auto& lay = state.blocks[b].layers[l];
            if (!lay.running_mean) continue;
            const auto& lc = cache.layers[b][l];
            auto& rm = state.buffers[*lay.running_mean].values;
            auto& rv = state.buffers[*lay.running_var].values;
            for (std::size_t j = 0; j < rm.size(); ++j) {
                rm[j] = momentum * rm[j] + (1.0 - momentum) * lc.batch_mean[j];
                rv[j] = momentum * rv[j] + (1.0 - momentum) * lc.batch_var[j];
            }
        }
    }
}

void adam_step(ModelState& state, const Gradients& gradients, const OptimizerConfig& opt)
{
    opt.validate();
    if (gradients.tensors.size() != state.params.size()) {
        throw ConfigError("adam_step: gradient/parameter count mismatch");
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(opt.beta1, t);
    const double bc2 = 1.0 - std::pow(opt.beta2, t);
    const double lr = opt.learning_rate;
    const double decay = 1.0 - lr * opt.weight_decay;
    for (std::size_t p = 0; p < state.params.size(); ++p) {
        auto& theta = state.params[p].values;
        const auto& g = gradients.tensors[p];
        if (g.size() != theta.size()) {
            throw ConfigError("adam_step: gradient shape mismatch for '" + state.params[p].name + "'");
        }
        auto& m = state.first_moment[p];
        auto& v = state.second_moment[p];
        for (std::size_t k = 0; k < theta.size(); ++k) {
            if (opt.weight_decay != 0.0) theta[k] *= decay;
            m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * g[k];
            v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            theta[k] -= lr * mhat / (std::sqrt(vhat) + opt.epsilon);
        }
    }
}

nlohmann::json to_json(const ArchitectureConfig& arch)
{
    return {
        {"hidden_widths", arch.hidden_widths},
        {"embed_dim", arch.embed_dim},
        {"dropout_rate", arch.dropout_rate},
        {"leaky_slope", arch.leaky_slope},
        {"use_batchnorm", arch.use_batchnorm},
    };
}

ArchitectureConfig architecture_from_json(const nlohmann::json& j)
{
    ArchitectureConfig a;
    a.hidden_widths = j.at("hidden_widths").get<std::vector<std::size_t>>();
    a.embed_dim = j.value("embed_dim", a.hidden_widths.empty() ? std::size_t{0} : a.hidden_widths.back());
    a.dropout_rate = j.value("dropout_rate", 0.0);
    a.leaky_slope = j.value("leaky_slope", 0.01);
    a.use_batchnorm = j.value("use_batchnorm", true);
    a.validate();
    return a;
}

nlohmann::json checkpoint_to_json(const ModelState& state)
{
    nlohmann::json tensors = nlohmann::json::array();
    auto emit = [&](const Tensor& t, const std::string& kind, const std::vector<double>& values) {
        tensors.push_back({{"name", t.name}, {"kind", kind}, {"shape", t.shape}, {"data", values}});
    };
    for (std::size_t i = 0; i < state.params.size(); ++i) emit(state.params[i], "param", state.params[i].values);
    for (const auto& t : state.buffers) emit(t, "buffer", t.values);
    for (std::size_t i = 0; i < state.params.size(); ++i) emit(state.params[i], "adam_m", state.first_moment[i]);
    for (std::size_t i = 0; i < state.params.size(); ++i) emit(state.params[i], "adam_v", state.second_moment[i]);
    return {
        {"format", "cisir-checkpoint"},
        {"version", 1},
        {"header",
         {{"arch", to_json(state.arch)},
          {"input_dim", state.input_dim},
          {"step", state.step},
          {"input_shift", state.input_shift},
          {"input_scale", state.input_scale}}},
        {"tensors", tensors},
    };
}

ModelState checkpoint_from_json(const nlohmann::json& j)
{
    if (j.value("format", std::string{}) != "cisir-checkpoint") {
        throw DataError("not a cisir checkpoint");
    }
    const auto& h = j.at("header");
    ModelState s;
    s.arch = architecture_from_json(h.at("arch"));
    s.input_dim = h.at("input_dim").get<std::size_t>();
    s.step = h.at("step").get<std::uint64_t>();
    s.input_shift = h.at("input_shift").get<std::vector<double>>();
    s.input_scale = h.at("input_scale").get<std::vector<double>>();
    build_layout(s);
    auto find = [](std::vector<Tensor>& list, const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < list.size(); ++i) {
            if (list[i].name == name) return i;
        }
        throw DataError("checkpoint tensor '" + name + "' does not belong to the architecture");
    };
    for (const auto& t : j.at("tensors")) {
        const auto name = t.at("name").get<std::string>();
        const auto kind = t.at("kind").get<std::string>();
        const auto shape = t.at("shape").get<std::vector<std::size_t>>();
        auto data = t.at("data").get<std::vector<double>>();
        std::vector<double>* target = nullptr;
        const std::vector<std::size_t>* expected_shape = nullptr;
        if (kind == "buffer") {
            const auto i = find(s.buffers, name);
            target = &s.buffers[i].values;
            expected_shape = &s.buffers[i].shape;
        } else {
            const auto i = find(s.params, name);
            expected_shape = &s.params[i].shape;
            if (kind == "param") target = &s.params[i].values;
            else if (kind == "adam_m") target = &s.first_moment[i];
            else if (kind == "adam_v") target = &s.second_moment[i];
            else throw DataError("checkpoint: unknown tensor kind '" + kind + "'");
        }
        if (shape != *expected_shape || data.size() != target->size()) {
            throw DataError("checkpoint: tensor '" + name + "' has the wrong shape");
        }
        *target = std::move(data);
    }
    s.check_invariants();
    return s;
}

void save_checkpoint(const ModelState& state, const std::filesystem::path& path)
{
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error("cannot write checkpoint '" + path.string() + "'");
        out << checkpoint_to_json(state).dump();
    }
    std::filesystem::rename(tmp, path);
}

ModelState load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
    return checkpoint_from_json(nlohmann::json::parse(in));
}

} // namespace cisir
