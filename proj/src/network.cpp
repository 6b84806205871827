#include "dispatchrl/network.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace dispatchrl {

namespace {

double scaled_noise(double x) {
    return (x >= 0.0 ? 1.0 : -1.0) * std::sqrt(std::fabs(x));
}

} // namespace

double Gradients::global_norm() const {
    double sum = 0.0;
    for (const Vec& block : blocks)
        for (double g : block)
            sum += g * g;
    return std::sqrt(sum);
}

void Gradients::scale(double factor) {
    for (Vec& block : blocks)
        for (double& g : block)
            g *= factor;
}

Network::Network(const NetworkConfig& config, std::uint64_t seed)
    : config_(config), noise_rng_(seed ^ 0x9e3779b97f4a7c15ULL) {
    if (config_.input_dim < 1 || config_.n_actions < 1)
        throw std::invalid_argument("network needs positive input_dim and n_actions");

    std::mt19937_64 init_rng(seed);
    int in = config_.input_dim;
    for (std::size_t i = 0; i < config_.hidden.size(); ++i) {
        Layer layer;
        layer.in = in;
        layer.out = config_.hidden[i];
        layer.noisy = config_.noisy;
        layer.relu = true;
        layer.name = "h" + std::to_string(i);
        init_layer(layer, init_rng);
        in = layer.out;
        hidden_layers_.push_back(std::move(layer));
    }
    if (config_.dueling) {
        value_layer_ = Layer{in, 1, config_.noisy, false, "val", {}, {}, {}, {}, {}, {}};
        adv_layer_ = Layer{in, config_.n_actions, config_.noisy, false, "adv",
                           {}, {}, {}, {}, {}, {}};
        init_layer(value_layer_, init_rng);
        init_layer(adv_layer_, init_rng);
    } else {
        out_layer_ = Layer{in, config_.n_actions, config_.noisy, false, "out",
                           {}, {}, {}, {}, {}, {}};
        init_layer(out_layer_, init_rng);
    }
    resample_noise();
}

void Network::init_layer(Layer& layer, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    layer.w.resize(static_cast<std::size_t>(layer.out) * layer.in);
    layer.b.resize(layer.out);
    for (double& x : layer.w)
        x = uniform(rng);
    for (double& x : layer.b)
        x = uniform(rng);
    if (layer.noisy) {
        const double sigma = config_.sigma_init / std::sqrt(static_cast<double>(layer.in));
        layer.w_sigma.assign(layer.w.size(), sigma);
        layer.b_sigma.assign(layer.b.size(), sigma);
    }
    layer.noise_in.assign(layer.in, 0.0);
    layer.noise_out.assign(layer.out, 0.0);
}

std::vector<Network::Layer*> Network::all_layers() {
    std::vector<Layer*> layers;
    for (Layer& layer : hidden_layers_)
        layers.push_back(&layer);
    if (config_.dueling) {
        layers.push_back(&value_layer_);
        layers.push_back(&adv_layer_);
    } else {
        layers.push_back(&out_layer_);
    }
    return layers;
}

std::vector<const Network::Layer*> Network::all_layers() const {
    std::vector<const Layer*> layers;
    for (const Layer& layer : hidden_layers_)
        layers.push_back(&layer);
    if (config_.dueling) {
        layers.push_back(&value_layer_);
        layers.push_back(&adv_layer_);
    } else {
        layers.push_back(&out_layer_);
    }
    return layers;
}

void Network::resample_layer_noise(Layer& layer) {
    if (!layer.noisy)
        return;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& x : layer.noise_in)
        x = scaled_noise(normal(noise_rng_));
    for (double& x : layer.noise_out)
        x = scaled_noise(normal(noise_rng_));
}

void Network::resample_noise() {
    for (Layer* layer : all_layers())
        resample_layer_noise(*layer);
}

double Network::effective_bias(const Layer& layer, int row, NoiseMode mode) const {
    double b = layer.b[row];
    if (layer.noisy && mode != NoiseMode::Zero)
        b += layer.b_sigma[row] * layer.noise_out[row];
    return b;
}

void Network::layer_forward_pre(const Layer& layer, const Vec& in, Vec& out,
                                NoiseMode mode) const {
    out.assign(layer.out, 0.0);
    for (int o = 0; o < layer.out; ++o) {
        double acc = effective_bias(layer, o, mode);
        const double* wrow = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
        if (layer.noisy && mode != NoiseMode::Zero) {
            const double* srow = layer.w_sigma.data() + static_cast<std::size_t>(o) * layer.in;
            const double no = layer.noise_out[o];
            for (int c = 0; c < layer.in; ++c)
                acc += (wrow[c] + srow[c] * no * layer.noise_in[c]) * in[c];
        } else {
            for (int c = 0; c < layer.in; ++c)
                acc += wrow[c] * in[c];
        }
        out[o] = acc;
    }
}

void Network::layer_forward(const Layer& layer, const Vec& in, Vec& out,
                            NoiseMode mode) const {
    layer_forward_pre(layer, in, out, mode);
    if (layer.relu)
        for (double& x : out)
            x = std::max(0.0, x);
}

Vec Network::forward(const Vec& input, NoiseMode mode) {
    if (static_cast<int>(input.size()) != config_.input_dim)
        throw std::invalid_argument("observation length does not match network input");
    if (mode == NoiseMode::Resample) {
        resample_noise();
        mode = NoiseMode::Frozen;
    }
    Vec a = input;
    Vec next;
    for (const Layer& layer : hidden_layers_) {
        layer_forward(layer, a, next, mode);
        a.swap(next);
    }
    if (!config_.dueling) {
        layer_forward(out_layer_, a, next, mode);
        return next;
    }
    Vec value, adv;
    layer_forward(value_layer_, a, value, mode);
    layer_forward(adv_layer_, a, adv, mode);
    double mean_adv = 0.0;
    for (double x : adv)
        mean_adv += x;
    mean_adv /= adv.size();
    Vec q(adv.size());
    for (std::size_t i = 0; i < adv.size(); ++i)
        q[i] = value[0] + adv[i] - mean_adv;
    return q;
}

DuelingParts Network::forward_parts(const Vec& input, NoiseMode mode) {
    if (!config_.dueling)
        throw std::logic_error("forward_parts requires a dueling network");
    if (mode == NoiseMode::Resample) {
        resample_noise();
        mode = NoiseMode::Frozen;
    }
    Vec a = input;
    Vec next;
    for (const Layer& layer : hidden_layers_) {
        layer_forward(layer, a, next, mode);
        a.swap(next);
    }
    DuelingParts parts;
    Vec value;
    layer_forward(value_layer_, a, value, mode);
    layer_forward(adv_layer_, a, parts.advantages, mode);
    parts.value = value[0];
    double mean_adv = 0.0;
    for (double x : parts.advantages)
        mean_adv += x;
    mean_adv /= parts.advantages.size();
    parts.q.resize(parts.advantages.size());
    for (std::size_t i = 0; i < parts.advantages.size(); ++i)
        parts.q[i] = parts.value + parts.advantages[i] - mean_adv;
    return parts;
}

std::vector<Vec> Network::forward_batch(const std::vector<Vec>& inputs, NoiseMode mode) {
    if (mode == NoiseMode::Resample) {
        resample_noise();
        mode = NoiseMode::Frozen;
    }
    std::vector<Vec> out;
    out.reserve(inputs.size());
    for (const Vec& x : inputs)
        out.push_back(forward(x, mode));
    return out;
}

Gradients Network::zero_gradients() const {
    Gradients grads;
    for (const Layer* layer : all_layers()) {
        grads.blocks.emplace_back(layer->w.size(), 0.0);
        grads.blocks.emplace_back(layer->b.size(), 0.0);
        if (layer->noisy) {
            grads.blocks.emplace_back(layer->w_sigma.size(), 0.0);
            grads.blocks.emplace_back(layer->b_sigma.size(), 0.0);
        }
    }
    return grads;
}

void Network::layer_backward(const Layer& layer, const LayerCache& cache,
                             const std::vector<Vec>& grad_out, std::vector<Vec>& grad_in,
                             Gradients& grads, int block_offset, NoiseMode mode) const {
    const std::size_t batch = grad_out.size();
    Vec& dw = grads.blocks[block_offset];
    Vec& db = grads.blocks[block_offset + 1];
    Vec* dw_sigma = layer.noisy ? &grads.blocks[block_offset + 2] : nullptr;
    Vec* db_sigma = layer.noisy ? &grads.blocks[block_offset + 3] : nullptr;
    const bool use_noise = layer.noisy && mode != NoiseMode::Zero;

    grad_in.assign(batch, Vec(layer.in, 0.0));
    Vec grad_pre(layer.out);
    for (std::size_t i = 0; i < batch; ++i) {
        const Vec& in = cache.inputs[i];
        const Vec& pre = cache.pre[i];
        for (int o = 0; o < layer.out; ++o)
            grad_pre[o] = layer.relu && pre[o] <= 0.0 ? 0.0 : grad_out[i][o];
        for (int o = 0; o < layer.out; ++o) {
            const double g = grad_pre[o];
            if (g == 0.0)
                continue;
            const std::size_t row = static_cast<std::size_t>(o) * layer.in;
            db[o] += g;
            if (use_noise) {
                const double no = layer.noise_out[o];
                (*db_sigma)[o] += g * no;
                for (int c = 0; c < layer.in; ++c) {
                    dw[row + c] += g * in[c];
                    (*dw_sigma)[row + c] += g * in[c] * no * layer.noise_in[c];
                    grad_in[i][c] +=
                        g * (layer.w[row + c] + layer.w_sigma[row + c] * no * layer.noise_in[c]);
                }
            } else {
                for (int c = 0; c < layer.in; ++c) {
                    dw[row + c] += g * in[c];
                    grad_in[i][c] += g * layer.w[row + c];
                }
            }
        }
    }
}

Gradients Network::backward(const std::vector<Vec>& inputs, const std::vector<int>& actions,
                            const Vec& targets, const Vec& weights, NoiseMode mode,
                            double* loss_out, Vec* td_errors_out) {
    const std::size_t batch = inputs.size();
    if (batch == 0)
        throw std::invalid_argument("backward requires a non-empty batch");
    if (actions.size() != batch || targets.size() != batch || weights.size() != batch)
        throw std::invalid_argument("batch arrays must have equal length");
    if (mode == NoiseMode::Resample) {
        resample_noise();
        mode = NoiseMode::Frozen;
    }

    // Cached forward pass.
    const std::vector<Layer*> layers_mut = all_layers();
    std::vector<const Layer*> layers(layers_mut.begin(), layers_mut.end());
    const std::size_t n_hidden = hidden_layers_.size();
    std::vector<LayerCache> caches(layers.size());
    for (auto& cache : caches) {
        cache.inputs.resize(batch);
        cache.pre.resize(batch);
    }

    std::vector<Vec> q(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        Vec a = inputs[i];
        for (std::size_t l = 0; l < n_hidden; ++l) {
            const Layer& layer = *layers[l];
            caches[l].inputs[i] = a;
            Vec pre;
            layer_forward_pre(layer, a, pre, mode);
            caches[l].pre[i] = pre;
            a.resize(layer.out);
            for (int o = 0; o < layer.out; ++o)
                a[o] = std::max(0.0, pre[o]);
        }
        if (!config_.dueling) {
            const Layer& layer = *layers[n_hidden];
            caches[n_hidden].inputs[i] = a;
            Vec pre(layer.out);
            layer_forward(layer, a, pre, mode);
            caches[n_hidden].pre[i] = pre;
            q[i] = pre;
        } else {
            const Layer& val = *layers[n_hidden];
            const Layer& adv = *layers[n_hidden + 1];
            caches[n_hidden].inputs[i] = a;
            caches[n_hidden + 1].inputs[i] = a;
            Vec value, advantages;
            layer_forward(val, a, value, mode);
            layer_forward(adv, a, advantages, mode);
            caches[n_hidden].pre[i] = value;
            caches[n_hidden + 1].pre[i] = advantages;
            double mean_adv = 0.0;
            for (double x : advantages)
                mean_adv += x;
            mean_adv /= advantages.size();
            q[i].resize(advantages.size());
            for (std::size_t j = 0; j < advantages.size(); ++j)
                q[i][j] = value[0] + advantages[j] - mean_adv;
        }
    }

    // Loss gradient on the Q outputs: taken action only.
    double loss = 0.0;
    if (td_errors_out)
        td_errors_out->assign(batch, 0.0);
    std::vector<Vec> grad_q(batch, Vec(config_.n_actions, 0.0));
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        const int a = actions[i];
        if (a < 0 || a >= config_.n_actions)
            throw std::out_of_range("action index out of range in backward()");
        const double td = q[i][a] - targets[i];
        if (td_errors_out)
            (*td_errors_out)[i] = td;
        loss += weights[i] * td * td * inv_batch;
        grad_q[i][a] = 2.0 * weights[i] * td * inv_batch;
    }
    if (loss_out)
        *loss_out = loss;

    Gradients grads = zero_gradients();
    std::vector<int> offsets(layers.size());
    int off = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        offsets[l] = off;
        off += layers[l]->noisy ? 4 : 2;
    }

    std::vector<Vec> grad_hidden_top;
    if (!config_.dueling) {
        layer_backward(*layers[n_hidden], caches[n_hidden], grad_q, grad_hidden_top, grads,
                       offsets[n_hidden], mode);
    } else {
        // Q_a = V + A_a - mean(A): split the output gradient across streams.
        std::vector<Vec> grad_v(batch, Vec(1, 0.0));
        std::vector<Vec> grad_a(batch, Vec(config_.n_actions, 0.0));
        for (std::size_t i = 0; i < batch; ++i) {
            double total = 0.0;
            for (double g : grad_q[i])
                total += g;
            grad_v[i][0] = total;
            const double mean_g = total / config_.n_actions;
            for (int j = 0; j < config_.n_actions; ++j)
                grad_a[i][j] = grad_q[i][j] - mean_g;
        }
        std::vector<Vec> from_value, from_adv;
        layer_backward(*layers[n_hidden], caches[n_hidden], grad_v, from_value, grads,
                       offsets[n_hidden], mode);
        layer_backward(*layers[n_hidden + 1], caches[n_hidden + 1], grad_a, from_adv, grads,
                       offsets[n_hidden + 1], mode);
        grad_hidden_top.assign(batch, Vec(layers[n_hidden]->in, 0.0));
        for (std::size_t i = 0; i < batch; ++i)
            for (int c = 0; c < layers[n_hidden]->in; ++c)
                grad_hidden_top[i][c] = from_value[i][c] + from_adv[i][c];
    }

    std::vector<Vec> grad_current = std::move(grad_hidden_top);
    for (int l = static_cast<int>(n_hidden) - 1; l >= 0; --l) {
        std::vector<Vec> grad_prev;
        layer_backward(*layers[l], caches[l], grad_current, grad_prev, grads, offsets[l],
                       mode);
        grad_current = std::move(grad_prev);
    }
    return grads;
}

std::vector<ParamBlock> Network::param_blocks() {
    std::vector<ParamBlock> blocks;
    for (Layer* layer : all_layers()) {
        blocks.push_back({layer->name + ".w", &layer->w});
        blocks.push_back({layer->name + ".b", &layer->b});
        if (layer->noisy) {
            blocks.push_back({layer->name + ".w_sigma", &layer->w_sigma});
            blocks.push_back({layer->name + ".b_sigma", &layer->b_sigma});
        }
    }
    return blocks;
}

std::uint64_t Network::parameter_hash() const {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    auto mix = [&hash](const Vec& values) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
        for (std::size_t i = 0; i < values.size() * sizeof(double); ++i) {
            hash ^= bytes[i];
            hash *= 0x100000001b3ULL;
        }
    };
    for (const Layer* layer : all_layers()) {
        mix(layer->w);
        mix(layer->b);
        if (layer->noisy) {
            mix(layer->w_sigma);
            mix(layer->b_sigma);
        }
    }
    return hash;
}

void Network::save(std::ostream& out) const {
    nlohmann::json doc;
    doc["format"] = "dispatchrl-network";
    doc["version"] = 1;
    doc["config"] = {{"input_dim", config_.input_dim},
                     {"n_actions", config_.n_actions},
                     {"hidden", config_.hidden},
                     {"dueling", config_.dueling},
                     {"noisy", config_.noisy},
                     {"sigma_init", config_.sigma_init}};
    nlohmann::json params = nlohmann::json::object();
    for (const Layer* layer : all_layers()) {
        params[layer->name + ".w"] = layer->w;
        params[layer->name + ".b"] = layer->b;
        if (layer->noisy) {
            params[layer->name + ".w_sigma"] = layer->w_sigma;
            params[layer->name + ".b_sigma"] = layer->b_sigma;
        }
    }
    doc["params"] = std::move(params);
    out << doc.dump();
}

Network Network::load(std::istream& in) {
    nlohmann::json doc = nlohmann::json::parse(in);
    if (doc.value("format", "") != "dispatchrl-network")
        throw std::runtime_error("not a network checkpoint");
    if (doc.value("version", 0) != 1)
        throw std::runtime_error("unsupported network checkpoint version");
    NetworkConfig config;
    const auto& jc = doc.at("config");
    config.input_dim = jc.at("input_dim").get<int>();
    config.n_actions = jc.at("n_actions").get<int>();
    config.hidden = jc.at("hidden").get<std::vector<int>>();
    config.dueling = jc.at("dueling").get<bool>();
    config.noisy = jc.at("noisy").get<bool>();
    config.sigma_init = jc.at("sigma_init").get<double>();

    Network net(config, 0);
    const auto& params = doc.at("params");
    for (ParamBlock block : net.param_blocks()) {
        const Vec values = params.at(block.name).get<Vec>();
        if (values.size() != block.values->size())
            throw std::runtime_error("checkpoint parameter size mismatch: " + block.name);
        *block.values = values;
    }
    return net;
}

void copy_parameters(const Network& source, Network& destination) {
    if (!(source.config() == destination.config()))
        throw std::invalid_argument("copy_parameters: architecture mismatch");
    Network& src = const_cast<Network&>(source); // blocks are read only
    auto src_blocks = src.param_blocks();
    auto dst_blocks = destination.param_blocks();
    for (std::size_t i = 0; i < src_blocks.size(); ++i)
        *dst_blocks[i].values = *src_blocks[i].values;
}

void AdamOptimizer::step(Network& net, Gradients& grads) {
    if (options_.clip_global_norm > 0.0) {
        const double norm = grads.global_norm();
        if (norm > options_.clip_global_norm)
            grads.scale(options_.clip_global_norm / norm);
    }
    auto blocks = net.param_blocks();
    if (blocks.size() != grads.blocks.size())
        throw std::invalid_argument("gradient layout does not match network");
    if (m_.empty()) {
        for (const auto& block : blocks) {
            m_.emplace_back(block.values->size(), 0.0);
            v_.emplace_back(block.values->size(), 0.0);
        }
    }
    ++step_count_;
    const double b1 = options_.beta1;
    const double b2 = options_.beta2;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        Vec& p = *blocks[k].values;
        const Vec& g = grads.blocks[k];
        Vec& m = m_[k];
        Vec& v = v_[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            p[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
        }
    }
}

} // namespace dispatchrl
