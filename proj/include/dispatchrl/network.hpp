#pragma once

// Feed-forward value-network engine in double precision: dense layers,
// optional factorized-Gaussian noisy layers, optional dueling head, exact
// backpropagation of a weighted MSE on the taken actions, and Adam.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace dispatchrl {

using Vec = std::vector<double>;

/// How noisy layers treat their noise during a forward pass.
enum class NoiseMode {
    Frozen,   // use the current draw
    Resample, // draw fresh noise first
    Zero,     // ignore noise entirely (deterministic)
};

struct NetworkConfig {
    int input_dim = 0;
    int n_actions = 0;
    std::vector<int> hidden = {128, 128}; // may be empty (single linear map)
    bool dueling = false;
    bool noisy = false;
    double sigma_init = 0.5; // noise scale init, divided by sqrt(fan-in)

    bool operator==(const NetworkConfig&) const = default;
};

/// One parameter array with a stable name, e.g. "h0.w" or "adv.b_sigma".
struct ParamBlock {
    std::string name;
    Vec* values;
};

/// Per-block gradient arrays, aligned with Network::param_blocks() order.
struct Gradients {
    std::vector<Vec> blocks;

    double global_norm() const;
    void scale(double factor);
};

/// Value and advantage components of a dueling forward pass.
struct DuelingParts {
    double value = 0.0;
    Vec advantages;
    Vec q;
};

class Network {
public:
    Network(const NetworkConfig& config, std::uint64_t seed);

    const NetworkConfig& config() const { return config_; }
    int input_dim() const { return config_.input_dim; }
    int output_dim() const { return config_.n_actions; }

    /// Q values for a single observation.
    Vec forward(const Vec& input, NoiseMode mode = NoiseMode::Frozen);

    /// Q values for a batch; one noise draw covers the whole batch.
    std::vector<Vec> forward_batch(const std::vector<Vec>& inputs,
                                   NoiseMode mode = NoiseMode::Frozen);

    /// Dueling decomposition of a single forward pass (dueling nets only).
    DuelingParts forward_parts(const Vec& input, NoiseMode mode = NoiseMode::Frozen);

    /// Exact gradients of  (1/B) * sum_i w_i * (Q(x_i, a_i) - y_i)^2.
    /// Optionally reports the loss and per-sample TD errors Q - y.
    Gradients backward(const std::vector<Vec>& inputs, const std::vector<int>& actions,
                       const Vec& targets, const Vec& weights,
                       NoiseMode mode = NoiseMode::Frozen, double* loss_out = nullptr,
                       Vec* td_errors_out = nullptr);

    /// Fresh factorized noise for every noisy layer; no-op otherwise.
    void resample_noise();

    Gradients zero_gradients() const;

    /// Mutable views of all parameter arrays, in a fixed order.
    std::vector<ParamBlock> param_blocks();

    /// 64-bit FNV-1a over the raw parameter bytes.
    std::uint64_t parameter_hash() const;

    void save(std::ostream& out) const;
    static Network load(std::istream& in);

private:
    struct Layer {
        int in = 0;
        int out = 0;
        bool noisy = false;
        bool relu = false;   // apply ReLU to the output
        std::string name;
        Vec w;               // out x in, row-major (the mean weights)
        Vec b;
        Vec w_sigma;         // only when noisy
        Vec b_sigma;
        Vec noise_in;        // f(eps_in), length in
        Vec noise_out;       // f(eps_out), length out
    };

    struct LayerCache {
        std::vector<Vec> inputs;  // batch of layer inputs
        std::vector<Vec> pre;     // batch of pre-activation outputs
    };

    void init_layer(Layer& layer, std::mt19937_64& rng);
    void layer_forward_pre(const Layer& layer, const Vec& in, Vec& out, NoiseMode mode) const;
    void layer_forward(const Layer& layer, const Vec& in, Vec& out, NoiseMode mode) const;
    void resample_layer_noise(Layer& layer);
    // Backprop through one layer; returns gradient w.r.t. its input.
    void layer_backward(const Layer& layer, const LayerCache& cache,
                        const std::vector<Vec>& grad_out, std::vector<Vec>& grad_in,
                        Gradients& grads, int block_offset, NoiseMode mode) const;
    double effective_bias(const Layer& layer, int row, NoiseMode mode) const;

    NetworkConfig config_;
    std::vector<Layer> hidden_layers_;
    Layer out_layer_;   // plain head
    Layer value_layer_; // dueling head
    Layer adv_layer_;
    std::mt19937_64 noise_rng_;

    std::vector<Layer*> all_layers();
    std::vector<const Layer*> all_layers() const;
};

/// Destination gets a bit-identical copy of the source parameters (noise
/// draws are not copied). Architectures must match.
void copy_parameters(const Network& source, Network& destination);

/// Standard Adam with bias correction and an optional global-norm clip.
class AdamOptimizer {
public:
    struct Options {
        double learning_rate = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-8;
        double clip_global_norm = 0.0; // 0 disables clipping
    };

    explicit AdamOptimizer(const Options& options) : options_(options) {}

    void step(Network& net, Gradients& grads);

    long step_count() const { return step_count_; }
    const Options& options() const { return options_; }

private:
    Options options_;
    std::vector<Vec> m_;
    std::vector<Vec> v_;
    long step_count_ = 0;
};

} // namespace dispatchrl
