#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "dispatchrl/network.hpp"

using namespace dispatchrl;

namespace {

std::map<std::string, Vec*> blocks_by_name(Network& net) {
    std::map<std::string, Vec*> blocks;
    for (const ParamBlock& block : net.param_blocks())
        blocks[block.name] = block.values;
    return blocks;
}

Vec random_vec(std::mt19937_64& rng, int n, double scale = 1.0) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    Vec v(n);
    for (double& x : v)
        x = dist(rng);
    return v;
}

/// Loss replicated independently of backward(): weighted MSE on the taken
/// actions with frozen noise.
double loss_at(Network& net, const std::vector<Vec>& inputs, const std::vector<int>& actions,
               const Vec& targets, const Vec& weights) {
    double loss = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Vec q = net.forward(inputs[i], NoiseMode::Frozen);
        const double td = q[actions[i]] - targets[i];
        loss += weights[i] * td * td;
    }
    return loss / static_cast<double>(inputs.size());
}

} // namespace

TEST_CASE("dueling head: V=1, A=[1,2,3] gives Q=[0,1,2]") {
    NetworkConfig config;
    config.input_dim = 2;
    config.n_actions = 3;
    config.hidden = {};
    config.dueling = true;
    Network net(config, 1);

    auto blocks = blocks_by_name(net);
    *blocks["val.w"] = {0.0, 0.0};
    *blocks["val.b"] = {1.0};
    *blocks["adv.w"] = Vec(6, 0.0);
    *blocks["adv.b"] = {1.0, 2.0, 3.0};

    const Vec q = net.forward({0.3, -0.7});
    REQUIRE(q.size() == 3);
    CHECK(q[0] == doctest::Approx(0.0));
    CHECK(q[1] == doctest::Approx(1.0));
    CHECK(q[2] == doctest::Approx(2.0));

    // Adding a constant to every advantage leaves Q unchanged.
    *blocks["adv.b"] = {1.0 + 7.5, 2.0 + 7.5, 3.0 + 7.5};
    const Vec q_shifted = net.forward({0.3, -0.7});
    for (int a = 0; a < 3; ++a)
        CHECK(q_shifted[a] == doctest::Approx(q[a]).epsilon(1e-12));
}

TEST_CASE("dueling identifiability: mean over actions of Q - V is zero") {
    std::mt19937_64 rng(7);
    for (int draw = 0; draw < 1000; ++draw) {
        NetworkConfig config;
        config.input_dim = 4;
        config.n_actions = 5;
        config.hidden = {6};
        config.dueling = true;
        config.noisy = (draw % 2) == 1;
        Network net(config, rng());
        if (config.noisy)
            net.resample_noise();

        const Vec x = random_vec(rng, 4, 2.0);
        const DuelingParts parts = net.forward_parts(x, NoiseMode::Frozen);
        double mean_q = 0.0;
        for (double q : parts.q)
            mean_q += q;
        mean_q /= parts.q.size();
        double scale = std::fabs(parts.value);
        for (double q : parts.q)
            scale = std::max(scale, std::fabs(q));
        CHECK(std::fabs(mean_q - parts.value) <= 1e-12 * std::max(1.0, scale));
    }
}

TEST_CASE("noisy layers with zero sigma equal the plain network exactly") {
    NetworkConfig noisy_config;
    noisy_config.input_dim = 5;
    noisy_config.n_actions = 4;
    noisy_config.hidden = {8, 6};
    noisy_config.dueling = true;
    noisy_config.noisy = true;
    Network noisy(noisy_config, 11);

    NetworkConfig plain_config = noisy_config;
    plain_config.noisy = false;
    Network plain(plain_config, 99);

    // Same means, zero noise scales.
    auto noisy_blocks = blocks_by_name(noisy);
    auto plain_blocks = blocks_by_name(plain);
    for (auto& [name, values] : plain_blocks)
        *values = *noisy_blocks.at(name);
    for (auto& [name, values] : noisy_blocks)
        if (name.find("sigma") != std::string::npos)
            values->assign(values->size(), 0.0);

    std::mt19937_64 rng(5);
    for (int i = 0; i < 1000; ++i) {
        const Vec x = random_vec(rng, 5, 3.0);
        const Vec a = noisy.forward(x, NoiseMode::Resample);
        const Vec b = plain.forward(x, NoiseMode::Frozen);
        REQUIRE(a == b);
    }
}

TEST_CASE("zero noise mode ignores the current draw") {
    NetworkConfig config;
    config.input_dim = 3;
    config.n_actions = 2;
    config.hidden = {4};
    config.noisy = true;
    Network net(config, 3);

    const Vec x = {0.5, -1.0, 0.25};
    const Vec base = net.forward(x, NoiseMode::Zero);
    net.resample_noise();
    CHECK(net.forward(x, NoiseMode::Zero) == base);
    CHECK(net.forward(x, NoiseMode::Frozen) != base); // noise actually applied
}

TEST_CASE("noise resampling is deterministic under the construction seed") {
    NetworkConfig config;
    config.input_dim = 3;
    config.n_actions = 3;
    config.hidden = {4};
    config.noisy = true;
    Network a(config, 42);
    Network b(config, 42);
    const Vec x = {1.0, 0.0, -1.0};
    for (int i = 0; i < 5; ++i) {
        CHECK(a.forward(x, NoiseMode::Resample) == b.forward(x, NoiseMode::Resample));
    }
}

TEST_CASE("output variance under resampling grows with the noise scales") {
    NetworkConfig config;
    config.input_dim = 4;
    config.n_actions = 3;
    config.hidden = {};
    config.noisy = true;
    Network net(config, 9);
    const Vec x = {1.0, -0.5, 0.25, 0.8};

    auto variance_with_sigma = [&](double sigma) {
        auto blocks = blocks_by_name(net);
        for (auto& [name, values] : blocks)
            if (name.find("sigma") != std::string::npos)
                values->assign(values->size(), sigma);
        double sum = 0.0, sum_sq = 0.0;
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            const double y = net.forward(x, NoiseMode::Resample)[0];
            sum += y;
            sum_sq += y * y;
        }
        const double mean = sum / n;
        return sum_sq / n - mean * mean;
    };

    const double var_small = variance_with_sigma(0.05);
    const double var_large = variance_with_sigma(0.5);
    CHECK(var_large > 10.0 * var_small);
}

TEST_CASE("hand-computed gradient for a single linear layer") {
    NetworkConfig config;
    config.input_dim = 2;
    config.n_actions = 2;
    config.hidden = {};
    Network net(config, 1);
    auto blocks = blocks_by_name(net);
    *blocks["out.w"] = {0.5, -0.25, 0.1, 0.2};
    *blocks["out.b"] = {0.1, -0.1};

    // One sample, action 0, target 1: q0 = 0.5*1 - 0.25*2 + 0.1 = 0.1,
    // td = -0.9, dW0j = 2*td*xj, db0 = 2*td, action-1 rows untouched.
    double loss = 0.0;
    Vec td;
    Gradients grads = net.backward({{1.0, 2.0}}, {0}, {1.0}, {1.0}, NoiseMode::Frozen,
                                   &loss, &td);
    CHECK(loss == doctest::Approx(0.81));
    CHECK(td[0] == doctest::Approx(-0.9));
    const Vec& dw = grads.blocks[0];
    const Vec& db = grads.blocks[1];
    CHECK(dw[0] == doctest::Approx(-1.8));
    CHECK(dw[1] == doctest::Approx(-3.6));
    CHECK(dw[2] == 0.0);
    CHECK(dw[3] == 0.0);
    CHECK(db[0] == doctest::Approx(-1.8));
    CHECK(db[1] == 0.0);
}

TEST_CASE("zero sample weights give zero gradients") {
    NetworkConfig config;
    config.input_dim = 3;
    config.n_actions = 4;
    config.hidden = {5};
    config.dueling = true;
    Network net(config, 8);
    std::mt19937_64 rng(3);
    const std::vector<Vec> inputs = {random_vec(rng, 3), random_vec(rng, 3)};
    Gradients grads =
        net.backward(inputs, {1, 2}, {0.5, -0.5}, {0.0, 0.0}, NoiseMode::Frozen);
    for (const Vec& block : grads.blocks)
        for (double g : block)
            CHECK(g == 0.0);
}

TEST_CASE("analytic gradients match central finite differences") {
    std::mt19937_64 rng(2025);
    int configs_checked = 0;
    const double h = 1e-5;

    for (int trial = 0; trial < 24; ++trial) {
        NetworkConfig config;
        config.input_dim = 2 + static_cast<int>(rng() % 4);
        config.n_actions = 2 + static_cast<int>(rng() % 3);
        switch (trial % 3) {
        case 0: config.hidden = {}; break;
        case 1: config.hidden = {4}; break;
        default: config.hidden = {5, 3}; break;
        }
        config.dueling = (trial / 3) % 2 == 1;
        config.noisy = (trial / 6) % 2 == 1;
        Network net(config, rng());
        net.resample_noise(); // freeze one draw for the whole check

        const int batch = 1 + static_cast<int>(rng() % 4);
        std::vector<Vec> inputs;
        std::vector<int> actions;
        Vec targets, weights;
        for (int i = 0; i < batch; ++i) {
            inputs.push_back(random_vec(rng, config.input_dim));
            actions.push_back(static_cast<int>(rng() % config.n_actions));
            targets.push_back(random_vec(rng, 1)[0]);
            weights.push_back(0.25 + 0.75 * std::fabs(random_vec(rng, 1)[0]));
        }

        const Gradients analytic =
            net.backward(inputs, actions, targets, weights, NoiseMode::Frozen);

        auto blocks = net.param_blocks();
        for (std::size_t k = 0; k < blocks.size(); ++k) {
            Vec& params = *blocks[k].values;
            for (std::size_t i = 0; i < params.size(); ++i) {
                const double original = params[i];
                params[i] = original + h;
                const double up = loss_at(net, inputs, actions, targets, weights);
                params[i] = original - h;
                const double down = loss_at(net, inputs, actions, targets, weights);
                params[i] = original;
                const double fd = (up - down) / (2.0 * h);
                const double a = analytic.blocks[k][i];
                const double rel =
                    std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-3});
                if (rel >= 1e-4) {
                    CAPTURE(trial);
                    CAPTURE(blocks[k].name);
                    CAPTURE(i);
                    CAPTURE(a);
                    CAPTURE(fd);
                }
                REQUIRE(rel < 1e-4);
            }
        }
        ++configs_checked;
    }
    CHECK(configs_checked >= 20);
}

TEST_CASE("adam step matches the hand-evaluated recurrence") {
    NetworkConfig config;
    config.input_dim = 1;
    config.n_actions = 1;
    config.hidden = {};
    Network net(config, 1);
    auto blocks = blocks_by_name(net);
    *blocks["out.w"] = {1.0};
    *blocks["out.b"] = {0.0};

    Gradients grads = net.zero_gradients();
    grads.blocks[0][0] = 0.5; // dL/dw
    grads.blocks[1][0] = 0.0;

    AdamOptimizer::Options options; // defaults: lr 1e-3, betas 0.9/0.999, eps 1e-8
    AdamOptimizer adam(options);
    adam.step(net, grads);

    // Hand evaluation of one Adam step from zero moments.
    const double m = 0.1 * 0.5;
    const double v = 0.001 * 0.25;
    const double m_hat = m / (1.0 - 0.9);
    const double v_hat = v / (1.0 - 0.999);
    const double expected = 1.0 - 0.001 * m_hat / (std::sqrt(v_hat) + 1e-8);
    CHECK((*blocks_by_name(net)["out.w"])[0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("adam leaves parameters alone for zero gradients or zero learning rate") {
    NetworkConfig config;
    config.input_dim = 2;
    config.n_actions = 2;
    config.hidden = {3};
    Network net(config, 4);
    const std::uint64_t hash_before = net.parameter_hash();

    AdamOptimizer adam({});
    Gradients zeros = net.zero_gradients();
    adam.step(net, zeros);
    CHECK(net.parameter_hash() == hash_before);

    AdamOptimizer::Options frozen;
    frozen.learning_rate = 0.0;
    AdamOptimizer frozen_adam(frozen);
    Gradients grads = net.zero_gradients();
    for (Vec& block : grads.blocks)
        for (double& g : block)
            g = 1.0;
    frozen_adam.step(net, grads);
    CHECK(net.parameter_hash() == hash_before);
}

TEST_CASE("copy_parameters is a deep copy between identical architectures") {
    NetworkConfig config;
    config.input_dim = 4;
    config.n_actions = 3;
    config.hidden = {6};
    config.noisy = true;
    Network source(config, 21);
    Network destination(config, 22);
    copy_parameters(source, destination);

    std::mt19937_64 rng(17);
    for (int i = 0; i < 50; ++i) {
        const Vec x = random_vec(rng, 4, 2.0);
        CHECK(source.forward(x, NoiseMode::Zero) == destination.forward(x, NoiseMode::Zero));
    }

    // Updating the source afterwards leaves the destination unchanged.
    const std::uint64_t dest_hash = destination.parameter_hash();
    AdamOptimizer adam({});
    Gradients grads = source.zero_gradients();
    for (Vec& block : grads.blocks)
        for (double& g : block)
            g = 0.5;
    adam.step(source, grads);
    CHECK(destination.parameter_hash() == dest_hash);
    CHECK(source.parameter_hash() != dest_hash);

    NetworkConfig other = config;
    other.hidden = {7};
    Network mismatched(other, 1);
    CHECK_THROWS_AS(copy_parameters(source, mismatched), std::invalid_argument);
}

TEST_CASE("checkpoints reload bit-identically in zero-noise mode") {
    for (const bool noisy : {false, true}) {
        NetworkConfig config;
        config.input_dim = 6;
        config.n_actions = 4;
        config.hidden = {9, 5};
        config.dueling = true;
        config.noisy = noisy;
        Network net(config, 77);

        std::stringstream buffer;
        net.save(buffer);
        Network reloaded = Network::load(buffer);

        std::mt19937_64 rng(31);
        for (int i = 0; i < 100; ++i) {
            const Vec x = random_vec(rng, 6, 5.0);
            REQUIRE(net.forward(x, NoiseMode::Zero) == reloaded.forward(x, NoiseMode::Zero));
        }
        CHECK(net.parameter_hash() == reloaded.parameter_hash());
    }
}

TEST_CASE("500 adam steps cut the loss on a fixed regression batch by 90%") {
    NetworkConfig config;
    config.input_dim = 6;
    config.n_actions = 4;
    config.hidden = {16};
    Network net(config, 2);

    std::mt19937_64 rng(12);
    const int batch = 32;
    std::vector<Vec> inputs;
    std::vector<int> actions;
    Vec targets, weights;
    for (int i = 0; i < batch; ++i) {
        inputs.push_back(random_vec(rng, 6));
        actions.push_back(static_cast<int>(rng() % 4));
        targets.push_back(random_vec(rng, 1)[0]);
        weights.push_back(1.0);
    }

    AdamOptimizer adam({});
    double first_loss = 0.0;
    double last_loss = 0.0;
    for (int step = 0; step < 500; ++step) {
        Gradients grads = net.backward(inputs, actions, targets, weights,
                                       NoiseMode::Frozen, &last_loss);
        if (step == 0)
            first_loss = last_loss;
        adam.step(net, grads);
    }
    CHECK(last_loss <= 0.1 * first_loss);
}

TEST_CASE("dimension and batch errors are rejected") {
    NetworkConfig config;
    config.input_dim = 3;
    config.n_actions = 2;
    Network net(config, 1);
    CHECK_THROWS_AS(net.forward({1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(net.backward({}, {}, {}, {}), std::invalid_argument);
    CHECK_THROWS_AS(net.backward({{1.0, 2.0, 3.0}}, {0, 1}, {0.0}, {1.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(net.forward_parts({1.0, 2.0, 3.0}), std::logic_error);
}
