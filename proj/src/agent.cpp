#include "dispatchrl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace dispatchrl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t member) {
    return splitmix64(base ^ splitmix64(stream * 0x100000001b3ULL + member));
}

const std::map<Variant, std::string>& variant_names() {
    static const std::map<Variant, std::string> names = {
        {Variant::Random, "random"},
        {Variant::Ddqn, "ddqn"},
        {Variant::D3qn, "3dqn"},
        {Variant::NoisyD3qn, "noisy_3dqn"},
        {Variant::PrD3qn, "pr_3dqn"},
        {Variant::PrNoisyD3qn, "pr_noisy_3dqn"},
        {Variant::BaggingDdqn, "bagging_ddqn"},
        {Variant::BaggingD3qn, "bagging_3dqn"},
        {Variant::BaggingNoisyD3qn, "bagging_noisy_3dqn"},
        {Variant::BaggingPrNoisyD3qn, "bagging_pr_noisy_3dqn"},
    };
    return names;
}

std::string ensemble_mode_name(EnsembleActionMode mode) {
    return mode == EnsembleActionMode::RandomMember ? "random_member" : "majority_vote";
}

EnsembleActionMode ensemble_mode_from_name(const std::string& name) {
    if (name == "random_member")
        return EnsembleActionMode::RandomMember;
    if (name == "majority_vote")
        return EnsembleActionMode::MajorityVote;
    throw std::invalid_argument("unknown ensemble action mode: " + name);
}

nlohmann::json config_to_json(const AgentConfig& config) {
    return {
        {"variant", variant_name(config.variant)},
        {"input_dim", config.input_dim},
        {"n_actions", config.n_actions},
        {"hidden", config.hidden},
        {"n_ensemble", config.n_ensemble},
        {"target_sync_interval_steps", config.target_sync_interval_steps},
        {"gamma", config.gamma},
        {"warmup_episodes", config.exploration.warmup_episodes},
        {"epsilon_start", config.exploration.epsilon_start},
        {"epsilon_decay_per_episode", config.exploration.epsilon_decay_per_episode},
        {"epsilon_min", config.exploration.epsilon_min},
        {"uses_epsilon", config.exploration.uses_epsilon},
        {"ensemble_action_mode", ensemble_mode_name(config.ensemble_action_mode)},
        {"reward_scale", config.reward_scale},
        {"learning_rate", config.learning_rate},
        {"batch_size", config.batch_size},
        {"memory_capacity", config.memory_capacity},
        {"per_alpha", config.per_alpha},
        {"per_beta_start", config.per_beta_start},
        {"per_beta_end", config.per_beta_end},
        {"per_beta_anneal_steps", config.per_beta_anneal_steps},
        {"grad_clip_norm", config.grad_clip_norm},
        {"sigma_init", config.sigma_init},
        {"seed", config.seed},
        {"observation_scale", config.observation_scale},
    };
}

AgentConfig config_from_json(const nlohmann::json& j) {
    AgentConfig config;
    config.variant = variant_from_name(j.at("variant").get<std::string>());
    config.input_dim = j.at("input_dim").get<int>();
    config.n_actions = j.at("n_actions").get<int>();
    config.hidden = j.at("hidden").get<std::vector<int>>();
    config.n_ensemble = j.at("n_ensemble").get<int>();
    config.target_sync_interval_steps = j.at("target_sync_interval_steps").get<int>();
    config.gamma = j.at("gamma").get<double>();
    config.exploration.warmup_episodes = j.at("warmup_episodes").get<int>();
    config.exploration.epsilon_start = j.at("epsilon_start").get<double>();
    config.exploration.epsilon_decay_per_episode =
        j.at("epsilon_decay_per_episode").get<double>();
    config.exploration.epsilon_min = j.at("epsilon_min").get<double>();
    config.exploration.uses_epsilon = j.at("uses_epsilon").get<bool>();
    config.ensemble_action_mode =
        ensemble_mode_from_name(j.at("ensemble_action_mode").get<std::string>());
    config.reward_scale = j.at("reward_scale").get<double>();
    config.learning_rate = j.at("learning_rate").get<double>();
    config.batch_size = j.at("batch_size").get<std::size_t>();
    config.memory_capacity = j.at("memory_capacity").get<std::size_t>();
    config.per_alpha = j.at("per_alpha").get<double>();
    config.per_beta_start = j.at("per_beta_start").get<double>();
    config.per_beta_end = j.at("per_beta_end").get<double>();
    config.per_beta_anneal_steps = j.at("per_beta_anneal_steps").get<long>();
    config.grad_clip_norm = j.at("grad_clip_norm").get<double>();
    config.sigma_init = j.at("sigma_init").get<double>();
    config.seed = j.at("seed").get<std::uint64_t>();
    config.observation_scale = j.at("observation_scale").get<std::vector<double>>();
    return config;
}

} // namespace

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> variants = {
        Variant::Random,        Variant::Ddqn,
        Variant::D3qn,          Variant::NoisyD3qn,
        Variant::PrD3qn,        Variant::PrNoisyD3qn,
        Variant::BaggingDdqn,   Variant::BaggingD3qn,
        Variant::BaggingNoisyD3qn, Variant::BaggingPrNoisyD3qn,
    };
    return variants;
}

std::string variant_name(Variant variant) {
    return variant_names().at(variant);
}

Variant variant_from_name(const std::string& name) {
    for (const auto& [variant, label] : variant_names())
        if (label == name)
            return variant;
    throw std::invalid_argument("unknown agent variant: " + name);
}

bool variant_uses_dueling(Variant v) {
    switch (v) {
    case Variant::D3qn:
    case Variant::NoisyD3qn:
    case Variant::PrD3qn:
    case Variant::PrNoisyD3qn:
    case Variant::BaggingD3qn:
    case Variant::BaggingNoisyD3qn:
    case Variant::BaggingPrNoisyD3qn:
        return true;
    default:
        return false;
    }
}

bool variant_uses_noisy(Variant v) {
    switch (v) {
    case Variant::NoisyD3qn:
    case Variant::PrNoisyD3qn:
    case Variant::BaggingNoisyD3qn:
    case Variant::BaggingPrNoisyD3qn:
        return true;
    default:
        return false;
    }
}

bool variant_uses_prioritized_replay(Variant v) {
    switch (v) {
    case Variant::PrD3qn:
    case Variant::PrNoisyD3qn:
    case Variant::BaggingPrNoisyD3qn:
        return true;
    default:
        return false;
    }
}

bool variant_uses_bagging(Variant v) {
    switch (v) {
    case Variant::BaggingDdqn:
    case Variant::BaggingD3qn:
    case Variant::BaggingNoisyD3qn:
    case Variant::BaggingPrNoisyD3qn:
        return true;
    default:
        return false;
    }
}

int variant_ensemble_size(Variant v) {
    return variant_uses_bagging(v) ? 5 : 1;
}

bool variant_uses_epsilon(Variant v) {
    if (v == Variant::Random)
        return false;
    return !variant_uses_noisy(v) && !variant_uses_bagging(v);
}

double ExplorationSchedule::epsilon_for_episode(int episode) const {
    if (episode <= warmup_episodes)
        return 1.0;
    if (!uses_epsilon)
        return 0.0;
    const double decayed =
        epsilon_start * std::pow(epsilon_decay_per_episode, episode - warmup_episodes);
    return std::max(epsilon_min, decayed);
}

void AgentConfig::validate() const {
    if (n_actions < 1)
        throw std::invalid_argument("agent needs at least one action");
    if (variant != Variant::Random) {
        if (input_dim < 1)
            throw std::invalid_argument("agent input_dim must be positive");
        if (n_ensemble != variant_ensemble_size(variant))
            throw std::invalid_argument("bagging variants use exactly 5 networks, others 1");
        if (!observation_scale.empty() &&
            static_cast<int>(observation_scale.size()) != input_dim)
            throw std::invalid_argument("observation_scale length must match input_dim");
        if (gamma < 0.0 || gamma > 1.0)
            throw std::invalid_argument("gamma must lie in [0, 1]");
        if (reward_scale <= 0.0)
            throw std::invalid_argument("reward_scale must be positive");
        if (batch_size < 1 || memory_capacity < 1)
            throw std::invalid_argument("batch size and memory capacity must be positive");
        if (target_sync_interval_steps < 1)
            throw std::invalid_argument("target_sync_interval_steps must be positive");
    }
}

bool Agent::save_best(int episode, double episode_total_reward,
                      const std::filesystem::path& directory) {
    if (best_total_reward_ && episode_total_reward <= *best_total_reward_)
        return false;
    best_total_reward_ = episode_total_reward;
    best_episode_ = episode;
    save(directory);
    return true;
}

RandomAgent::RandomAgent(const AgentConfig& config)
    : config_(config), rng_(derive_seed(config.seed, 7, 0)) {
    config_.validate();
    if (config_.variant != Variant::Random)
        throw std::invalid_argument("RandomAgent requires the random variant");
}

int RandomAgent::select_action(const Observation&, ActionMode) {
    std::uniform_int_distribution<int> pick(0, config_.n_actions - 1);
    return pick(rng_);
}

void RandomAgent::save(const std::filesystem::path& directory) const {
    std::filesystem::create_directories(directory);
    nlohmann::json manifest;
    manifest["format"] = "dispatchrl-agent";
    manifest["version"] = 1;
    manifest["config"] = config_to_json(config_);
    manifest["best_total_reward"] =
        best_total_reward_ ? nlohmann::json(*best_total_reward_) : nlohmann::json();
    manifest["best_episode"] = best_episode_ ? nlohmann::json(*best_episode_) : nlohmann::json();
    std::ofstream out(directory / "manifest.json");
    if (!out)
        throw std::runtime_error("cannot write checkpoint manifest in " + directory.string());
    out << manifest.dump(2) << "\n";
}

int argmax_action(const Vec& q) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(q.size()); ++i)
        if (q[i] > q[best])
            best = i;
    return best;
}

int majority_vote(const std::vector<int>& votes) {
    if (votes.empty())
        throw std::invalid_argument("majority_vote needs at least one vote");
    std::map<int, int> counts;
    for (int v : votes)
        ++counts[v];
    int best_action = votes[0];
    int best_count = 0;
    for (const auto& [action, count] : counts) {
        if (count > best_count) { // map iteration is ascending: ties keep the lowest
            best_action = action;
            best_count = count;
        }
    }
    return best_action;
}

std::vector<double> compute_td_targets(Network& policy, Network& target,
                                       const std::vector<Transition>& batch, double gamma,
                                       double reward_scale,
                                       const std::vector<double>& observation_scale,
                                       NoiseMode noise_mode) {
    if (batch.empty())
        throw std::invalid_argument("compute_td_targets needs a non-empty batch");
    auto normalise = [&observation_scale](const Observation& obs) {
        Vec x = obs;
        if (!observation_scale.empty())
            for (std::size_t i = 0; i < x.size(); ++i)
                x[i] *= observation_scale[i];
        return x;
    };

    std::vector<Vec> next_inputs;
    next_inputs.reserve(batch.size());
    for (const Transition& t : batch)
        next_inputs.push_back(normalise(t.next_observation));
    const std::vector<Vec> q_policy_next = policy.forward_batch(next_inputs, noise_mode);
    const std::vector<Vec> q_target_next = target.forward_batch(next_inputs, noise_mode);

    std::vector<double> targets(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Transition& t = batch[i];
        double y = t.reward / reward_scale;
        const bool bootstrap = !t.terminal || t.truncated;
        if (bootstrap) {
            const int best_next = argmax_action(q_policy_next[i]);
            y += gamma * q_target_next[i][best_next];
        }
        targets[i] = y;
    }
    return targets;
}

DqnAgent::DqnAgent(const AgentConfig& config)
    : config_(config),
      memory_({config.memory_capacity, variant_uses_prioritized_replay(config.variant),
               config.per_alpha, 1e-5}),
      explore_rng_(derive_seed(config.seed, 11, 0)) {
    config_.validate();
    if (config_.variant == Variant::Random)
        throw std::invalid_argument("DqnAgent cannot implement the random variant");
    config_.exploration.uses_epsilon = variant_uses_epsilon(config_.variant);

    NetworkConfig net_config;
    net_config.input_dim = config_.input_dim;
    net_config.n_actions = config_.n_actions;
    net_config.hidden = config_.hidden;
    net_config.dueling = variant_uses_dueling(config_.variant);
    net_config.noisy = variant_uses_noisy(config_.variant);
    net_config.sigma_init = config_.sigma_init;

    AdamOptimizer::Options adam;
    adam.learning_rate = config_.learning_rate;
    adam.clip_global_norm = config_.grad_clip_norm;

    members_.reserve(config_.n_ensemble);
    for (int k = 0; k < config_.n_ensemble; ++k) {
        Member member{Network(net_config, derive_seed(config_.seed, 1, k)),
                      Network(net_config, derive_seed(config_.seed, 2, k)),
                      AdamOptimizer(adam),
                      std::mt19937_64(derive_seed(config_.seed, 3, k))};
        copy_parameters(member.policy, member.target);
        members_.push_back(std::move(member));
    }
    epsilon_ = config_.exploration.epsilon_for_episode(1);
    warmup_ = config_.exploration.warmup_episodes >= 1;
}

Vec DqnAgent::normalise(const Observation& observation) const {
    Vec x = observation;
    if (!config_.observation_scale.empty())
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] *= config_.observation_scale[i];
    return x;
}

int DqnAgent::greedy_action(const Observation& observation, NoiseMode mode) {
    const Vec input = normalise(observation);
    if (members_.size() == 1)
        return argmax_action(members_[0].policy.forward(input, mode));
    std::vector<int> votes;
    votes.reserve(members_.size());
    for (Member& member : members_)
        votes.push_back(argmax_action(member.policy.forward(input, mode)));
    return majority_vote(votes);
}

int DqnAgent::select_action(const Observation& observation, ActionMode mode) {
    if (mode == ActionMode::Greedy)
        return greedy_action(observation, NoiseMode::Zero);

    std::uniform_int_distribution<int> pick(0, config_.n_actions - 1);
    if (warmup_)
        return pick(explore_rng_);
    if (config_.exploration.uses_epsilon && epsilon_ > 0.0) {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        if (unit(explore_rng_) < epsilon_)
            return pick(explore_rng_);
    }

    const NoiseMode noise =
        variant_uses_noisy(config_.variant) ? NoiseMode::Resample : NoiseMode::Frozen;
    if (members_.size() > 1 &&
        config_.ensemble_action_mode == EnsembleActionMode::RandomMember) {
        std::uniform_int_distribution<int> pick_member(0,
                                                       static_cast<int>(members_.size()) - 1);
        Member& member = members_[pick_member(explore_rng_)];
        return argmax_action(member.policy.forward(normalise(observation), noise));
    }
    return greedy_action(observation, noise);
}

void DqnAgent::observe(const Transition& transition) {
    memory_.push(transition);
}

double DqnAgent::current_beta() const {
    if (!memory_.prioritized())
        return 0.0;
    const double frac = config_.per_beta_anneal_steps <= 0
                            ? 1.0
                            : std::min(1.0, static_cast<double>(learn_steps_) /
                                                static_cast<double>(config_.per_beta_anneal_steps));
    return config_.per_beta_start + frac * (config_.per_beta_end - config_.per_beta_start);
}

LearnDiagnostics DqnAgent::learn() {
    LearnDiagnostics diag;
    if (memory_.size() < config_.batch_size)
        return diag;
    ++learn_steps_;
    const bool noisy = variant_uses_noisy(config_.variant);
    const double beta = current_beta();

    double loss_sum = 0.0;
    double abs_td_sum = 0.0;
    std::size_t td_count = 0;
    for (Member& member : members_) {
        std::vector<Transition> batch;
        std::vector<double> weights;
        std::vector<std::uint64_t> ids;
        if (memory_.prioritized()) {
            PrioritizedBatch pb =
                memory_.sample_prioritized(config_.batch_size, beta, member.sample_rng);
            batch = std::move(pb.transitions);
            weights = std::move(pb.weights);
            ids = std::move(pb.ids);
        } else {
            batch = memory_.sample_bootstrap(config_.batch_size, member.sample_rng);
            weights.assign(batch.size(), 1.0);
        }

        const std::vector<double> targets = compute_td_targets(
            member.policy, member.target, batch, config_.gamma, config_.reward_scale,
            config_.observation_scale, noisy ? NoiseMode::Resample : NoiseMode::Zero);

        std::vector<Vec> inputs;
        std::vector<int> actions;
        inputs.reserve(batch.size());
        actions.reserve(batch.size());
        for (const Transition& t : batch) {
            inputs.push_back(normalise(t.observation));
            actions.push_back(t.action);
        }

        double loss = 0.0;
        Vec td_errors;
        Gradients grads =
            member.policy.backward(inputs, actions, targets, weights,
                                   noisy ? NoiseMode::Resample : NoiseMode::Frozen, &loss,
                                   &td_errors);
        member.optimizer.step(member.policy, grads);

        if (memory_.prioritized())
            memory_.update_priorities(ids, td_errors);

        loss_sum += loss;
        for (double td : td_errors)
            abs_td_sum += std::fabs(td);
        td_count += td_errors.size();
    }

    if (learn_steps_ % config_.target_sync_interval_steps == 0)
        sync_targets();

    diag.performed = true;
    diag.loss = loss_sum / static_cast<double>(members_.size());
    diag.mean_abs_td_error = td_count == 0 ? 0.0 : abs_td_sum / static_cast<double>(td_count);
    return diag;
}

void DqnAgent::sync_targets() {
    for (Member& member : members_)
        copy_parameters(member.policy, member.target);
}

void DqnAgent::begin_episode(int episode) {
    episode_ = episode;
    warmup_ = episode <= config_.exploration.warmup_episodes;
    epsilon_ = config_.exploration.epsilon_for_episode(episode);
}

double DqnAgent::current_epsilon() const {
    return warmup_ ? 1.0 : epsilon_;
}

std::uint64_t DqnAgent::policy_parameter_hash() const {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (const Member& member : members_)
        hash = splitmix64(hash ^ member.policy.parameter_hash());
    return hash;
}

void DqnAgent::save(const std::filesystem::path& directory) const {
    std::filesystem::create_directories(directory);
    nlohmann::json manifest;
    manifest["format"] = "dispatchrl-agent";
    manifest["version"] = 1;
    manifest["config"] = config_to_json(config_);
    manifest["best_total_reward"] =
        best_total_reward_ ? nlohmann::json(*best_total_reward_) : nlohmann::json();
    manifest["best_episode"] = best_episode_ ? nlohmann::json(*best_episode_) : nlohmann::json();
    std::ofstream out(directory / "manifest.json");
    if (!out)
        throw std::runtime_error("cannot write checkpoint manifest in " + directory.string());
    out << manifest.dump(2) << "\n";

    for (std::size_t k = 0; k < members_.size(); ++k) {
        std::ofstream net_out(directory / ("member_" + std::to_string(k) + ".json"));
        if (!net_out)
            throw std::runtime_error("cannot write checkpoint member file");
        members_[k].policy.save(net_out);
    }
}

std::unique_ptr<DqnAgent> DqnAgent::load(const std::filesystem::path& directory) {
    std::ifstream in(directory / "manifest.json");
    if (!in)
        throw std::runtime_error("cannot open checkpoint manifest in " + directory.string());
    nlohmann::json manifest = nlohmann::json::parse(in);
    if (manifest.value("format", "") != "dispatchrl-agent")
        throw std::runtime_error("not an agent checkpoint: " + directory.string());
    AgentConfig config = config_from_json(manifest.at("config"));

    auto agent = std::make_unique<DqnAgent>(config);
    for (std::size_t k = 0; k < agent->members_.size(); ++k) {
        std::ifstream net_in(directory / ("member_" + std::to_string(k) + ".json"));
        if (!net_in)
            throw std::runtime_error("missing checkpoint member file " + std::to_string(k));
        Network loaded = Network::load(net_in);
        if (!(loaded.config() == agent->members_[k].policy.config()))
            throw std::runtime_error("checkpoint architecture does not match manifest");
        copy_parameters(loaded, agent->members_[k].policy);
        copy_parameters(loaded, agent->members_[k].target);
    }
    if (!manifest.at("best_total_reward").is_null())
        agent->best_total_reward_ = manifest.at("best_total_reward").get<double>();
    if (!manifest.at("best_episode").is_null())
        agent->best_episode_ = manifest.at("best_episode").get<int>();
    return agent;
}

std::unique_ptr<Agent> make_agent(const AgentConfig& config) {
    if (config.variant == Variant::Random)
        return std::make_unique<RandomAgent>(config);
    return std::make_unique<DqnAgent>(config);
}

std::unique_ptr<Agent> load_agent(const std::filesystem::path& directory) {
    std::ifstream in(directory / "manifest.json");
    if (!in)
        throw std::runtime_error("cannot open checkpoint manifest in " + directory.string());
    nlohmann::json manifest = nlohmann::json::parse(in);
    const AgentConfig config = config_from_json(manifest.at("config"));
    if (config.variant == Variant::Random) {
        auto agent = std::make_unique<RandomAgent>(config);
        std::optional<int> episode;
        std::optional<double> total;
        if (!manifest.at("best_episode").is_null())
            episode = manifest.at("best_episode").get<int>();
        if (!manifest.at("best_total_reward").is_null())
            total = manifest.at("best_total_reward").get<double>();
        agent->restore_best(episode, total);
        return agent;
    }
    return DqnAgent::load(directory);
}

} // namespace dispatchrl
