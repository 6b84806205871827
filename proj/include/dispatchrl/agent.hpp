#pragma once

// The ten dispatch policies: random assignment plus nine Deep-Q variants
// composed from double targets, a dueling head, noisy layers, prioritized
// replay and 5-member bagging.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dispatchrl/network.hpp"
#include "dispatchrl/replay.hpp"

namespace dispatchrl {

enum class Variant {
    Random,
    Ddqn,
    D3qn,
    NoisyD3qn,
    PrD3qn,
    PrNoisyD3qn,
    BaggingDdqn,
    BaggingD3qn,
    BaggingNoisyD3qn,
    BaggingPrNoisyD3qn,
};

const std::vector<Variant>& all_variants();
std::string variant_name(Variant variant);          // CLI label, e.g. "pr_noisy_3dqn"
Variant variant_from_name(const std::string& name); // throws on unknown name

bool variant_uses_dueling(Variant v);
bool variant_uses_noisy(Variant v);
bool variant_uses_prioritized_replay(Variant v);
bool variant_uses_bagging(Variant v);
/// 5 for bagging variants, 1 otherwise.
int variant_ensemble_size(Variant v);
/// Epsilon-greedy exploration applies only to variants without noise/bagging.
bool variant_uses_epsilon(Variant v);

struct ExplorationSchedule {
    int warmup_episodes = 10; // entirely random action selection
    double epsilon_start = 1.0;
    double epsilon_decay_per_episode = 0.97;
    double epsilon_min = 0.02;
    bool uses_epsilon = true;

    /// Epsilon in effect for a 1-based episode index (1.0 during warmup).
    double epsilon_for_episode(int episode) const;
};

enum class EnsembleActionMode { RandomMember, MajorityVote };

enum class ActionMode { Train, Greedy };

struct AgentConfig {
    Variant variant = Variant::Ddqn;
    int input_dim = 0;
    int n_actions = 0;
    std::vector<int> hidden = {128, 128};
    int n_ensemble = 1;
    int target_sync_interval_steps = 1000;
    double gamma = 0.99;
    ExplorationSchedule exploration;
    EnsembleActionMode ensemble_action_mode = EnsembleActionMode::RandomMember;
    double reward_scale = 100.0;
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    std::size_t memory_capacity = 100000;
    double per_alpha = 0.6;
    double per_beta_start = 0.4;
    double per_beta_end = 1.0;
    long per_beta_anneal_steps = 100000;
    double grad_clip_norm = 0.0; // 0 disables
    double sigma_init = 0.5;
    std::uint64_t seed = 1;
    /// Per-feature multipliers applied to observations before the network.
    std::vector<double> observation_scale;

    void validate() const;
};

struct LearnDiagnostics {
    bool performed = false;
    double loss = 0.0;
    double mean_abs_td_error = 0.0;
};

class Agent {
public:
    virtual ~Agent() = default;

    virtual int select_action(const Observation& observation, ActionMode mode) = 0;
    /// Called once per environment step with the resulting transition.
    virtual void observe(const Transition& transition) { (void)transition; }
    /// One learning update; no-op with performed=false when not applicable.
    virtual LearnDiagnostics learn() { return {}; }
    /// Announces the upcoming 1-based episode (sets warmup/epsilon state).
    virtual void begin_episode(int episode) { (void)episode; }
    /// Re-seeds any evaluation-time randomness for an independent run.
    virtual void reseed_for_run(std::uint64_t seed) { (void)seed; }

    virtual double current_epsilon() const { return 0.0; }
    virtual const AgentConfig& config() const = 0;

    virtual void save(const std::filesystem::path& directory) const = 0;
    /// Checkpoints iff total reward strictly exceeds the best seen so far.
    bool save_best(int episode, double episode_total_reward,
                   const std::filesystem::path& directory);
    std::optional<double> best_total_reward() const { return best_total_reward_; }
    std::optional<int> best_episode() const { return best_episode_; }
    /// Restores the best-run bookkeeping when loading a checkpoint.
    void restore_best(std::optional<int> episode, std::optional<double> total) {
        best_episode_ = episode;
        best_total_reward_ = total;
    }

protected:
    std::optional<double> best_total_reward_;
    std::optional<int> best_episode_;
};

class RandomAgent final : public Agent {
public:
    explicit RandomAgent(const AgentConfig& config);

    int select_action(const Observation& observation, ActionMode mode) override;
    void reseed_for_run(std::uint64_t seed) override { rng_.seed(seed); }
    double current_epsilon() const override { return 1.0; }
    const AgentConfig& config() const override { return config_; }
    void save(const std::filesystem::path& directory) const override;

private:
    AgentConfig config_;
    std::mt19937_64 rng_;
};

/// Double-Q targets: r/scale + gamma * Q_target(s', argmax_a Q_policy(s', a)).
/// True terminals stop the bootstrap; truncated transitions bootstrap through.
std::vector<double> compute_td_targets(Network& policy, Network& target,
                                       const std::vector<Transition>& batch, double gamma,
                                       double reward_scale,
                                       const std::vector<double>& observation_scale,
                                       NoiseMode noise_mode);

/// Index of the largest value; ties break to the lowest index.
int argmax_action(const Vec& q);

/// Modal element; ties break to the lowest action index.
int majority_vote(const std::vector<int>& votes);

class DqnAgent final : public Agent {
public:
    explicit DqnAgent(const AgentConfig& config);

    int select_action(const Observation& observation, ActionMode mode) override;
    void observe(const Transition& transition) override;
    LearnDiagnostics learn() override;
    void begin_episode(int episode) override;

    double current_epsilon() const override;
    const AgentConfig& config() const override { return config_; }

    void save(const std::filesystem::path& directory) const override;
    static std::unique_ptr<DqnAgent> load(const std::filesystem::path& directory);

    long learn_step_count() const { return learn_steps_; }
    double current_beta() const;
    const ReplayMemory& memory() const { return memory_; }
    Network& policy_network(int member = 0) { return members_[member].policy; }
    Network& target_network(int member = 0) { return members_[member].target; }
    std::uint64_t policy_parameter_hash() const;

private:
    struct Member {
        Network policy;
        Network target;
        AdamOptimizer optimizer;
        std::mt19937_64 sample_rng;
    };

    Vec normalise(const Observation& observation) const;
    int greedy_action(const Observation& observation, NoiseMode mode);
    void sync_targets();

    AgentConfig config_;
    std::vector<Member> members_;
    ReplayMemory memory_;
    std::mt19937_64 explore_rng_;
    long learn_steps_ = 0;
    int episode_ = 0;
    bool warmup_ = true;
    double epsilon_ = 1.0;
};

/// Builds the agent for a variant; validates the configuration.
std::unique_ptr<Agent> make_agent(const AgentConfig& config);

/// Reconstructs an agent from a checkpoint directory written by save().
std::unique_ptr<Agent> load_agent(const std::filesystem::path& directory);

} // namespace dispatchrl
