#pragma once

// Training and evaluation protocol: episodes of simulated years with a
// random warm-up phase, best-checkpoint tracking, independent test runs,
// and CSV/JSON metric outputs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dispatchrl/agent.hpp"
#include "dispatchrl/environment.hpp"
#include "dispatchrl/stats.hpp"

namespace dispatchrl {

struct RunRecord {
    int episode = 0;
    double total_reward = 0.0;
    double mean_call_to_arrival = 0.0;
    double mean_assign_to_arrival = 0.0;
    long total_calls = 0;
    double fraction_met = 1.0;
    double epsilon = 0.0;
    double wall_clock_s = 0.0;
};

inline constexpr const char* kHistoryHeader =
    "episode,total_reward,mean_call_to_arrival,mean_assign_to_arrival,total_calls,"
    "fraction_met,epsilon,wall_clock_s";
inline constexpr const char* kEvalHeader =
    "episode,total_reward,mean_call_to_arrival,mean_assign_to_arrival,total_calls,"
    "fraction_met,wall_clock_s";

struct TrainSchedule {
    int n_episodes = 50;
    int warmup_episodes = 10; // entirely random action selection, no learning
};

struct TrainOptions {
    std::uint64_t base_seed = 42; // episode e runs with seed base_seed + e
    std::filesystem::path checkpoint_dir;        // empty disables checkpoints
    std::filesystem::path history_csv;           // empty disables the CSV
};

struct TrainResult {
    std::vector<RunRecord> history;
    std::optional<int> best_episode;
    std::optional<double> best_total_reward;
};

TrainResult train(EnvBase& env, Agent& agent, const TrainSchedule& schedule,
                  const TrainOptions& options);

/// Seed block for test runs, disjoint from training episode seeds.
inline constexpr std::uint64_t kEvalSeedOffset = 1000000;

struct EvalOptions {
    int n_runs = 30;
    std::uint64_t base_seed = 42; // run r uses base_seed + kEvalSeedOffset + r
    std::filesystem::path eval_csv;    // empty disables
    std::filesystem::path summary_json; // empty disables
    std::string agent_label;
    std::string scenario_label;
    std::uint64_t sim_config_hash = 0;
};

struct EvalResult {
    std::string agent_label;
    std::string scenario_label;
    std::uint64_t sim_config_hash = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<RunRecord> records;
    BoxStats call_to_arrival_box;
    BoxStats assign_to_arrival_box;
};

/// Greedy-mode evaluation: no learning, no memory writes.
EvalResult evaluate(EnvBase& env, Agent& agent, const EvalOptions& options);

EvalResult read_eval_summary(const std::filesystem::path& summary_json);

struct ComparisonRow {
    std::string agent_label;
    BoxStats call_to_arrival_box;
    double median_difference_vs_baseline = 0.0;
    double rank_sum_u = 0.0;
    double p_less_than_baseline = 1.0;
};

/// Box statistics per agent plus a one-sided rank-sum test of each agent's
/// per-run mean call-to-arrival against the baseline result set. All result
/// sets must share the scenario and seed list.
std::vector<ComparisonRow> compare(const std::vector<EvalResult>& results,
                                   const std::string& baseline_label);

std::string comparison_table(const std::vector<ComparisonRow>& rows);
void write_comparison_csv(const std::vector<ComparisonRow>& rows,
                          const std::filesystem::path& path);

} // namespace dispatchrl
