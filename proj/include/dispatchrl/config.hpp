#pragma once

// Scenario presets and the flat key=value run configuration: parsing,
// defaults, and the emitted effective-config text that makes a run
// reproducible.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dispatchrl/agent.hpp"
#include "dispatchrl/environment.hpp"
#include "dispatchrl/harness.hpp"

namespace dispatchrl {

struct Scenario {
    std::string name;
    std::string description;
    int n_incident_areas = 1;
    int n_ambulances = 3;
};

const std::vector<Scenario>& scenarios();
const Scenario& find_scenario(const std::string& name); // throws on unknown preset

/// Everything a run needs, resolvable from presets, a config file and flags.
struct RunSettings {
    SimConfig sim;
    AgentConfig agent;
    TrainSchedule schedule;
    int n_test_runs = 30;
    std::uint64_t base_seed = 42;
    std::string scenario_name = "scenario1";
    std::string agent_name = "ddqn";
};

RunSettings default_settings();

void apply_scenario(RunSettings& settings, const std::string& name);

/// Fast desk-scale profile: 30-day episodes, 15 train / 5 warmup, 10 test runs.
void apply_fast_profile(RunSettings& settings);

/// Applies `key = value` lines ('#' starts a comment). Unknown keys and type
/// mismatches are rejected with the offending key named.
void apply_config_text(RunSettings& settings, const std::string& text);
void apply_config_file(RunSettings& settings, const std::filesystem::path& path);

/// Fills the derived agent fields (dimensions, normalisation, ensemble size,
/// epsilon usage, beta anneal budget, seeds) from the resolved settings.
void finalise(RunSettings& settings);

/// Every key with its resolved value; parsing this text reproduces the run.
std::string effective_config_text(const RunSettings& settings);

std::uint64_t fnv1a_hash(const std::string& text);
std::string hash_hex(std::uint64_t hash);

} // namespace dispatchrl
