#include "dispatchrl/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dispatchrl {

const std::vector<Scenario>& scenarios() {
    static const std::vector<Scenario> presets = {
        {"scenario1", "one incident area at any time of day, three ambulances", 1, 3},
        {"scenario2", "two incident areas at any time of day, six ambulances", 2, 6},
        {"scenario3", "three incident areas at any time of day, nine ambulances", 3, 9},
    };
    return presets;
}

const Scenario& find_scenario(const std::string& name) {
    for (const Scenario& s : scenarios())
        if (s.name == name)
            return s;
    throw std::invalid_argument("unknown scenario preset: " + name);
}

RunSettings default_settings() {
    RunSettings settings;
    apply_scenario(settings, "scenario1");
    return settings;
}

void apply_scenario(RunSettings& settings, const std::string& name) {
    const Scenario& preset = find_scenario(name);
    settings.scenario_name = preset.name;
    settings.sim.n_incident_areas = preset.n_incident_areas;
    settings.sim.n_ambulances = preset.n_ambulances;
}

void apply_fast_profile(RunSettings& settings) {
    settings.sim.episode_duration_days = 30;
    settings.schedule.n_episodes = 15;
    settings.schedule.warmup_episodes = 5;
    settings.n_test_runs = 10;
}

namespace {

long parse_long(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    long parsed = 0;
    try {
        parsed = std::stol(value, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "' expects an integer, got '" +
                                    value + "'");
    }
    if (used != value.size())
        throw std::invalid_argument("config key '" + key + "' expects an integer, got '" +
                                    value + "'");
    return parsed;
}

int parse_int(const std::string& key, const std::string& value) {
    return static_cast<int>(parse_long(key, value));
}

double parse_double(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double parsed = 0.0;
    try {
        parsed = std::stod(value, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "' expects a number, got '" +
                                    value + "'");
    }
    if (used != value.size())
        throw std::invalid_argument("config key '" + key + "' expects a number, got '" +
                                    value + "'");
    return parsed;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1")
        return true;
    if (value == "false" || value == "0")
        return false;
    throw std::invalid_argument("config key '" + key + "' expects true/false, got '" +
                                value + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    if (value.empty())
        return out;
    std::stringstream stream(value);
    std::string item;
    while (std::getline(stream, item, ','))
        out.push_back(parse_int(key, item));
    return out;
}

std::string trim(const std::string& text) {
    const auto begin = text.find_first_not_of(" \t\r");
    if (begin == std::string::npos)
        return "";
    const auto end = text.find_last_not_of(" \t\r");
    return text.substr(begin, end - begin + 1);
}

void apply_key(RunSettings& s, const std::string& key, const std::string& value) {
    // simulation
    if (key == "world_size_km") s.sim.world_size_km = parse_double(key, value);
    else if (key == "n_dispatch_points") s.sim.n_dispatch_points = parse_int(key, value);
    else if (key == "n_hospitals") s.sim.n_hospitals = parse_int(key, value);
    else if (key == "n_ambulances") s.sim.n_ambulances = parse_int(key, value);
    else if (key == "n_incident_areas") s.sim.n_incident_areas = parse_int(key, value);
    else if (key == "n_epochs_per_day") s.sim.n_epochs_per_day = parse_int(key, value);
    else if (key == "incidents_per_ambulance_per_day")
        s.sim.incidents_per_ambulance_per_day = parse_double(key, value);
    else if (key == "incident_jitter_km") s.sim.incident_jitter_km = parse_double(key, value);
    else if (key == "ambulance_speed_kph") s.sim.ambulance_speed_kph = parse_double(key, value);
    else if (key == "allocate_while_travelling")
        s.sim.allocate_while_travelling = parse_bool(key, value);
    else if (key == "episode_duration_days")
        s.sim.episode_duration_days = parse_int(key, value);
    // scenario preset (expands to the two scenario fields above)
    else if (key == "scenario") apply_scenario(s, value);
    // agent
    else if (key == "agent") {
        s.agent.variant = variant_from_name(value);
        s.agent_name = value;
    }
    else if (key == "gamma") s.agent.gamma = parse_double(key, value);
    else if (key == "target_sync_interval_steps")
        s.agent.target_sync_interval_steps = parse_int(key, value);
    else if (key == "epsilon_start") s.agent.exploration.epsilon_start = parse_double(key, value);
    else if (key == "epsilon_decay_per_episode")
        s.agent.exploration.epsilon_decay_per_episode = parse_double(key, value);
    else if (key == "epsilon_min") s.agent.exploration.epsilon_min = parse_double(key, value);
    else if (key == "ensemble_action_mode") {
        if (value == "random_member")
            s.agent.ensemble_action_mode = EnsembleActionMode::RandomMember;
        else if (value == "majority_vote")
            s.agent.ensemble_action_mode = EnsembleActionMode::MajorityVote;
        else
            throw std::invalid_argument(
                "config key 'ensemble_action_mode' expects random_member or majority_vote");
    }
    else if (key == "reward_scale") s.agent.reward_scale = parse_double(key, value);
    else if (key == "learning_rate") s.agent.learning_rate = parse_double(key, value);
    else if (key == "batch_size")
        s.agent.batch_size = static_cast<std::size_t>(parse_long(key, value));
    else if (key == "memory_capacity")
        s.agent.memory_capacity = static_cast<std::size_t>(parse_long(key, value));
    else if (key == "per_alpha") s.agent.per_alpha = parse_double(key, value);
    else if (key == "per_beta_start") s.agent.per_beta_start = parse_double(key, value);
    else if (key == "per_beta_end") s.agent.per_beta_end = parse_double(key, value);
    else if (key == "grad_clip_norm") s.agent.grad_clip_norm = parse_double(key, value);
    else if (key == "sigma_init") s.agent.sigma_init = parse_double(key, value);
    else if (key == "hidden_layers") s.agent.hidden = parse_int_list(key, value);
    // harness
    else if (key == "n_train_episodes") s.schedule.n_episodes = parse_int(key, value);
    else if (key == "warmup_episodes") s.schedule.warmup_episodes = parse_int(key, value);
    else if (key == "n_test_runs") s.n_test_runs = parse_int(key, value);
    else if (key == "base_seed")
        s.base_seed = static_cast<std::uint64_t>(parse_long(key, value));
    else
        throw std::invalid_argument("unknown config key: '" + key + "'");
}

} // namespace

void apply_config_text(RunSettings& settings, const std::string& text) {
    std::stringstream stream(text);
    std::string line;
    int line_number = 0;
    while (std::getline(stream, line)) {
        ++line_number;
        const auto comment = line.find('#');
        if (comment != std::string::npos)
            line = line.substr(0, comment);
        line = trim(line);
        if (line.empty())
            continue;
        const auto equals = line.find('=');
        if (equals == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(line_number) +
                                        " is not 'key = value': " + line);
        const std::string key = trim(line.substr(0, equals));
        const std::string value = trim(line.substr(equals + 1));
        apply_key(settings, key, value);
    }
}

void apply_config_file(RunSettings& settings, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    apply_config_text(settings, buffer.str());
}

void finalise(RunSettings& settings) {
    settings.sim.random_seed = settings.base_seed;
    settings.sim.validate();

    AgentConfig& agent = settings.agent;
    agent.input_dim = settings.sim.n_dispatch_points + 3;
    agent.n_actions = settings.sim.n_dispatch_points;
    agent.n_ensemble = variant_ensemble_size(agent.variant);
    agent.exploration.uses_epsilon = variant_uses_epsilon(agent.variant);
    agent.exploration.warmup_episodes = settings.schedule.warmup_episodes;
    agent.seed = settings.base_seed;

    // Observations are normalised agent-side: counts by fleet size,
    // coordinates by world size; the time fraction is already in [0,1).
    agent.observation_scale.assign(agent.input_dim, 1.0);
    for (int i = 0; i < settings.sim.n_dispatch_points; ++i)
        agent.observation_scale[i] = 1.0 / settings.sim.n_ambulances;
    agent.observation_scale[settings.sim.n_dispatch_points] = 1.0 / settings.sim.world_size_km;
    agent.observation_scale[settings.sim.n_dispatch_points + 1] =
        1.0 / settings.sim.world_size_km;

    // Anneal the prioritized-replay beta across the expected learn budget.
    const double expected_steps_per_episode = settings.sim.n_ambulances *
                                              settings.sim.incidents_per_ambulance_per_day *
                                              settings.sim.episode_duration_days;
    const int learning_episodes =
        std::max(1, settings.schedule.n_episodes - settings.schedule.warmup_episodes);
    agent.per_beta_anneal_steps =
        std::max(1L, static_cast<long>(expected_steps_per_episode * learning_episodes));

    agent.validate();
}

std::string effective_config_text(const RunSettings& s) {
    std::ostringstream out;
    out.precision(17);
    out << "# effective configuration (fully resolved)\n";
    out << "scenario = " << s.scenario_name << "\n";
    out << "\n# simulation\n";
    out << "world_size_km = " << s.sim.world_size_km << "\n";
    out << "n_dispatch_points = " << s.sim.n_dispatch_points << "\n";
    out << "n_hospitals = " << s.sim.n_hospitals << "\n";
    out << "n_ambulances = " << s.sim.n_ambulances << "\n";
    out << "n_incident_areas = " << s.sim.n_incident_areas << "\n";
    out << "n_epochs_per_day = " << s.sim.n_epochs_per_day << "\n";
    out << "incidents_per_ambulance_per_day = " << s.sim.incidents_per_ambulance_per_day
        << "\n";
    out << "incident_jitter_km = " << s.sim.incident_jitter_km << "\n";
    out << "ambulance_speed_kph = " << s.sim.ambulance_speed_kph << "\n";
    out << "allocate_while_travelling = "
        << (s.sim.allocate_while_travelling ? "true" : "false") << "\n";
    out << "episode_duration_days = " << s.sim.episode_duration_days << "\n";
    out << "\n# agent\n";
    out << "agent = " << variant_name(s.agent.variant) << "\n";
    out << "gamma = " << s.agent.gamma << "\n";
    out << "target_sync_interval_steps = " << s.agent.target_sync_interval_steps << "\n";
    out << "epsilon_start = " << s.agent.exploration.epsilon_start << "\n";
    out << "epsilon_decay_per_episode = " << s.agent.exploration.epsilon_decay_per_episode
        << "\n";
    out << "epsilon_min = " << s.agent.exploration.epsilon_min << "\n";
    out << "ensemble_action_mode = "
        << (s.agent.ensemble_action_mode == EnsembleActionMode::RandomMember
                ? "random_member"
                : "majority_vote")
        << "\n";
    out << "reward_scale = " << s.agent.reward_scale << "\n";
    out << "learning_rate = " << s.agent.learning_rate << "\n";
    out << "batch_size = " << s.agent.batch_size << "\n";
    out << "memory_capacity = " << s.agent.memory_capacity << "\n";
    out << "per_alpha = " << s.agent.per_alpha << "\n";
    out << "per_beta_start = " << s.agent.per_beta_start << "\n";
    out << "per_beta_end = " << s.agent.per_beta_end << "\n";
    out << "grad_clip_norm = " << s.agent.grad_clip_norm << "\n";
    out << "sigma_init = " << s.agent.sigma_init << "\n";
    out << "hidden_layers = ";
    for (std::size_t i = 0; i < s.agent.hidden.size(); ++i)
        out << (i ? "," : "") << s.agent.hidden[i];
    out << "\n";
    out << "\n# harness\n";
    out << "n_train_episodes = " << s.schedule.n_episodes << "\n";
    out << "warmup_episodes = " << s.schedule.warmup_episodes << "\n";
    out << "n_test_runs = " << s.n_test_runs << "\n";
    out << "base_seed = " << s.base_seed << "\n";
    return out.str();
}

std::uint64_t fnv1a_hash(const std::string& text) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string hash_hex(std::uint64_t hash) {
    static const char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[hash & 0xF];
        hash >>= 4;
    }
    return out;
}

} // namespace dispatchrl
