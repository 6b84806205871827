#include "dispatchrl/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "dispatchrl/config.hpp"
#include "dispatchrl/harness.hpp"

namespace dispatchrl {

namespace {

namespace fs = std::filesystem;

std::string utc_timestamp() {
    const std::time_t now =
        std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buffer[32];
    std::strftime(buffer, sizeof(buffer), "%Y%m%dT%H%M%SZ", &tm_utc);
    return buffer;
}

/// runs/<timestamp>-<config hash>/ with a numeric suffix on collision.
fs::path make_run_dir(const fs::path& out_root, const std::string& config_text) {
    const std::string stem = utc_timestamp() + "-" + hash_hex(fnv1a_hash(config_text));
    fs::path dir = out_root / stem;
    for (int i = 1; fs::exists(dir); ++i)
        dir = out_root / (stem + "-" + std::to_string(i));
    fs::create_directories(dir);
    return dir;
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << text;
}

struct CommonFlags {
    std::string scenario;
    std::string agent;
    std::string config_file;
    bool fast = false;
    std::optional<std::uint64_t> seed;
    std::string out_root = "runs";
    std::optional<int> episodes;
    std::optional<int> warmup;
    std::optional<int> runs;
    std::optional<int> days;
};

void add_common_options(CLI::App* cmd, CommonFlags& flags, bool with_agent) {
    cmd->add_option("--scenario", flags.scenario, "Scenario preset (see list-scenarios)");
    if (with_agent)
        cmd->add_option("--agent", flags.agent, "Agent variant, e.g. ddqn or bagging_noisy_3dqn");
    cmd->add_option("--config", flags.config_file, "Flat key=value config file");
    cmd->add_flag("--fast", flags.fast,
                  "Desk-scale profile: 30-day episodes, 15 train / 5 warmup, 10 test runs");
    cmd->add_option("--seed", flags.seed, "Base random seed");
    cmd->add_option("--out", flags.out_root, "Directory that receives run directories");
    cmd->add_option("--episodes", flags.episodes, "Training episodes");
    cmd->add_option("--warmup", flags.warmup, "Random warm-up episodes");
    cmd->add_option("--runs", flags.runs, "Independent test runs");
    cmd->add_option("--days", flags.days, "Episode duration in days");
}

RunSettings resolve_settings(const CommonFlags& flags) {
    RunSettings settings = default_settings();
    if (!flags.scenario.empty())
        apply_scenario(settings, flags.scenario);
    if (!flags.config_file.empty())
        apply_config_file(settings, flags.config_file);
    if (flags.fast)
        apply_fast_profile(settings);
    if (!flags.agent.empty()) {
        settings.agent.variant = variant_from_name(flags.agent);
        settings.agent_name = flags.agent;
    }
    if (const char* env_seed = std::getenv("DISPATCHRL_BASE_SEED"))
        settings.base_seed = std::strtoull(env_seed, nullptr, 10);
    if (flags.seed)
        settings.base_seed = *flags.seed;
    if (flags.episodes)
        settings.schedule.n_episodes = *flags.episodes;
    if (flags.warmup)
        settings.schedule.warmup_episodes = *flags.warmup;
    if (flags.runs)
        settings.n_test_runs = *flags.runs;
    if (flags.days)
        settings.sim.episode_duration_days = *flags.days;
    finalise(settings);
    return settings;
}

int cmd_train(const CommonFlags& flags) {
    RunSettings settings = resolve_settings(flags);
    const std::string config_text = effective_config_text(settings);
    const fs::path run_dir = make_run_dir(flags.out_root, config_text);
    write_text_file(run_dir / "effective.config", config_text);

    Environment env(settings.sim);
    std::unique_ptr<Agent> agent = make_agent(settings.agent);

    TrainOptions options;
    options.base_seed = settings.base_seed;
    options.checkpoint_dir = run_dir / "checkpoint";
    options.history_csv = run_dir / "history.csv";

    std::cout << "training " << variant_name(settings.agent.variant) << " on "
              << settings.scenario_name << " (" << settings.schedule.n_episodes
              << " episodes, " << settings.schedule.warmup_episodes << " warmup, "
              << settings.sim.episode_duration_days << "-day episodes)\n";
    const TrainResult result = train(env, *agent, settings.schedule, options);

    std::cout << "run directory: " << run_dir.string() << "\n";
    if (result.best_episode)
        std::cout << "best episode: " << *result.best_episode
                  << " (total reward " << *result.best_total_reward << ")\n";
    return 0;
}

fs::path locate_checkpoint(const fs::path& given) {
    if (fs::exists(given / "manifest.json"))
        return given;
    if (fs::exists(given / "checkpoint" / "manifest.json"))
        return given / "checkpoint";
    throw std::runtime_error("no checkpoint manifest found under " + given.string());
}

int cmd_test(const CommonFlags& flags, const std::string& checkpoint,
             const std::string& label, bool episode_log) {
    RunSettings settings = resolve_settings(flags);
    const std::string config_text = effective_config_text(settings);
    const fs::path run_dir = make_run_dir(flags.out_root, config_text);
    write_text_file(run_dir / "effective.config", config_text);

    Environment env(settings.sim);
    const fs::path checkpoint_dir = locate_checkpoint(checkpoint);
    std::unique_ptr<Agent> agent = load_agent(checkpoint_dir);
    if (agent->config().n_actions != env.action_count())
        throw std::runtime_error("checkpoint action count does not match the scenario");
    if (agent->config().variant != Variant::Random &&
        agent->config().input_dim != env.observation_size())
        throw std::runtime_error("checkpoint input size does not match the scenario");

    EvalOptions options;
    options.n_runs = settings.n_test_runs;
    options.base_seed = settings.base_seed;
    options.eval_csv = run_dir / "eval.csv";
    options.summary_json = run_dir / "summary.json";
    options.agent_label = label.empty() ? variant_name(agent->config().variant) : label;
    options.scenario_label = settings.scenario_name;
    options.sim_config_hash = fnv1a_hash(config_text);

    std::cout << "evaluating " << options.agent_label << " on " << settings.scenario_name
              << " (" << options.n_runs << " runs)\n";
    const EvalResult result = evaluate(env, *agent, options);

    if (episode_log) {
        std::ofstream out(run_dir / "episode_log.csv");
        env.write_episode_log(out);
    }

    const BoxStats& box = result.call_to_arrival_box;
    std::cout << "run directory: " << run_dir.string() << "\n";
    std::cout << "mean call-to-arrival (min): median " << box.median << ", IQR ["
              << box.q1 << ", " << box.q3 << "]\n";
    return 0;
}

int cmd_compare(const std::vector<std::string>& inputs, const std::string& baseline,
                const std::string& out_root) {
    std::vector<EvalResult> results;
    std::string combined;
    for (const std::string& input : inputs) {
        fs::path path(input);
        if (fs::is_directory(path))
            path /= "summary.json";
        results.push_back(read_eval_summary(path));
        combined += results.back().agent_label + ";";
        combined += hash_hex(results.back().sim_config_hash) + ";";
    }
    const std::vector<ComparisonRow> rows = compare(results, baseline);
    std::cout << comparison_table(rows);

    const fs::path run_dir = make_run_dir(out_root, combined);
    write_comparison_csv(rows, run_dir / "comparison.csv");
    std::cout << "comparison written to " << (run_dir / "comparison.csv").string() << "\n";
    return 0;
}

int cmd_render_demo(const CommonFlags& flags, int steps) {
    RunSettings settings = resolve_settings(flags);
    Environment env(settings.sim);
    AgentConfig agent_config = settings.agent;
    agent_config.variant = Variant::Random;
    RandomAgent agent(agent_config);

    Observation obs = env.reset(settings.base_seed);
    std::cout << env.render() << "\n";
    for (int i = 0; i < steps; ++i) {
        const int action = agent.select_action(obs, ActionMode::Train);
        StepResult sr = env.step(action);
        std::cout << "step " << (i + 1) << ": allocated to dispatch point " << action
                  << ", reward " << sr.reward << "\n";
        std::cout << env.render() << "\n";
        obs = std::move(sr.observation);
        if (sr.terminal)
            break;
    }
    return 0;
}

int cmd_list_scenarios() {
    for (const Scenario& s : scenarios())
        std::cout << s.name << ": " << s.description << "\n";
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Ambulance dispatch-point allocation with Deep Q-learning agents"};
    app.require_subcommand(1);

    CommonFlags train_flags;
    CLI::App* train_cmd = app.add_subcommand("train", "Train an agent and checkpoint its best episode");
    add_common_options(train_cmd, train_flags, true);

    CommonFlags test_flags;
    std::string checkpoint;
    std::string label;
    bool episode_log = false;
    CLI::App* test_cmd = app.add_subcommand("test", "Evaluate a checkpoint over independent runs");
    add_common_options(test_cmd, test_flags, false);
    test_cmd->add_option("--checkpoint", checkpoint, "Checkpoint (or run) directory")
        ->required();
    test_cmd->add_option("--label", label, "Agent label used in summaries");
    test_cmd->add_flag("--episode-log", episode_log,
                       "Write the last run's per-incident log");

    std::vector<std::string> compare_inputs;
    std::string baseline = "random";
    std::string compare_out = "runs";
    CLI::App* compare_cmd =
        app.add_subcommand("compare", "Compare evaluation summaries against a baseline");
    compare_cmd->add_option("summaries", compare_inputs, "summary.json files or run directories")
        ->required()
        ->expected(-2);
    compare_cmd->add_option("--baseline", baseline, "Baseline agent label");
    compare_cmd->add_option("--out", compare_out, "Directory that receives run directories");

    CommonFlags render_flags;
    int render_steps = 5;
    CLI::App* render_cmd =
        app.add_subcommand("render-demo", "Run a few random-agent steps and print the state");
    add_common_options(render_cmd, render_flags, false);
    render_cmd->add_option("--steps", render_steps, "Steps to render");

    CLI::App* list_cmd = app.add_subcommand("list-scenarios", "Print the scenario presets");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (app.got_subcommand(train_cmd))
            return cmd_train(train_flags);
        if (app.got_subcommand(test_cmd))
            return cmd_test(test_flags, checkpoint, label, episode_log);
        if (app.got_subcommand(compare_cmd))
            return cmd_compare(compare_inputs, baseline, compare_out);
        if (app.got_subcommand(render_cmd))
            return cmd_render_demo(render_flags, render_steps);
        if (app.got_subcommand(list_cmd))
            return cmd_list_scenarios();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace dispatchrl
