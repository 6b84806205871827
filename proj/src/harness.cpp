#include "dispatchrl/harness.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dispatchrl {

namespace {

std::string fmt(double value, int decimals = 6) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.*f", decimals, value);
    return buffer;
}

std::string history_row(const RunRecord& r, bool with_epsilon) {
    std::ostringstream out;
    out << r.episode << "," << fmt(r.total_reward) << "," << fmt(r.mean_call_to_arrival)
        << "," << fmt(r.mean_assign_to_arrival) << "," << r.total_calls << ","
        << fmt(r.fraction_met);
    if (with_epsilon)
        out << "," << fmt(r.epsilon);
    out << "," << fmt(r.wall_clock_s, 3);
    return out.str();
}

RunRecord make_record(int episode, double total_reward, const StepInfo& info,
                      double epsilon, double wall_clock_s) {
    RunRecord record;
    record.episode = episode;
    record.total_reward = total_reward;
    record.mean_call_to_arrival = mean(info.call_to_arrival_times);
    record.mean_assign_to_arrival = mean(info.assignment_to_arrival_times);
    record.total_calls = info.total_calls;
    record.fraction_met = info.fraction_demand_met;
    record.epsilon = epsilon;
    record.wall_clock_s = wall_clock_s;
    return record;
}

nlohmann::json box_to_json(const BoxStats& box) {
    return {{"min", box.min}, {"q1", box.q1}, {"median", box.median},
            {"q3", box.q3},   {"max", box.max}};
}

BoxStats box_from_json(const nlohmann::json& j) {
    BoxStats box;
    box.min = j.at("min").get<double>();
    box.q1 = j.at("q1").get<double>();
    box.median = j.at("median").get<double>();
    box.q3 = j.at("q3").get<double>();
    box.max = j.at("max").get<double>();
    return box;
}

} // namespace

TrainResult train(EnvBase& env, Agent& agent, const TrainSchedule& schedule,
                  const TrainOptions& options) {
    if (schedule.n_episodes < 1 || schedule.warmup_episodes < 0)
        throw std::invalid_argument("invalid training schedule");

    std::ofstream history;
    if (!options.history_csv.empty()) {
        history.open(options.history_csv);
        if (!history)
            throw std::runtime_error("cannot write " + options.history_csv.string());
        history << kHistoryHeader << "\n" << std::flush;
    }

    TrainResult result;
    for (int episode = 1; episode <= schedule.n_episodes; ++episode) {
        const auto started = std::chrono::steady_clock::now();
        agent.begin_episode(episode);
        Observation obs = env.reset(options.base_seed + static_cast<std::uint64_t>(episode));
        const bool learning = episode > schedule.warmup_episodes;

        double total_reward = 0.0;
        StepInfo final_info;
        while (true) {
            const int action = agent.select_action(obs, ActionMode::Train);
            StepResult sr = env.step(action);
            total_reward += sr.reward;
            Transition transition{std::move(obs), action,      sr.reward,
                                  sr.observation, sr.terminal, sr.truncated};
            agent.observe(transition);
            if (learning)
                agent.learn();
            obs = std::move(sr.observation);
            if (sr.terminal) {
                final_info = std::move(sr.info);
                break;
            }
        }

        const double wall_clock_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        const RunRecord record = make_record(episode, total_reward, final_info,
                                             agent.current_epsilon(), wall_clock_s);
        result.history.push_back(record);
        if (history)
            history << history_row(record, true) << "\n" << std::flush;

        if (!options.checkpoint_dir.empty())
            agent.save_best(episode, total_reward, options.checkpoint_dir);
    }

    if (agent.best_episode()) {
        result.best_episode = agent.best_episode();
        result.best_total_reward = agent.best_total_reward();
    } else {
        for (const RunRecord& r : result.history)
            if (!result.best_total_reward || r.total_reward > *result.best_total_reward) {
                result.best_total_reward = r.total_reward;
                result.best_episode = r.episode;
            }
    }
    return result;
}

EvalResult evaluate(EnvBase& env, Agent& agent, const EvalOptions& options) {
    if (options.n_runs < 1)
        throw std::invalid_argument("evaluation needs at least one run");

    EvalResult result;
    result.agent_label = options.agent_label;
    result.scenario_label = options.scenario_label;
    result.sim_config_hash = options.sim_config_hash;

    for (int run = 0; run < options.n_runs; ++run) {
        const std::uint64_t seed =
            options.base_seed + kEvalSeedOffset + static_cast<std::uint64_t>(run);
        const auto started = std::chrono::steady_clock::now();
        agent.reseed_for_run(seed);
        Observation obs = env.reset(seed);
        double total_reward = 0.0;
        StepInfo final_info;
        while (true) {
            const int action = agent.select_action(obs, ActionMode::Greedy);
            StepResult sr = env.step(action);
            total_reward += sr.reward;
            obs = std::move(sr.observation);
            if (sr.terminal) {
                final_info = std::move(sr.info);
                break;
            }
        }
        const double wall_clock_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.seeds.push_back(seed);
        result.records.push_back(
            make_record(run + 1, total_reward, final_info, 0.0, wall_clock_s));
    }

    std::vector<double> c2a, a2a;
    for (const RunRecord& r : result.records) {
        c2a.push_back(r.mean_call_to_arrival);
        a2a.push_back(r.mean_assign_to_arrival);
    }
    result.call_to_arrival_box = box_stats(c2a);
    result.assign_to_arrival_box = box_stats(a2a);

    if (!options.eval_csv.empty()) {
        std::ofstream out(options.eval_csv);
        if (!out)
            throw std::runtime_error("cannot write " + options.eval_csv.string());
        out << kEvalHeader << "\n";
        for (const RunRecord& r : result.records)
            out << history_row(r, false) << "\n";
    }
    if (!options.summary_json.empty()) {
        nlohmann::json per_run;
        std::vector<double> totals, fractions;
        std::vector<long> calls;
        for (const RunRecord& r : result.records) {
            totals.push_back(r.total_reward);
            fractions.push_back(r.fraction_met);
            calls.push_back(r.total_calls);
        }
        per_run["total_reward"] = totals;
        per_run["mean_call_to_arrival"] = c2a;
        per_run["mean_assign_to_arrival"] = a2a;
        per_run["total_calls"] = calls;
        per_run["fraction_met"] = fractions;

        nlohmann::json doc;
        doc["format"] = "dispatchrl-eval-summary";
        doc["version"] = 1;
        doc["agent"] = result.agent_label;
        doc["scenario"] = result.scenario_label;
        doc["sim_config_hash"] = result.sim_config_hash;
        doc["n_runs"] = options.n_runs;
        doc["seeds"] = result.seeds;
        doc["per_run"] = std::move(per_run);
        doc["box"] = {{"call_to_arrival", box_to_json(result.call_to_arrival_box)},
                      {"assign_to_arrival", box_to_json(result.assign_to_arrival_box)}};
        std::ofstream out(options.summary_json);
        if (!out)
            throw std::runtime_error("cannot write " + options.summary_json.string());
        out << doc.dump(2) << "\n";
    }
    return result;
}

EvalResult read_eval_summary(const std::filesystem::path& summary_json) {
    std::ifstream in(summary_json);
    if (!in)
        throw std::runtime_error("cannot open " + summary_json.string());
    nlohmann::json doc = nlohmann::json::parse(in);
    if (doc.value("format", "") != "dispatchrl-eval-summary")
        throw std::runtime_error("not an evaluation summary: " + summary_json.string());

    EvalResult result;
    result.agent_label = doc.at("agent").get<std::string>();
    result.scenario_label = doc.at("scenario").get<std::string>();
    result.sim_config_hash = doc.at("sim_config_hash").get<std::uint64_t>();
    result.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    const auto& per_run = doc.at("per_run");
    const auto totals = per_run.at("total_reward").get<std::vector<double>>();
    const auto c2a = per_run.at("mean_call_to_arrival").get<std::vector<double>>();
    const auto a2a = per_run.at("mean_assign_to_arrival").get<std::vector<double>>();
    const auto calls = per_run.at("total_calls").get<std::vector<long>>();
    const auto fractions = per_run.at("fraction_met").get<std::vector<double>>();
    for (std::size_t i = 0; i < c2a.size(); ++i) {
        RunRecord r;
        r.episode = static_cast<int>(i) + 1;
        r.total_reward = totals.at(i);
        r.mean_call_to_arrival = c2a.at(i);
        r.mean_assign_to_arrival = a2a.at(i);
        r.total_calls = calls.at(i);
        r.fraction_met = fractions.at(i);
        result.records.push_back(r);
    }
    result.call_to_arrival_box = box_from_json(doc.at("box").at("call_to_arrival"));
    result.assign_to_arrival_box = box_from_json(doc.at("box").at("assign_to_arrival"));
    return result;
}

std::vector<ComparisonRow> compare(const std::vector<EvalResult>& results,
                                   const std::string& baseline_label) {
    if (results.size() < 2)
        throw std::invalid_argument("compare needs at least two result sets");
    const EvalResult* baseline = nullptr;
    for (const EvalResult& r : results)
        if (r.agent_label == baseline_label)
            baseline = &r;
    if (!baseline)
        throw std::invalid_argument("baseline result set '" + baseline_label +
                                    "' not found");
    for (const EvalResult& r : results) {
        if (r.scenario_label != baseline->scenario_label ||
            r.sim_config_hash != baseline->sim_config_hash)
            throw std::invalid_argument("result sets come from different scenarios");
        if (r.seeds != baseline->seeds)
            throw std::invalid_argument("result sets use different seed lists");
    }

    std::vector<double> baseline_c2a;
    for (const RunRecord& r : baseline->records)
        baseline_c2a.push_back(r.mean_call_to_arrival);

    std::vector<ComparisonRow> rows;
    for (const EvalResult& r : results) {
        std::vector<double> c2a;
        for (const RunRecord& rec : r.records)
            c2a.push_back(rec.mean_call_to_arrival);
        ComparisonRow row;
        row.agent_label = r.agent_label;
        row.call_to_arrival_box = box_stats(c2a);
        row.median_difference_vs_baseline =
            row.call_to_arrival_box.median - box_stats(baseline_c2a).median;
        const RankSumResult test = rank_sum_test(c2a, baseline_c2a);
        row.rank_sum_u = test.u;
        row.p_less_than_baseline = test.p_less;
        rows.push_back(row);
    }
    return rows;
}

std::string comparison_table(const std::vector<ComparisonRow>& rows) {
    std::ostringstream out;
    out << "agent                    median_c2a   q1       q3       diff_med u        p_less\n";
    for (const ComparisonRow& r : rows) {
        char line[256];
        std::snprintf(line, sizeof(line), "%-24s %-12.3f %-8.3f %-8.3f %-8.3f %-8.1f %.5f\n",
                      r.agent_label.c_str(), r.call_to_arrival_box.median,
                      r.call_to_arrival_box.q1, r.call_to_arrival_box.q3,
                      r.median_difference_vs_baseline, r.rank_sum_u,
                      r.p_less_than_baseline);
        out << line;
    }
    return out.str();
}

void write_comparison_csv(const std::vector<ComparisonRow>& rows,
                          const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << "agent,min,q1,median,q3,max,median_diff_vs_baseline,rank_sum_u,p_less\n";
    for (const ComparisonRow& r : rows) {
        out << r.agent_label << "," << fmt(r.call_to_arrival_box.min) << ","
            << fmt(r.call_to_arrival_box.q1) << "," << fmt(r.call_to_arrival_box.median)
            << "," << fmt(r.call_to_arrival_box.q3) << "," << fmt(r.call_to_arrival_box.max)
            << "," << fmt(r.median_difference_vs_baseline) << "," << fmt(r.rank_sum_u, 1)
            << "," << fmt(r.p_less_than_baseline) << "\n";
    }
}

} // namespace dispatchrl
