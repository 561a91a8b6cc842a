#include "rlpipe/driver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "rlpipe/engine.hpp"
#include "rlpipe/errors.hpp"

namespace rlpipe {

using ordered_json = nlohmann::ordered_json;

namespace {

double proxy_reward(const RewardProxy& proxy, int step) {
    switch (proxy.kind) {
    case RewardProxy::Kind::Constant:
        return proxy.value;
    case RewardProxy::Kind::Ramp: {
        const double f = std::min(step, proxy.ramp_steps) /
                         static_cast<double>(std::max(1, proxy.ramp_steps));
        return proxy.value + proxy.ramp_scale * f;
    }
    }
    return proxy.value;
}

std::vector<int> prefix_ends_for(int length, int chunk_size) {
    std::vector<int> ends;
    for (const auto& r : partition_into_chunks(length, chunk_size)) ends.push_back(r.last);
    return ends;
}

void finalize_aggregates(SeedRun& run) {
    if (run.steps.empty()) return;
    run.total_wall_ticks = 0;
    double util_g = 0.0, util_s = 0.0, delta_sum = 0.0;
    run.delta_lo = run.steps.front().delta;
    run.delta_hi = run.steps.front().delta;
    for (const auto& r : run.steps) {
        run.total_wall_ticks += r.wall_ticks;
        util_g += r.util_generation;
        util_s += r.util_scoring;
        delta_sum += r.delta;
        run.delta_lo = std::min(run.delta_lo, r.delta);
        run.delta_hi = std::max(run.delta_hi, r.delta);
    }
    const auto n = static_cast<double>(run.steps.size());
    run.mean_step_ticks = static_cast<double>(run.total_wall_ticks) / n;
    run.mean_util_generation = util_g / n;
    run.mean_util_scoring = util_s / n;
    run.delta_mean = delta_sum / n;
    run.delta_final = run.steps.back().delta;
    const size_t tail = std::max<size_t>(1, run.steps.size() / 10);
    double reward_tail = 0.0;
    for (size_t i = run.steps.size() - tail; i < run.steps.size(); ++i)
        reward_tail += run.steps[i].mean_reward;
    run.final_reward = reward_tail / static_cast<double>(tail);
}

} // namespace

SeedRun run_seed(const RunConfig& config, std::uint64_t seed) {
    config.validate();
    SeedRun run;
    run.seed = seed;

    Rng length_rng = Rng::derive(seed, "lengths");
    Rng ppo_rng = Rng::derive(seed, "ppo");

    StreamPromptSource source(config.prompt_len, config.prompt_count);
    OvercommitBuffer buffer;
    buffer.batch_size = config.batch_size;
    buffer.delta = config.delta_init;

    DeltaController controller;
    controller.mode = config.controller;
    controller.window = config.window;
    controller.delta_min = config.delta_min;
    controller.delta_max = config.delta_max;
    controller.inc = config.delta_inc;
    controller.dec = config.delta_dec;

    const bool training = config.mode == RunMode::Train;
    const bool tuning = config.mode == RunMode::Tune || config.tune_chunks;
    TunerState tuner;
    if (tuning) tuner = make_tuner(config.chunk_candidates, config.retune_period);

    ToyEnv env{config.vocab, config.target_token, config.reward_scale, config.reward_bias};
    PolicyParams policy = PolicyParams::uniform(config.vocab);
    std::unordered_map<SeqId, TrajectorySample> rollouts;

    int delta = config.delta_init;
    int max_deferrals = 0;

    try {
        for (int step = 0; step < config.steps; ++step) {
            if (config.fail_after_step >= 0 && step >= config.fail_after_step)
                throw std::runtime_error("injected failure (debug.fail_after_step)");

            buffer.delta = delta; // capacity change takes effect at refill
            refill(buffer, source, step, config.lengths, length_rng);
            if (buffer.entries.empty()) break; // source exhausted: clean stop

            int chunk_size = config.chunk_size;
            std::optional<int> explored;
            if (tuning) {
                const int in_period = step % config.retune_period;
                explored = tuner_exploration_candidate(tuner, in_period);
                chunk_size = explored ? *explored : tuner.current;
            }

            if (training) {
                for (const auto& entry : buffer.entries) {
                    if (rollouts.count(entry.prompt.id)) continue;
                    rollouts.emplace(
                        entry.prompt.id,
                        rollout(env, policy, entry.prompt, entry.target_len,
                                prefix_ends_for(entry.target_len, chunk_size), ppo_rng));
                }
            }

            std::vector<SequenceState> active;
            int pre_scored = 0;
            for (const auto& entry : buffer.entries) {
                if (entry.scored)
                    ++pre_scored;
                else
                    active.push_back(entry);
            }

            StepTimeline timeline;
            ResourceLedger ledger;
            const int still_needed = config.batch_size - pre_scored;
            if (!active.empty() && still_needed > 0) {
                const auto schedule = build_schedule(active, chunk_size, config.schedule_mode);
                std::tie(timeline, ledger) =
                    run_step(active, schedule, config.latency, still_needed);
            }

            auto selection = select_finished(buffer, timeline, config.batch_size);
            for (const auto& entry : buffer.entries)
                max_deferrals = std::max(max_deferrals, entry.deferrals);

            double mean_reward = 0.0;
            if (training) {
                TrajectoryBatch batch;
                for (const auto& seq : selection.ppo_batch) {
                    auto it = rollouts.find(seq.prompt.id);
                    if (it == rollouts.end())
                        throw InternalError("selected sequence has no rollout");
                    fill_values(it->second, policy);
                    batch.samples.push_back(std::move(it->second));
                    rollouts.erase(it);
                }
                if (!batch.samples.empty())
                    mean_reward = toy_rlhf_step(env, policy, batch, config.ppo);
            } else {
                mean_reward = proxy_reward(config.reward_proxy, step);
            }

            controller.observe(mean_reward);
            const auto update = controller.update(delta);

            StepRecord record;
            record.step = step;
            record.wall_ticks = timeline.wall;
            record.finished = static_cast<int>(selection.ppo_batch.size());
            record.deferred = selection.deferred;
            record.delta = delta;
            record.controller_stat = update.stat;
            record.mean_reward = mean_reward;
            if (timeline.wall > 0) {
                const auto util = utilization(ledger);
                record.util_generation = util.generation;
                record.util_scoring = util.scoring;
            }
            record.max_deferrals = max_deferrals;
            run.steps.push_back(record);

            if (tuning && explored) {
                tuner = retune_chunk_size(tuner, *explored,
                                          static_cast<double>(timeline.wall));
                run.tuner_rows.push_back(
                    {step, *explored, static_cast<double>(timeline.wall), tuner.current});
            }

            delta = update.delta;
        }
    } catch (const std::exception& e) {
        run.complete = false;
        run.error = e.what();
    }
    finalize_aggregates(run);
    return run;
}

double Experiment::mean_step_ticks() const {
    if (runs.empty()) return 0.0;
    double total = 0.0;
    for (const auto& r : runs) total += r.mean_step_ticks;
    return total / static_cast<double>(runs.size());
}

double Experiment::final_reward() const {
    if (runs.empty()) return 0.0;
    double total = 0.0;
    for (const auto& r : runs) total += r.final_reward;
    return total / static_cast<double>(runs.size());
}

double Experiment::speedup_vs_baseline() const {
    if (runs.empty() || baselines.size() != runs.size()) return 1.0;
    double total = 0.0;
    for (size_t i = 0; i < runs.size(); ++i) {
        if (runs[i].mean_step_ticks <= 0.0) return 1.0;
        total += baselines[i].mean_step_ticks / runs[i].mean_step_ticks;
    }
    return total / static_cast<double>(runs.size());
}

Experiment run_experiment_in_memory(const RunConfig& config) {
    config.validate();
    Experiment exp;
    exp.config = config;
    const RunConfig base = config.baseline();
    for (std::uint64_t seed : config.seeds) {
        exp.runs.push_back(run_seed(config, seed));
        exp.baselines.push_back(run_seed(base, seed));
        if (!exp.runs.back().complete) exp.complete = false;
    }
    return exp;
}

namespace {

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return buf;
}

void write_steps_csv(const SeedRun& run, const std::filesystem::path& path) {
    std::ofstream out(path);
    out << "step,wall_ticks,finished,deferred,delta,controller_stat,mean_reward,"
           "util_generation,util_scoring,max_deferrals\n";
    char util_buf[32];
    for (const auto& r : run.steps) {
        out << r.step << ',' << r.wall_ticks << ',' << r.finished << ',' << r.deferred
            << ',' << r.delta << ',';
        if (r.controller_stat) out << format_double(*r.controller_stat);
        out << ',' << format_double(r.mean_reward) << ',';
        std::snprintf(util_buf, sizeof(util_buf), "%.6f,%.6f", r.util_generation,
                      r.util_scoring);
        out << util_buf << ',' << r.max_deferrals << '\n';
    }
}

void write_tuner_csv(const SeedRun& run, const std::filesystem::path& path) {
    std::ofstream out(path);
    out << "step,candidate,mean_ticks,chosen\n";
    for (const auto& r : run.tuner_rows) {
        out << r.step << ',' << r.candidate << ',' << format_double(r.mean_ticks) << ','
            << r.chosen << '\n';
    }
}

} // namespace

void write_outputs(const Experiment& experiment, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const bool tuner_files = experiment.config.mode == RunMode::Tune ||
                             experiment.config.tune_chunks;
    for (const auto& run : experiment.runs) {
        write_steps_csv(run, out_dir / ("steps_" + std::to_string(run.seed) + ".csv"));
        if (tuner_files)
            write_tuner_csv(run, out_dir / ("tuner_" + std::to_string(run.seed) + ".csv"));
    }

    ordered_json summary;
    summary["schema_version"] = 1;
    summary["mode"] = experiment.config.mode == RunMode::Simulate ? "simulate"
                      : experiment.config.mode == RunMode::Train  ? "train"
                                                                  : "tune";
    summary["task_fingerprint"] = experiment.config.task_fingerprint();
    summary["seeds"] = experiment.config.seeds;
    summary["steps_requested"] = experiment.config.steps;
    summary["complete"] = experiment.complete;
    std::string error;
    for (const auto& run : experiment.runs)
        if (!run.complete) error = run.error;
    summary["error"] = error;
    summary["final_reward"] = experiment.final_reward();
    summary["mean_step_ticks"] = experiment.mean_step_ticks();
    summary["speedup_vs_baseline"] = experiment.speedup_vs_baseline();

    double util_g = 0.0, util_s = 0.0, delta_mean = 0.0;
    int delta_lo = 0, delta_hi = 0, delta_final = 0;
    if (!experiment.runs.empty()) {
        delta_lo = experiment.runs.front().delta_lo;
        delta_hi = experiment.runs.front().delta_hi;
        for (const auto& r : experiment.runs) {
            util_g += r.mean_util_generation;
            util_s += r.mean_util_scoring;
            delta_mean += r.delta_mean;
            delta_lo = std::min(delta_lo, r.delta_lo);
            delta_hi = std::max(delta_hi, r.delta_hi);
        }
        util_g /= static_cast<double>(experiment.runs.size());
        util_s /= static_cast<double>(experiment.runs.size());
        delta_mean /= static_cast<double>(experiment.runs.size());
        delta_final = experiment.runs.back().delta_final;
    }
    summary["utilization"] = {{"generation", util_g}, {"scoring", util_s}};
    summary["delta_stats"] = {{"initial", experiment.config.delta_init},
                              {"min", delta_lo},
                              {"max", delta_hi},
                              {"mean", delta_mean},
                              {"final", delta_final}};

    ordered_json per_seed = ordered_json::array();
    for (size_t i = 0; i < experiment.runs.size(); ++i) {
        const auto& r = experiment.runs[i];
        ordered_json row;
        row["seed"] = r.seed;
        row["complete"] = r.complete;
        row["steps_recorded"] = r.steps.size();
        row["final_reward"] = r.final_reward;
        row["mean_step_ticks"] = r.mean_step_ticks;
        row["total_wall_ticks"] = r.total_wall_ticks;
        row["mean_util_generation"] = r.mean_util_generation;
        row["mean_util_scoring"] = r.mean_util_scoring;
        if (i < experiment.baselines.size() && r.mean_step_ticks > 0.0)
            row["speedup_vs_baseline"] =
                experiment.baselines[i].mean_step_ticks / r.mean_step_ticks;
        else
            row["speedup_vs_baseline"] = 1.0;
        per_seed.push_back(row);
    }
    summary["per_seed"] = per_seed;

    std::ofstream out(out_dir / "summary.json");
    out << summary.dump(2) << "\n";
}

Experiment run_experiment(const RunConfig& config) {
    Experiment exp = run_experiment_in_memory(config);
    write_outputs(exp, config.out_dir);
    return exp;
}

namespace {

struct LoadedRun {
    ordered_json summary;
    // mean reward / cumulative wall curves averaged across seeds
    std::vector<double> reward_curve;
    std::vector<double> wall_curve; // per-step wall ticks, seed-averaged
};

LoadedRun load_run_dir(const std::filesystem::path& dir) {
    LoadedRun loaded;
    std::ifstream in(dir / "summary.json");
    if (!in) throw InputError("missing summary.json in " + dir.string());
    in >> loaded.summary;

    std::vector<std::vector<double>> rewards, walls;
    for (const auto& seed : loaded.summary.at("seeds")) {
        const auto path =
            dir / ("steps_" + std::to_string(seed.get<std::uint64_t>()) + ".csv");
        std::ifstream csv(path);
        if (!csv) throw InputError("missing step CSV: " + path.string());
        std::string line;
        std::getline(csv, line); // header
        std::vector<double> r, w;
        while (std::getline(csv, line)) {
            std::stringstream ss(line);
            std::string field;
            std::vector<std::string> fields;
            while (std::getline(ss, field, ',')) fields.push_back(field);
            if (fields.size() < 10) continue;
            w.push_back(std::stod(fields[1]));
            r.push_back(std::stod(fields[6]));
        }
        rewards.push_back(std::move(r));
        walls.push_back(std::move(w));
    }
    size_t common = rewards.empty() ? 0 : rewards.front().size();
    for (const auto& r : rewards) common = std::min(common, r.size());
    loaded.reward_curve.assign(common, 0.0);
    loaded.wall_curve.assign(common, 0.0);
    for (size_t s = 0; s < rewards.size(); ++s) {
        for (size_t t = 0; t < common; ++t) {
            loaded.reward_curve[t] += rewards[s][t] / static_cast<double>(rewards.size());
            loaded.wall_curve[t] += walls[s][t] / static_cast<double>(walls.size());
        }
    }
    return loaded;
}

double ticks_to_reward(const LoadedRun& run, double target) {
    double cumulative = 0.0;
    for (size_t t = 0; t < run.reward_curve.size(); ++t) {
        cumulative += run.wall_curve[t];
        if (run.reward_curve[t] >= target) return cumulative;
    }
    return cumulative;
}

} // namespace

CompareReport compare_runs(const std::filesystem::path& run_a,
                           const std::filesystem::path& run_b) {
    const LoadedRun a = load_run_dir(run_a);
    const LoadedRun b = load_run_dir(run_b);
    if (a.summary.at("task_fingerprint") != b.summary.at("task_fingerprint"))
        throw InputError("runs are not comparable: task fingerprints differ");

    CompareReport report;
    report.task_match = true;

    const double final_a = a.summary.at("final_reward").get<double>();
    const double final_b = b.summary.at("final_reward").get<double>();
    const double target = 0.95 * std::min(final_a, final_b);
    const double ticks_a = ticks_to_reward(a, target);
    const double ticks_b = ticks_to_reward(b, target);
    report.time_to_reward_ratio = ticks_b > 0.0 ? ticks_a / ticks_b : 1.0;

    const size_t common = std::min(a.reward_curve.size(), b.reward_curve.size());
    double max_dev = 0.0;
    for (size_t t = 0; t < common; ++t)
        max_dev = std::max(max_dev, std::abs(a.reward_curve[t] - b.reward_curve[t]));
    report.step_reward_max_deviation = max_dev;

    const double ticks_mean_a = a.summary.at("mean_step_ticks").get<double>();
    const double ticks_mean_b = b.summary.at("mean_step_ticks").get<double>();
    report.mean_step_ticks_ratio = ticks_mean_b > 0.0 ? ticks_mean_a / ticks_mean_b : 1.0;

    const double ug_a = a.summary.at("utilization").at("generation").get<double>();
    const double ug_b = b.summary.at("utilization").at("generation").get<double>();
    const double us_a = a.summary.at("utilization").at("scoring").get<double>();
    const double us_b = b.summary.at("utilization").at("scoring").get<double>();
    report.utilization_ratio_generation = ug_b > 0.0 ? ug_a / ug_b : 1.0;
    report.utilization_ratio_scoring = us_b > 0.0 ? us_a / us_b : 1.0;
    return report;
}

std::string compare_report_json(const CompareReport& report) {
    ordered_json j;
    j["task_match"] = report.task_match;
    j["time_to_reward_ratio"] = report.time_to_reward_ratio;
    j["step_reward_max_deviation"] = report.step_reward_max_deviation;
    j["mean_step_ticks_ratio"] = report.mean_step_ticks_ratio;
    j["utilization_ratio_generation"] = report.utilization_ratio_generation;
    j["utilization_ratio_scoring"] = report.utilization_ratio_scoring;
    return j.dump(2) + "\n";
}

} // namespace rlpipe
