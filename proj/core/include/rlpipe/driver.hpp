#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rlpipe/config.hpp"

namespace rlpipe {

struct StepRecord {
    int step = 0;
    Tick wall_ticks = 0;
    int finished = 0;
    int deferred = 0;
    int delta = 0;                      // overcommit in effect during the step
    std::optional<double> controller_stat; // d or s_t when an update fired
    double mean_reward = 0.0;
    double util_generation = 0.0;
    double util_scoring = 0.0;
    int max_deferrals = 0; // running max over all sequences so far
};

struct TunerRow {
    int step = 0;
    int candidate = 0;
    double mean_ticks = 0.0;
    int chosen = 0; // current choice after folding in the measurement
};

struct SeedRun {
    std::uint64_t seed = 0;
    std::vector<StepRecord> steps;
    std::vector<TunerRow> tuner_rows;
    bool complete = true;
    std::string error;

    // aggregates over recorded steps
    Tick total_wall_ticks = 0;
    double mean_step_ticks = 0.0;
    double final_reward = 0.0; // mean reward over the last max(1, steps/10) records
    double mean_util_generation = 0.0;
    double mean_util_scoring = 0.0;
    int delta_final = 0;
    double delta_mean = 0.0;
    int delta_lo = 0;
    int delta_hi = 0;
};

/// One seeded run of the configured experiment. Throws only on config
/// errors; runtime failures come back as complete=false with the partial
/// step log retained.
SeedRun run_seed(const RunConfig& config, std::uint64_t seed);

struct Experiment {
    RunConfig config;
    std::vector<SeedRun> runs;
    std::vector<SeedRun> baselines; // embedded same-seed synchronous runs
    bool complete = true;

    double mean_step_ticks() const;
    double final_reward() const;
    double speedup_vs_baseline() const; // baseline ticks / run ticks
};

/// Runs all seeds plus the embedded synchronous baseline for each.
Experiment run_experiment_in_memory(const RunConfig& config);

/// Runs the experiment and writes steps_<seed>.csv, tuner_<seed>.csv (when
/// tuning) and summary.json under config.out_dir. Byte-identical outputs for
/// identical (config, seeds).
Experiment run_experiment(const RunConfig& config);

void write_outputs(const Experiment& experiment, const std::filesystem::path& out_dir);

struct CompareReport {
    bool task_match = false;
    double time_to_reward_ratio = 1.0;      // a / b, cumulative ticks to target reward
    double step_reward_max_deviation = 0.0; // max |mean_a(t) - mean_b(t)|
    double mean_step_ticks_ratio = 1.0;     // a / b
    double utilization_ratio_generation = 1.0;
    double utilization_ratio_scoring = 1.0;
};

/// Compares two written run directories (summary.json + step CSVs). Throws
/// InputError when the task fingerprints differ.
CompareReport compare_runs(const std::filesystem::path& run_a,
                           const std::filesystem::path& run_b);

/// Render a report as deterministic JSON text.
std::string compare_report_json(const CompareReport& report);

} // namespace rlpipe
