#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rlpipe/chunking.hpp"
#include "rlpipe/delayed_sgd.hpp"
#include "rlpipe/model.hpp"
#include "rlpipe/overcommit.hpp"
#include "rlpipe/ppo.hpp"

namespace rlpipe {

enum class RunMode { Simulate, Train, Tune };

// Synthetic reward fed to the delta controller in pure-latency simulations
// (training runs use the real batch mean instead).
struct RewardProxy {
    enum class Kind { Constant, Ramp };
    Kind kind = Kind::Constant;
    double value = 1.0;
    double ramp_scale = 1.0; // ramp: value + ramp_scale * min(step, ramp_steps)/ramp_steps
    int ramp_steps = 100;
};

struct RunConfig {
    RunMode mode = RunMode::Simulate;
    int steps = 100;
    std::vector<std::uint64_t> seeds = {1};
    std::string out_dir = "out";

    // batch
    int batch_size = 8; // desk-scale default; the "paper" preset uses 112
    int prompt_len = 8;
    std::int64_t prompt_count = -1; // -1: unbounded source

    // delta / controller
    int delta_init = 0;
    int delta_min = 0;
    int delta_max = 8;
    DeltaMode controller = DeltaMode::Fixed;
    int window = 8;
    int delta_inc = 1;
    int delta_dec = 1;

    // chunking
    int chunk_size = 256;
    ScheduleMode schedule_mode = ScheduleMode::Streamed;
    bool tune_chunks = false;
    std::vector<int> chunk_candidates = {128, 256, 512};
    int retune_period = 50;

    LatencyModel latency;
    LengthDistribution lengths;
    PpoHyperparams ppo;
    int vocab = 4;
    int target_token = 0;
    double reward_scale = 1.0;
    double reward_bias = 0.0;

    DelayedSgdConfig sgd;
    RewardProxy reward_proxy;

    int fail_after_step = -1; // debug hook: inject a failure mid-run

    void validate() const; // throws ConfigError listing every violation

    /// Stable hash of the task-defining fields (everything except scheduler
    /// knobs); comparable runs must share it.
    std::string task_fingerprint() const;

    /// Copy configured as the embedded synchronous baseline: delta pinned to
    /// zero, sequential schedule, controller and tuner off.
    RunConfig baseline() const;
};

/// Parses and validates a config file (strict schema: unknown keys are
/// errors; every violation is reported, not just the first).
RunConfig load_config(const std::filesystem::path& path);

/// Same, from JSON text (used by tests and the CLI).
RunConfig load_config_text(const std::string& text);

/// Canonical echo of a config with all defaults filled in; deterministic
/// key order and formatting.
std::string config_echo(const RunConfig& config);

} // namespace rlpipe
