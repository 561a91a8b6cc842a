// Command-line front end: simulate | train | tune | oracle | accept | compare.
//
// Exit codes: 0 success, 1 config error, 2 acceptance failure.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rlpipe/acceptance.hpp"
#include "rlpipe/config.hpp"
#include "rlpipe/delayed_sgd.hpp"
#include "rlpipe/driver.hpp"
#include "rlpipe/errors.hpp"
#include "rlpipe/oracles.hpp"

namespace {

using nlohmann::ordered_json;

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::int64_t seed = -1;
    std::string mode_override;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required) {
    auto* c = cmd->add_option("--config", opts.config_path, "run configuration file (JSON)");
    if (config_required) c->required();
    cmd->add_option("--out", opts.out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", opts.seed, "single seed overriding the config's list");
    cmd->add_option("--mode", opts.mode_override, "mode override: simulate|train|tune");
}

rlpipe::RunConfig load(const CommonOpts& opts, rlpipe::RunMode default_mode,
                       bool force_mode) {
    rlpipe::RunConfig cfg = opts.config_path.empty()
                                ? rlpipe::RunConfig{}
                                : rlpipe::load_config(opts.config_path);
    if (force_mode) cfg.mode = default_mode;
    if (!opts.mode_override.empty()) {
        if (opts.mode_override == "simulate")
            cfg.mode = rlpipe::RunMode::Simulate;
        else if (opts.mode_override == "train")
            cfg.mode = rlpipe::RunMode::Train;
        else if (opts.mode_override == "tune")
            cfg.mode = rlpipe::RunMode::Tune;
        else
            throw rlpipe::ConfigError("mode override must be simulate|train|tune");
    }
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    if (opts.seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(opts.seed)};
    cfg.validate();
    return cfg;
}

int run_mode_command(const CommonOpts& opts, rlpipe::RunMode mode) {
    rlpipe::RunConfig cfg = load(opts, mode, true);
    if (mode == rlpipe::RunMode::Tune) cfg.tune_chunks = true;
    const auto exp = rlpipe::run_experiment(cfg);
    std::cout << "wrote " << cfg.out_dir << "/summary.json ("
              << (exp.complete ? "complete" : "INCOMPLETE") << ", speedup vs baseline "
              << exp.speedup_vs_baseline() << ")\n";
    return exp.complete ? 0 : 1;
}

int oracle_command(const CommonOpts& opts) {
    const rlpipe::RunConfig cfg = load(opts, rlpipe::RunMode::Simulate, false);

    // Representative stage times: one fresh sequence at the fast length.
    rlpipe::SequenceState seq;
    seq.prompt = {0, cfg.prompt_len, 0};
    seq.target_len = cfg.lengths.fast_len;
    const auto st = rlpipe::stage_times(seq, cfg.latency);
    const rlpipe::TimingInputs timing{static_cast<double>(st.generation),
                                      static_cast<double>(st.prefill),
                                      static_cast<double>(st.residual)};

    ordered_json out;
    out["timing"] = {{"generation", timing.generation},
                     {"prefill", timing.prefill},
                     {"residual", timing.residual},
                     {"t_sync", rlpipe::t_sync(timing)},
                     {"t_stream", rlpipe::t_stream(timing)}};
    const auto sp = rlpipe::stream_speedup_lower_bound(timing);
    out["stream_speedup"] = {{"exact", sp.exact}, {"bound", sp.bound}};

    const double t_fast = static_cast<double>(cfg.lengths.fast_len) *
                          static_cast<double>(cfg.latency.decode_per_token);
    const double delta_slow =
        static_cast<double>(cfg.lengths.slow_len - cfg.lengths.fast_len) *
        static_cast<double>(cfg.latency.decode_per_token);
    const rlpipe::TailInputs tail{std::max(1.0, t_fast), delta_slow, cfg.lengths.p_slow};
    out["tail"] = {{"t_fast", tail.t_fast},
                   {"delta_slow", tail.delta_slow},
                   {"p", tail.p},
                   {"overcommit_speedup", rlpipe::overcommit_speedup(tail)}};

    const auto bounds = cfg.sgd.bound_inputs();
    out["delayed_sgd"] = {
        {"mu", cfg.sgd.mu},
        {"lipschitz", cfg.sgd.lipschitz},
        {"eta", cfg.sgd.eta},
        {"d_max", cfg.sgd.d_max},
        {"bound_k0", rlpipe::delayed_sgd_bound(bounds, 0, cfg.sgd.initial_distance_sq)},
        {"bound_k_final",
         rlpipe::delayed_sgd_bound(bounds, cfg.sgd.iterations, cfg.sgd.initial_distance_sq)}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic scheduling simulator and toy PPO engine for "
                 "overlapped RLHF pipelines"};
    app.require_subcommand(1);

    CommonOpts opts;
    auto* simulate = app.add_subcommand("simulate", "latency-only pipeline simulation");
    add_common(simulate, opts, true);
    auto* train = app.add_subcommand("train", "toy PPO training under the scheduler");
    add_common(train, opts, true);
    auto* tune = app.add_subcommand("tune", "simulate with the chunk-size tuner enabled");
    add_common(tune, opts, true);
    auto* oracle = app.add_subcommand("oracle", "print closed-form formula values as JSON");
    add_common(oracle, opts, false);
    auto* accept = app.add_subcommand("accept", "run the acceptance suite");
    auto* compare = app.add_subcommand("compare", "compare two written run directories");
    std::string dir_a, dir_b;
    compare->add_option("run_a", dir_a, "first run directory")->required();
    compare->add_option("run_b", dir_b, "second run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return run_mode_command(opts, rlpipe::RunMode::Simulate);
        if (train->parsed()) return run_mode_command(opts, rlpipe::RunMode::Train);
        if (tune->parsed()) return run_mode_command(opts, rlpipe::RunMode::Tune);
        if (oracle->parsed()) return oracle_command(opts);
        if (accept->parsed()) {
            const auto report = rlpipe::run_acceptance(std::cout);
            return report.all_passed ? 0 : 2;
        }
        if (compare->parsed()) {
            const auto report = rlpipe::compare_runs(dir_a, dir_b);
            std::cout << rlpipe::compare_report_json(report);
            return 0;
        }
    } catch (const rlpipe::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
