#include "rlpipe/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "rlpipe/errors.hpp"

namespace rlpipe {

using ordered_json = nlohmann::ordered_json;

namespace {

class Schema {
public:
    explicit Schema(std::vector<std::string>& errors) : errors_(errors) {}

    void fail(const std::string& msg) { errors_.push_back(msg); }

    void check_keys(const ordered_json& obj, const std::string& scope,
                    std::initializer_list<const char*> allowed) {
        for (const auto& [key, _] : obj.items()) {
            bool known = false;
            for (const char* a : allowed) {
                if (key == a) {
                    known = true;
                    break;
                }
            }
            if (!known) fail("unknown key '" + scope + key + "'");
        }
    }

    template <typename T>
    void read(const ordered_json& obj, const std::string& scope, const char* key, T& out) {
        if (!obj.contains(key)) return;
        try {
            out = obj.at(key).get<T>();
        } catch (const ordered_json::exception&) {
            fail("key '" + scope + key + "' has the wrong type");
        }
    }

    void read_enum(const ordered_json& obj, const std::string& scope, const char* key,
                   std::initializer_list<std::pair<const char*, int>> values, int& out) {
        if (!obj.contains(key)) return;
        std::string s;
        try {
            s = obj.at(key).get<std::string>();
        } catch (const ordered_json::exception&) {
            fail("key '" + scope + key + "' must be a string");
            return;
        }
        for (const auto& [name, v] : values) {
            if (s == name) {
                out = v;
                return;
            }
        }
        std::string opts;
        for (const auto& [name, v] : values) {
            if (!opts.empty()) opts += "|";
            opts += name;
        }
        fail("key '" + scope + key + "' must be one of " + opts);
    }

private:
    std::vector<std::string>& errors_;
};

RunConfig parse(const ordered_json& root) {
    std::vector<std::string> errors;
    Schema s(errors);
    RunConfig cfg;

    s.check_keys(root, "",
                 {"schema_version", "preset", "mode", "steps", "seeds", "out_dir", "batch",
                  "delta", "chunk", "latency", "lengths", "ppo", "sgd", "reward_proxy",
                  "debug"});

    int schema_version = 1;
    s.read(root, "", "schema_version", schema_version);
    if (schema_version != 1) s.fail("schema_version must be 1");

    std::string preset = "desk";
    s.read(root, "", "preset", preset);
    if (preset == "paper") {
        cfg.batch_size = 112; // published training batch size
        cfg.chunk_size = 256;
        cfg.chunk_candidates = {128, 256, 512};
        cfg.retune_period = 50;
    } else if (preset != "desk") {
        s.fail("preset must be desk|paper");
    }

    int mode = static_cast<int>(cfg.mode);
    s.read_enum(root, "", "mode",
                {{"simulate", 0}, {"train", 1}, {"tune", 2}}, mode);
    cfg.mode = static_cast<RunMode>(mode);
    s.read(root, "", "steps", cfg.steps);
    s.read(root, "", "seeds", cfg.seeds);
    s.read(root, "", "out_dir", cfg.out_dir);

    if (root.contains("batch")) {
        const auto& b = root.at("batch");
        s.check_keys(b, "batch.", {"size", "prompt_len", "prompts"});
        s.read(b, "batch.", "size", cfg.batch_size);
        s.read(b, "batch.", "prompt_len", cfg.prompt_len);
        s.read(b, "batch.", "prompts", cfg.prompt_count);
    }

    if (root.contains("delta")) {
        const auto& d = root.at("delta");
        s.check_keys(d, "delta.",
                     {"init", "min", "max", "controller", "window", "inc", "dec"});
        s.read(d, "delta.", "init", cfg.delta_init);
        s.read(d, "delta.", "min", cfg.delta_min);
        s.read(d, "delta.", "max", cfg.delta_max);
        int ctrl = static_cast<int>(cfg.controller);
        s.read_enum(d, "delta.", "controller", {{"fixed", 0}, {"alg1", 1}, {"eq4", 2}},
                    ctrl);
        cfg.controller = static_cast<DeltaMode>(ctrl);
        s.read(d, "delta.", "window", cfg.window);
        s.read(d, "delta.", "inc", cfg.delta_inc);
        s.read(d, "delta.", "dec", cfg.delta_dec);
    }

    if (root.contains("chunk")) {
        const auto& c = root.at("chunk");
        s.check_keys(c, "chunk.", {"size", "mode", "tune", "candidates", "retune_period"});
        s.read(c, "chunk.", "size", cfg.chunk_size);
        int m = static_cast<int>(cfg.schedule_mode);
        s.read_enum(c, "chunk.", "mode", {{"streamed", 0}, {"sequential", 1}}, m);
        cfg.schedule_mode = static_cast<ScheduleMode>(m);
        s.read(c, "chunk.", "tune", cfg.tune_chunks);
        s.read(c, "chunk.", "candidates", cfg.chunk_candidates);
        s.read(c, "chunk.", "retune_period", cfg.retune_period);
    }

    if (root.contains("latency")) {
        const auto& l = root.at("latency");
        s.check_keys(l, "latency.",
                     {"decode_per_token", "prefill_per_token", "reward_residual",
                      "chunk_switch_cost", "transfer_per_chunk", "placement",
                      "count_prompt_in_prefill"});
        s.read(l, "latency.", "decode_per_token", cfg.latency.decode_per_token);
        s.read(l, "latency.", "prefill_per_token", cfg.latency.prefill_per_token);
        s.read(l, "latency.", "reward_residual", cfg.latency.reward_residual);
        s.read(l, "latency.", "chunk_switch_cost", cfg.latency.chunk_switch_cost);
        s.read(l, "latency.", "transfer_per_chunk", cfg.latency.transfer_per_chunk);
        int p = static_cast<int>(cfg.latency.placement);
        s.read_enum(l, "latency.", "placement", {{"colocated", 0}, {"disaggregated", 1}},
                    p);
        cfg.latency.placement = static_cast<Placement>(p);
        s.read(l, "latency.", "count_prompt_in_prefill", cfg.latency.count_prompt_in_prefill);
    }

    if (root.contains("lengths")) {
        const auto& l = root.at("lengths");
        s.check_keys(l, "lengths.",
                     {"kind", "fast_len", "slow_len", "p_slow", "mu_log", "sigma_log",
                      "cap", "table"});
        int k = static_cast<int>(cfg.lengths.kind);
        s.read_enum(l, "lengths.", "kind",
                    {{"two_point", 0}, {"lognormal", 1}, {"empirical", 2}}, k);
        cfg.lengths.kind = static_cast<LengthDistribution::Kind>(k);
        s.read(l, "lengths.", "fast_len", cfg.lengths.fast_len);
        s.read(l, "lengths.", "slow_len", cfg.lengths.slow_len);
        s.read(l, "lengths.", "p_slow", cfg.lengths.p_slow);
        s.read(l, "lengths.", "mu_log", cfg.lengths.mu_log);
        s.read(l, "lengths.", "sigma_log", cfg.lengths.sigma_log);
        s.read(l, "lengths.", "cap", cfg.lengths.cap);
        s.read(l, "lengths.", "table", cfg.lengths.table);
    }

    if (root.contains("ppo")) {
        const auto& p = root.at("ppo");
        s.check_keys(p, "ppo.",
                     {"gamma", "lambda", "clip_epsilon", "learning_rate",
                      "value_learning_rate", "vocab", "target_token", "reward_scale",
                      "reward_bias"});
        s.read(p, "ppo.", "gamma", cfg.ppo.gamma);
        s.read(p, "ppo.", "lambda", cfg.ppo.lambda);
        s.read(p, "ppo.", "clip_epsilon", cfg.ppo.clip_epsilon);
        s.read(p, "ppo.", "learning_rate", cfg.ppo.learning_rate);
        s.read(p, "ppo.", "value_learning_rate", cfg.ppo.value_learning_rate);
        s.read(p, "ppo.", "vocab", cfg.vocab);
        s.read(p, "ppo.", "target_token", cfg.target_token);
        s.read(p, "ppo.", "reward_scale", cfg.reward_scale);
        s.read(p, "ppo.", "reward_bias", cfg.reward_bias);
    }

    if (root.contains("sgd")) {
        const auto& g = root.at("sgd");
        s.check_keys(g, "sgd.",
                     {"dim", "mu", "lipschitz", "eta", "d_max", "g_max", "iterations",
                      "initial_distance_sq", "noise", "eigenvalues"});
        s.read(g, "sgd.", "dim", cfg.sgd.dim);
        s.read(g, "sgd.", "mu", cfg.sgd.mu);
        s.read(g, "sgd.", "lipschitz", cfg.sgd.lipschitz);
        s.read(g, "sgd.", "eta", cfg.sgd.eta);
        s.read(g, "sgd.", "d_max", cfg.sgd.d_max);
        s.read(g, "sgd.", "g_max", cfg.sgd.g_max);
        s.read(g, "sgd.", "iterations", cfg.sgd.iterations);
        s.read(g, "sgd.", "initial_distance_sq", cfg.sgd.initial_distance_sq);
        int n = static_cast<int>(cfg.sgd.noise);
        s.read_enum(g, "sgd.", "noise", {{"none", 0}, {"random_unit", 1}, {"outward", 2}},
                    n);
        cfg.sgd.noise = static_cast<DeferralNoise>(n);
        s.read(g, "sgd.", "eigenvalues", cfg.sgd.eigenvalues);
    }

    if (root.contains("reward_proxy")) {
        const auto& r = root.at("reward_proxy");
        s.check_keys(r, "reward_proxy.", {"kind", "value", "ramp_scale", "ramp_steps"});
        int k = static_cast<int>(cfg.reward_proxy.kind);
        s.read_enum(r, "reward_proxy.", "kind", {{"constant", 0}, {"ramp", 1}}, k);
        cfg.reward_proxy.kind = static_cast<RewardProxy::Kind>(k);
        s.read(r, "reward_proxy.", "value", cfg.reward_proxy.value);
        s.read(r, "reward_proxy.", "ramp_scale", cfg.reward_proxy.ramp_scale);
        s.read(r, "reward_proxy.", "ramp_steps", cfg.reward_proxy.ramp_steps);
    }

    if (root.contains("debug")) {
        const auto& d = root.at("debug");
        s.check_keys(d, "debug.", {"fail_after_step"});
        s.read(d, "debug.", "fail_after_step", cfg.fail_after_step);
    }

    if (!errors.empty()) {
        std::string all = "config rejected:";
        for (const auto& e : errors) all += "\n  - " + e;
        throw ConfigError(all);
    }
    cfg.validate();
    return cfg;
}

void collect(std::vector<std::string>& errors, const std::function<void()>& check) {
    try {
        check();
    } catch (const ConfigError& e) {
        errors.push_back(e.what());
    }
}

} // namespace

void RunConfig::validate() const {
    std::vector<std::string> errors;
    if (steps < 1) errors.push_back("steps must be >= 1");
    if (seeds.empty()) errors.push_back("seeds must be non-empty");
    if (batch_size < 1) errors.push_back("batch.size must be >= 1");
    if (prompt_len < 1) errors.push_back("batch.prompt_len must be >= 1");
    if (delta_min > delta_max)
        errors.push_back("delta.min (" + std::to_string(delta_min) +
                         ") must be <= delta.max (" + std::to_string(delta_max) + ")");
    if (delta_min < 0) errors.push_back("delta.min must be >= 0");
    if (delta_init < delta_min || delta_init > delta_max)
        errors.push_back("delta.init must lie within [delta.min, delta.max]");
    if (window < 1) errors.push_back("delta.window must be >= 1");
    if (delta_inc < 1 || delta_dec < 1) errors.push_back("delta momenta must be >= 1");
    if (chunk_size < 1) errors.push_back("chunk.size must be >= 1");
    if (retune_period < 1) errors.push_back("chunk.retune_period must be >= 1");
    if (tune_chunks) {
        if (chunk_candidates.empty())
            errors.push_back("chunk.candidates must be non-empty when tuning");
        for (int c : chunk_candidates)
            if (c < 1) errors.push_back("chunk.candidates must all be >= 1");
        if (retune_period < static_cast<int>(chunk_candidates.size()))
            errors.push_back("chunk.retune_period must cover one step per candidate");
    }
    if (vocab < 2 || vocab > 16) errors.push_back("ppo.vocab must be in [2,16]");
    if (target_token < 0 || target_token >= vocab)
        errors.push_back("ppo.target_token must be a vocabulary token");
    collect(errors, [&] { latency.validate(); });
    collect(errors, [&] { lengths.validate(); });
    collect(errors, [&] { ppo.validate(); });
    collect(errors, [&] { sgd.validate(); });
    if (!errors.empty()) {
        std::string all = "config rejected:";
        for (const auto& e : errors) all += "\n  - " + e;
        throw ConfigError(all);
    }
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return load_config_text(buf.str());
}

RunConfig load_config_text(const std::string& text) {
    ordered_json root;
    try {
        root = ordered_json::parse(text);
    } catch (const ordered_json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");
    return parse(root);
}

namespace {

ordered_json echo_json(const RunConfig& c) {
    ordered_json j;
    j["schema_version"] = 1;
    j["mode"] = c.mode == RunMode::Simulate ? "simulate"
               : c.mode == RunMode::Train   ? "train"
                                            : "tune";
    j["steps"] = c.steps;
    j["seeds"] = c.seeds;
    j["out_dir"] = c.out_dir;
    j["batch"] = {{"size", c.batch_size}, {"prompt_len", c.prompt_len}, {"prompts", c.prompt_count}};
    j["delta"] = {{"init", c.delta_init},
                  {"min", c.delta_min},
                  {"max", c.delta_max},
                  {"controller", c.controller == DeltaMode::Fixed          ? "fixed"
                                 : c.controller == DeltaMode::Alg1WindowDiff ? "alg1"
                                                                             : "eq4"},
                  {"window", c.window},
                  {"inc", c.delta_inc},
                  {"dec", c.delta_dec}};
    j["chunk"] = {{"size", c.chunk_size},
                  {"mode", c.schedule_mode == ScheduleMode::Streamed ? "streamed" : "sequential"},
                  {"tune", c.tune_chunks},
                  {"candidates", c.chunk_candidates},
                  {"retune_period", c.retune_period}};
    j["latency"] = {{"decode_per_token", c.latency.decode_per_token},
                    {"prefill_per_token", c.latency.prefill_per_token},
                    {"reward_residual", c.latency.reward_residual},
                    {"chunk_switch_cost", c.latency.chunk_switch_cost},
                    {"transfer_per_chunk", c.latency.transfer_per_chunk},
                    {"placement", c.latency.placement == Placement::Colocated
                                      ? "colocated"
                                      : "disaggregated"},
                    {"count_prompt_in_prefill", c.latency.count_prompt_in_prefill}};
    ordered_json lengths = {{"kind", c.lengths.kind == LengthDistribution::Kind::TwoPoint
                                         ? "two_point"
                                     : c.lengths.kind == LengthDistribution::Kind::Lognormal
                                         ? "lognormal"
                                         : "empirical"},
                            {"fast_len", c.lengths.fast_len},
                            {"slow_len", c.lengths.slow_len},
                            {"p_slow", c.lengths.p_slow},
                            {"mu_log", c.lengths.mu_log},
                            {"sigma_log", c.lengths.sigma_log},
                            {"cap", c.lengths.cap}};
    lengths["table"] = c.lengths.table;
    j["lengths"] = lengths;
    j["ppo"] = {{"gamma", c.ppo.gamma},
                {"lambda", c.ppo.lambda},
                {"clip_epsilon", c.ppo.clip_epsilon},
                {"learning_rate", c.ppo.learning_rate},
                {"value_learning_rate", c.ppo.value_learning_rate},
                {"vocab", c.vocab},
                {"target_token", c.target_token},
                {"reward_scale", c.reward_scale},
                {"reward_bias", c.reward_bias}};
    j["sgd"] = {{"dim", c.sgd.dim},
                {"mu", c.sgd.mu},
                {"lipschitz", c.sgd.lipschitz},
                {"eta", c.sgd.eta},
                {"d_max", c.sgd.d_max},
                {"g_max", c.sgd.g_max},
                {"iterations", c.sgd.iterations},
                {"initial_distance_sq", c.sgd.initial_distance_sq},
                {"noise", c.sgd.noise == DeferralNoise::None         ? "none"
                          : c.sgd.noise == DeferralNoise::RandomUnit ? "random_unit"
                                                                     : "outward"},
                {"eigenvalues", c.sgd.eigenvalues}};
    j["reward_proxy"] = {{"kind", c.reward_proxy.kind == RewardProxy::Kind::Constant
                                      ? "constant"
                                      : "ramp"},
                         {"value", c.reward_proxy.value},
                         {"ramp_scale", c.reward_proxy.ramp_scale},
                         {"ramp_steps", c.reward_proxy.ramp_steps}};
    return j;
}

} // namespace

std::string config_echo(const RunConfig& config) { return echo_json(config).dump(2) + "\n"; }

std::string RunConfig::task_fingerprint() const {
    ordered_json j = echo_json(*this);
    // Scheduler knobs are excluded: comparable runs differ exactly there.
    j.erase("delta");
    j.erase("chunk");
    j.erase("seeds");
    j.erase("out_dir");
    const std::string canon = j.dump();
    // FNV-1a, printed as hex.
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char ch : canon) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig RunConfig::baseline() const {
    RunConfig b = *this;
    b.delta_init = 0;
    b.delta_min = 0;
    b.delta_max = 0;
    b.controller = DeltaMode::Fixed;
    b.schedule_mode = ScheduleMode::Sequential;
    b.tune_chunks = false;
    return b;
}

} // namespace rlpipe
