#include "rlpipe/model.hpp"

#include <algorithm>
#include <cmath>

#include "rlpipe/errors.hpp"

namespace rlpipe {

void LatencyModel::validate() const {
    if (decode_per_token < 0 || prefill_per_token < 0 || reward_residual < 0 ||
        chunk_switch_cost < 0 || transfer_per_chunk < 0) {
        throw ConfigError("latency model: all tick costs must be >= 0");
    }
}

void LengthDistribution::validate() const {
    if (cap < 1) throw ConfigError("length distribution: cap must be >= 1");
    switch (kind) {
    case Kind::TwoPoint:
        if (fast_len < 1 || slow_len < 1)
            throw ConfigError("two-point lengths must be >= 1");
        if (fast_len > cap || slow_len > cap)
            throw ConfigError("two-point lengths must be <= cap");
        if (p_slow < 0.0 || p_slow > 1.0)
            throw ConfigError("two-point p_slow must be in [0,1]");
        break;
    case Kind::Lognormal:
        if (sigma_log < 0.0)
            throw ConfigError("lognormal sigma must be >= 0");
        break;
    case Kind::EmpiricalTable: {
        if (table.empty())
            throw ConfigError("empirical table must be non-empty");
        double total = 0.0;
        for (const auto& [len, w] : table) {
            if (len < 1 || len > cap)
                throw ConfigError("empirical table lengths must be in [1, cap]");
            if (w < 0.0)
                throw ConfigError("empirical table weights must be >= 0");
            total += w;
        }
        if (total <= 0.0)
            throw ConfigError("empirical table needs positive total weight");
        break;
    }
    }
}

int sample_response_length(const LengthDistribution& dist, Rng& rng) {
    dist.validate();
    switch (dist.kind) {
    case LengthDistribution::Kind::TwoPoint:
        return rng.uniform01() < dist.p_slow ? dist.slow_len : dist.fast_len;
    case LengthDistribution::Kind::Lognormal: {
        const double x = std::exp(dist.mu_log + dist.sigma_log * rng.normal());
        const auto len = static_cast<long long>(std::llround(x));
        return static_cast<int>(std::clamp<long long>(len, 1, dist.cap));
    }
    case LengthDistribution::Kind::EmpiricalTable: {
        double total = 0.0;
        for (const auto& [len, w] : dist.table) total += w;
        double u = rng.uniform01() * total;
        for (const auto& [len, w] : dist.table) {
            u -= w;
            if (u < 0.0) return len;
        }
        return dist.table.back().first;
    }
    }
    throw InternalError("unreachable length distribution kind");
}

StageTimes stage_times(const SequenceState& seq, const LatencyModel& model) {
    StageTimes t;
    t.generation = static_cast<Tick>(seq.target_len) * model.decode_per_token;
    const Tick prefill_tokens =
        seq.target_len + (model.count_prompt_in_prefill ? seq.prompt.prompt_len : 0);
    t.prefill = prefill_tokens * model.prefill_per_token;
    t.residual = model.reward_residual;
    return t;
}

} // namespace rlpipe
