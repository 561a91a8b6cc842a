#pragma once

#include <cstdint>
#include <vector>

#include "rlpipe/rng.hpp"

namespace rlpipe {

using Tick = std::int64_t;
using SeqId = std::int64_t;

struct PromptRequest {
    SeqId id = 0;
    int prompt_len = 1;    // tokens, >= 1
    int arrival_step = 0;
};

// One prompt's rollout as the scheduler sees it. target_len is the full
// response length, drawn at admission; generation across steps only reveals
// prefixes of it. Token counters are cumulative over the sequence's life,
// surviving carry-over between steps.
struct SequenceState {
    PromptRequest prompt;
    int target_len = 0;       // full response length L, tokens
    int generated = 0;        // decoded tokens so far (whole chunks only)
    int prefilled_tokens = 0; // response tokens already prefilled downstream
    int chunks_emitted = 0;   // decoded chunk count
    int chunks_prefilled = 0; // prefilled chunk count
    bool finished = false;    // generated == target_len
    bool scored = false;      // score-ready observed (may predate batch entry)
    int admitted_at = 0;      // step index of admission
    int deferrals = 0;        // steps this sequence was carried over

    bool generation_done() const { return generated >= target_len; }
};

enum class Placement { Colocated, Disaggregated };

// Per-stage latency parameters, in integer ticks. Prefill cost covers
// prompt+response tokens by default (the reward model scores the full
// concatenation); count_prompt_in_prefill=false restricts it to the response.
struct LatencyModel {
    Tick decode_per_token = 1;    // actor decode
    Tick prefill_per_token = 1;   // reward/critic prefill
    Tick reward_residual = 0;     // final scoring after the last prefill
    Tick chunk_switch_cost = 0;   // per chunk-boundary cost when colocated
    Placement placement = Placement::Disaggregated;
    Tick transfer_per_chunk = 0;  // streaming cost when disaggregated
    bool count_prompt_in_prefill = true;

    void validate() const; // throws ConfigError on negative ticks
};

struct StageTimes {
    Tick generation = 0; // G
    Tick prefill = 0;    // P
    Tick residual = 0;   // R
    Tick sync_total() const { return generation + prefill + residual; }
};

// Response-length generator. Two-point realizes the fast/slow tail model
// used by the throughput analysis; lognormal gives a long-tail shape;
// empirical-table plugs in a measured histogram.
struct LengthDistribution {
    enum class Kind { TwoPoint, Lognormal, EmpiricalTable };
    Kind kind = Kind::TwoPoint;

    // two-point
    int fast_len = 100;
    int slow_len = 600;
    double p_slow = 0.0;

    // lognormal
    double mu_log = 5.0;
    double sigma_log = 0.8;

    int cap = 4096; // hard upper bound on any sampled length

    // empirical-table
    std::vector<std::pair<int, double>> table; // (length, weight)

    void validate() const; // throws ConfigError
};

/// Draws one response length; deterministic given the rng state.
int sample_response_length(const LengthDistribution& dist, Rng& rng);

/// (G, P, R) stage times for one sequence under a latency model.
StageTimes stage_times(const SequenceState& seq, const LatencyModel& model);

} // namespace rlpipe
