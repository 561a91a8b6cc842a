#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rlpipe/chunking.hpp"
#include "rlpipe/model.hpp"

namespace rlpipe {

// Deterministic single-step timeline simulator over two abstract resources.
//
// Semantics (fixed for the whole artifact):
//  - Decode is width-free: every active sequence decodes concurrently, one
//    chunk after another from tick 0, at decode_per_token per token.
//    Generation is memory-bound, so extra in-flight sequences do not slow
//    each other down; this is what makes overcommitting worthwhile.
//  - Scoring (prefill + residual) is a serial unit-capacity queue. Tasks
//    become available per schedule mode, must respect per-sequence order,
//    and are served work-conservingly; ties broken by
//    (available, seq_id, chunk_index).
//  - A sequence's first-ever prefill task also carries its prompt tokens.
//  - Colocated placement charges chunk_switch_cost on prefill tasks (every
//    chunk in streamed mode, once per sequence in sequential mode, where the
//    response is scored as one contiguous run). Disaggregated placement
//    delays each decoded chunk's availability by transfer_per_chunk instead.
//  - The step ends at the stop_after-th score-ready event (ties included);
//    without stop_after it runs until all scheduled work completes. Tasks
//    still in flight at the cut are discarded, so carried-over progress is
//    whole completed chunks only.

enum class EventKind : int {
    ChunkDecoded = 0,
    ChunkPrefilled = 1,
    ScoreReady = 2,
    StepEnd = 3,
};

struct Event {
    Tick time = 0;
    EventKind kind = EventKind::ChunkDecoded;
    SeqId seq_id = -1;
    int chunk_index = -1;

    friend bool operator<(const Event& a, const Event& b) {
        if (a.time != b.time) return a.time < b.time;
        if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
        if (a.seq_id != b.seq_id) return a.seq_id < b.seq_id;
        return a.chunk_index < b.chunk_index;
    }
    friend bool operator==(const Event& a, const Event& b) {
        return a.time == b.time && a.kind == b.kind && a.seq_id == b.seq_id &&
               a.chunk_index == b.chunk_index;
    }
};

// What one step did to one sequence (completed work only).
struct SequenceOutcome {
    SeqId seq_id = -1;
    std::optional<Tick> score_ready;  // set iff fully scored within the step
    int tokens_decoded = 0;           // this step, completed chunks
    int tokens_prefilled = 0;         // this step, completed prefill tasks
    int decode_chunks_completed = 0;
    int prefill_tasks_completed = 0;
    bool carry_prefill_completed = false; // the decoded-earlier catch-up task
    std::vector<Tick> decode_done;        // completion tick per completed chunk
    std::vector<Tick> prefill_done;
};

struct StepTimeline {
    Tick wall = 0;
    std::vector<SequenceOutcome> sequences; // input order
    std::vector<Event> events;              // processed log, sorted, time <= wall
};

struct ResourceLedger {
    Tick wall = 0;
    Tick busy_generation = 0; // occupancy: ticks with >= 1 decode in flight
    Tick busy_scoring = 0;    // occupancy == work for the serial resource
    Tick work_generation = 0; // sum of completed decode durations
    Tick work_scoring = 0;    // sum of completed scoring-task durations
};

struct Utilization {
    double generation = 0.0;
    double scoring = 0.0;
};

/// Executes one step over the active sequences. Pure function of its inputs.
std::pair<StepTimeline, ResourceLedger> run_step(
    const std::vector<SequenceState>& active, const StepSchedule& schedule,
    const LatencyModel& model, std::optional<int> stop_after_scores = std::nullopt);

/// busy/wall per resource, each in [0,1]. Throws InputError when wall == 0.
Utilization utilization(const ResourceLedger& ledger);

} // namespace rlpipe
