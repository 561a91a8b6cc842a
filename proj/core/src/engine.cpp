#include "rlpipe/engine.hpp"

#include <algorithm>
#include <unordered_map>

#include "rlpipe/errors.hpp"

namespace rlpipe {

namespace {

struct ScoringTask {
    size_t seq_pos = 0;   // index into schedule.sequences
    int chunk_index = -1; // -1 for the residual task
    Tick available = 0;
    Tick duration = 0;
    bool is_residual = false;
    bool is_carry = false;
    Tick done = -1; // filled by the queue simulation
};

} // namespace

std::pair<StepTimeline, ResourceLedger> run_step(
    const std::vector<SequenceState>& active, const StepSchedule& schedule,
    const LatencyModel& model, std::optional<int> stop_after_scores) {
    model.validate();
    if (active.empty()) throw InputError("run_step requires a non-empty active set");

    std::unordered_map<SeqId, const SequenceState*> by_id;
    by_id.reserve(active.size());
    for (const auto& seq : active) by_id.emplace(seq.prompt.id, &seq);

    const bool streamed = schedule.mode == ScheduleMode::Streamed;
    const bool colocated = model.placement == Placement::Colocated;

    // Decode timelines: per sequence, chunks run back-to-back from tick 0.
    struct DecodeInfo {
        std::vector<Tick> done;   // per chunk (0 for carried chunks)
        Tick last_decode_done = 0;
    };
    std::vector<DecodeInfo> decode(schedule.sequences.size());
    std::vector<std::vector<ScoringTask>> seq_tasks(schedule.sequences.size());

    for (size_t s = 0; s < schedule.sequences.size(); ++s) {
        const auto& plan = schedule.sequences[s];
        const auto it = by_id.find(plan.seq_id);
        if (it == by_id.end())
            throw InternalError("schedule references unknown sequence id");
        const SequenceState& seq = *it->second;

        Tick decode_clock = 0;
        auto& info = decode[s];
        info.done.reserve(plan.chunks.size());
        for (const auto& chunk : plan.chunks) {
            if (chunk.needs_decode) {
                decode_clock += static_cast<Tick>(chunk.range.size()) * model.decode_per_token;
                info.done.push_back(decode_clock);
            } else {
                info.done.push_back(0);
            }
        }
        info.last_decode_done = decode_clock;

        // Scoring tasks, in per-sequence order; prompt tokens ride on the
        // sequence's first-ever prefill.
        bool prompt_pending = model.count_prompt_in_prefill && seq.chunks_prefilled == 0 &&
                              seq.prefilled_tokens == 0;
        bool first_scheduled = true;
        auto& tasks = seq_tasks[s];
        for (size_t c = 0; c < plan.chunks.size(); ++c) {
            const auto& chunk = plan.chunks[c];
            ScoringTask task;
            task.seq_pos = s;
            task.chunk_index = chunk.index;
            task.is_carry = !chunk.needs_decode;
            Tick avail = 0;
            if (chunk.needs_decode) {
                avail = streamed ? info.done[c] : info.last_decode_done;
                if (!colocated) avail += model.transfer_per_chunk;
            }
            task.available = avail;
            Tick dur = static_cast<Tick>(chunk.range.size()) * model.prefill_per_token;
            if (prompt_pending) {
                dur += static_cast<Tick>(seq.prompt.prompt_len) * model.prefill_per_token;
                prompt_pending = false;
            }
            if (colocated && (streamed || first_scheduled)) dur += model.chunk_switch_cost;
            first_scheduled = false;
            task.duration = dur;
            tasks.push_back(task);
        }
        // Residual fires when this step prefills the final tokens, or when a
        // fully-prefilled carry-over still owes its score (residual was cut).
        const bool reaches_end =
            (!plan.chunks.empty() && plan.chunks.back().range.last == seq.target_len) ||
            (plan.chunks.empty() && seq.prefilled_tokens >= seq.target_len && !seq.scored);
        if (reaches_end) {
            ScoringTask task;
            task.seq_pos = s;
            task.chunk_index = static_cast<int>(plan.chunks.size());
            task.is_residual = true;
            task.available = 0; // gated by predecessor completion below
            task.duration = model.reward_residual;
            tasks.push_back(task);
        }
    }

    // Serial scoring queue: work-conserving, per-sequence order, ties by
    // (available, seq_id, chunk_index).
    std::vector<size_t> next_task(seq_tasks.size(), 0);
    std::vector<ScoringTask*> done_tasks;
    Tick queue_clock = 0;
    for (;;) {
        ScoringTask* best = nullptr;
        SeqId best_id = 0;
        for (size_t s = 0; s < seq_tasks.size(); ++s) {
            if (next_task[s] >= seq_tasks[s].size()) continue;
            ScoringTask& cand = seq_tasks[s][next_task[s]];
            // Residuals and later chunks become available when the previous
            // task of the same sequence finishes.
            Tick avail = cand.available;
            if (next_task[s] > 0) {
                avail = std::max(avail, seq_tasks[s][next_task[s] - 1].done);
            }
            cand.available = avail;
            const SeqId cand_id = schedule.sequences[s].seq_id;
            if (best == nullptr || cand.available < best->available ||
                (cand.available == best->available &&
                 (cand_id < best_id ||
                  (cand_id == best_id && cand.chunk_index < best->chunk_index)))) {
                best = &cand;
                best_id = cand_id;
            }
        }
        if (best == nullptr) break;
        const Tick start = std::max(queue_clock, best->available);
        best->done = start + best->duration;
        queue_clock = best->done;
        next_task[best->seq_pos] += 1;
        done_tasks.push_back(best);
    }

    // Score-ready per sequence = its residual completion (if scheduled).
    struct ScoreEntry {
        Tick time;
        SeqId seq_id;
        size_t seq_pos;
    };
    std::vector<ScoreEntry> scores;
    for (size_t s = 0; s < seq_tasks.size(); ++s) {
        for (const auto& task : seq_tasks[s]) {
            if (task.is_residual)
                scores.push_back({task.done, schedule.sequences[s].seq_id, s});
        }
    }
    std::sort(scores.begin(), scores.end(), [](const ScoreEntry& a, const ScoreEntry& b) {
        return a.time != b.time ? a.time < b.time : a.seq_id < b.seq_id;
    });

    // Step end: the stop_after-th score-ready, or full completion.
    Tick t_end = 0;
    if (stop_after_scores && *stop_after_scores <= static_cast<int>(scores.size()) &&
        *stop_after_scores >= 1) {
        t_end = scores[static_cast<size_t>(*stop_after_scores) - 1].time;
    } else {
        for (size_t s = 0; s < seq_tasks.size(); ++s) {
            t_end = std::max(t_end, decode[s].last_decode_done);
            if (!seq_tasks[s].empty())
                t_end = std::max(t_end, seq_tasks[s].back().done);
        }
    }

    // Cut at t_end (inclusive) and assemble outcomes, events, and the ledger.
    StepTimeline timeline;
    timeline.wall = t_end;
    timeline.sequences.resize(schedule.sequences.size());
    ResourceLedger ledger;
    ledger.wall = t_end;

    Tick last_decode_any = 0;
    for (size_t s = 0; s < schedule.sequences.size(); ++s) {
        const auto& plan = schedule.sequences[s];
        auto& out = timeline.sequences[s];
        out.seq_id = plan.seq_id;
        for (size_t c = 0; c < plan.chunks.size(); ++c) {
            const auto& chunk = plan.chunks[c];
            if (!chunk.needs_decode) continue;
            const Tick done = decode[s].done[c];
            if (done <= t_end) {
                out.tokens_decoded += chunk.range.size();
                out.decode_chunks_completed += 1;
                out.decode_done.push_back(done);
                ledger.work_generation +=
                    static_cast<Tick>(chunk.range.size()) * model.decode_per_token;
                last_decode_any = std::max(last_decode_any, done);
                timeline.events.push_back({done, EventKind::ChunkDecoded, plan.seq_id, chunk.index});
            }
        }
        for (size_t i = 0; i < seq_tasks[s].size(); ++i) {
            const auto& task = seq_tasks[s][i];
            if (task.done < 0 || task.done > t_end) continue;
            if (task.is_residual) {
                out.score_ready = task.done;
                timeline.events.push_back(
                    {task.done, EventKind::ScoreReady, plan.seq_id, task.chunk_index});
            } else {
                out.tokens_prefilled += plan.chunks[i].range.size();
                out.prefill_tasks_completed += 1;
                if (task.is_carry) out.carry_prefill_completed = true;
                out.prefill_done.push_back(task.done);
                timeline.events.push_back(
                    {task.done, EventKind::ChunkPrefilled, plan.seq_id, task.chunk_index});
            }
            ledger.work_scoring += task.duration;
        }
    }
    ledger.busy_scoring = ledger.work_scoring;
    ledger.busy_generation = std::min(last_decode_any, t_end);
    timeline.events.push_back({t_end, EventKind::StepEnd, -1, -1});
    std::sort(timeline.events.begin(), timeline.events.end());
    return {std::move(timeline), ledger};
}

Utilization utilization(const ResourceLedger& ledger) {
    if (ledger.wall <= 0) throw InputError("utilization undefined for wall = 0");
    Utilization u;
    u.generation = static_cast<double>(ledger.busy_generation) / static_cast<double>(ledger.wall);
    u.scoring = static_cast<double>(ledger.busy_scoring) / static_cast<double>(ledger.wall);
    if (u.generation < 0.0 || u.generation > 1.0 || u.scoring < 0.0 || u.scoring > 1.0)
        throw InternalError("utilization outside [0,1]");
    return u;
}

} // namespace rlpipe
