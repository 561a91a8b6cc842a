#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "rlpipe/model.hpp"

namespace rlpipe {

enum class ScheduleMode { Streamed, Sequential };

// Inclusive 1-based token range within a response.
struct TokenRange {
    int first = 1;
    int last = 1;
    int size() const { return last - first + 1; }
};

// One unit of step work: decode the range (unless already decoded in an
// earlier step) and prefill it downstream.
struct ChunkTask {
    TokenRange range;
    int index = 0;            // 0-based within this step's per-sequence list
    bool needs_decode = true; // false for carried-over tokens decoded earlier
};

struct SequencePlan {
    SeqId seq_id = 0;
    std::vector<ChunkTask> chunks; // in token order; may be empty (nothing left)
};

// Per-step work layout. In streamed mode a chunk becomes available for
// prefill as soon as it is decoded; in sequential mode prefill waits for the
// sequence's last decode.
struct StepSchedule {
    std::vector<SequencePlan> sequences;
    int chunk_size = 1;
    ScheduleMode mode = ScheduleMode::Streamed;
};

/// Splits [1, target_len] into ceil(target_len/chunk_size) contiguous ranges,
/// each of chunk_size tokens except a final remainder >= 1.
std::vector<TokenRange> partition_into_chunks(int target_len, int chunk_size);

/// Builds the step schedule for the given sequences. Carried-over sequences
/// resume where they left off: tokens decoded but not yet prefilled form an
/// immediately-available first chunk, and only undone work is scheduled.
StepSchedule build_schedule(const std::vector<SequenceState>& seqs, int chunk_size,
                            ScheduleMode mode);

// Periodic chunk-size auto-tuner. Each period starts with one exploration
// step per candidate (ascending order); once every candidate has a
// measurement the best one (argmin mean step ticks, ties to the smaller
// size) is locked in for the rest of the period.
struct TunerState {
    std::vector<int> candidates;     // ascending
    int window = 50;                 // steps per retuning period
    int current = 0;                 // chosen chunk size, always a candidate
    std::map<int, std::pair<double, int>> trials; // candidate -> (sum ticks, count)

    void validate() const;
};

/// Returns a fresh tuner with `current` = first candidate.
TunerState make_tuner(std::vector<int> candidates, int window);

/// Folds one measurement (mean step ticks while `candidate` was active) into
/// the state. When all candidates have at least one measurement in the
/// current period, re-selects `current` and resets the trials.
TunerState retune_chunk_size(TunerState state, int candidate, double mean_step_ticks);

/// Candidate the tuner wants measured at `step_in_period`, or nullopt once
/// exploration is over for this period.
std::optional<int> tuner_exploration_candidate(const TunerState& state, int step_in_period);

} // namespace rlpipe
