#include "rlpipe/chunking.hpp"

#include <algorithm>

#include "rlpipe/errors.hpp"

namespace rlpipe {

std::vector<TokenRange> partition_into_chunks(int target_len, int chunk_size) {
    if (chunk_size < 1) throw ConfigError("chunk size must be >= 1");
    if (target_len < 1) throw InputError("target_len must be >= 1");
    std::vector<TokenRange> out;
    out.reserve(static_cast<size_t>((target_len + chunk_size - 1) / chunk_size));
    for (int first = 1; first <= target_len; first += chunk_size) {
        out.push_back({first, std::min(first + chunk_size - 1, target_len)});
    }
    return out;
}

StepSchedule build_schedule(const std::vector<SequenceState>& seqs, int chunk_size,
                            ScheduleMode mode) {
    if (chunk_size < 1) throw ConfigError("chunk size must be >= 1");
    StepSchedule schedule;
    schedule.chunk_size = chunk_size;
    schedule.mode = mode;
    schedule.sequences.reserve(seqs.size());

    for (const auto& seq : seqs) {
        SequencePlan plan;
        plan.seq_id = seq.prompt.id;
        int index = 0;
        // Decoded-but-unprefilled tokens from earlier steps go out first,
        // as a single ready chunk.
        if (seq.prefilled_tokens < seq.generated) {
            plan.chunks.push_back(
                {{seq.prefilled_tokens + 1, seq.generated}, index++, false});
        }
        if (!seq.generation_done()) {
            for (const auto& range :
                 partition_into_chunks(seq.target_len - seq.generated, chunk_size)) {
                plan.chunks.push_back(
                    {{range.first + seq.generated, range.last + seq.generated}, index++, true});
            }
        }
        schedule.sequences.push_back(std::move(plan));
    }
    return schedule;
}

void TunerState::validate() const {
    if (candidates.empty()) throw ConfigError("tuner needs at least one candidate");
    if (window < 1) throw ConfigError("tuner window must be >= 1");
    if (!std::is_sorted(candidates.begin(), candidates.end()))
        throw ConfigError("tuner candidates must be ascending");
    for (int c : candidates)
        if (c < 1) throw ConfigError("tuner candidates must be >= 1");
    if (std::find(candidates.begin(), candidates.end(), current) == candidates.end())
        throw ConfigError("tuner current must be one of the candidates");
}

TunerState make_tuner(std::vector<int> candidates, int window) {
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    TunerState state;
    state.candidates = std::move(candidates);
    state.window = window;
    if (state.candidates.empty()) throw ConfigError("tuner needs at least one candidate");
    state.current = state.candidates.front();
    state.validate();
    return state;
}

TunerState retune_chunk_size(TunerState state, int candidate, double mean_step_ticks) {
    state.validate();
    if (std::find(state.candidates.begin(), state.candidates.end(), candidate) ==
        state.candidates.end()) {
        throw InputError("measurement for a chunk size that is not a candidate");
    }
    auto& [sum, count] = state.trials[candidate];
    sum += mean_step_ticks;
    count += 1;

    if (state.trials.size() == state.candidates.size()) {
        int best = state.candidates.front();
        double best_mean = 0.0;
        bool first = true;
        for (int c : state.candidates) { // ascending, so ties keep the smaller C
            const auto& [s, n] = state.trials.at(c);
            const double mean = s / n;
            if (first || mean < best_mean) {
                best = c;
                best_mean = mean;
                first = false;
            }
        }
        state.current = best;
        state.trials.clear();
    }
    return state;
}

std::optional<int> tuner_exploration_candidate(const TunerState& state, int step_in_period) {
    if (step_in_period < 0 ||
        step_in_period >= static_cast<int>(state.candidates.size()))
        return std::nullopt;
    return state.candidates[static_cast<size_t>(step_in_period)];
}

} // namespace rlpipe
