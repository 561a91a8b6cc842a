#include "rlpipe/overcommit.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

#include "rlpipe/errors.hpp"

namespace rlpipe {

int refill(OvercommitBuffer& buffer, PromptSource& source, int step,
           const LengthDistribution& lengths, Rng& length_rng) {
    if (buffer.batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (static_cast<int>(buffer.entries.size()) > buffer.capacity())
        throw InternalError("buffer over capacity at refill");
    int added = 0;
    while (static_cast<int>(buffer.entries.size()) < buffer.capacity()) {
        auto prompt = source.next(step);
        if (!prompt) break;
        SequenceState seq;
        seq.prompt = *prompt;
        seq.target_len = sample_response_length(lengths, length_rng);
        seq.admitted_at = step;
        buffer.entries.push_back(seq);
        ++added;
    }
    return added;
}

SelectionResult select_finished(OvercommitBuffer& buffer, const StepTimeline& timeline,
                                int batch_size) {
    std::unordered_map<SeqId, const SequenceOutcome*> outcomes;
    outcomes.reserve(timeline.sequences.size());
    for (const auto& out : timeline.sequences) outcomes.emplace(out.seq_id, &out);

    struct Ready {
        Tick tick;
        SeqId id;
        size_t pos;
    };
    std::vector<Ready> ready;

    for (size_t pos = 0; pos < buffer.entries.size(); ++pos) {
        SequenceState& seq = buffer.entries[pos];
        const bool scored_before = seq.scored;
        if (auto it = outcomes.find(seq.prompt.id); it != outcomes.end()) {
            const SequenceOutcome& out = *it->second;
            const int emitted_at_start = seq.chunks_emitted;
            seq.generated += out.tokens_decoded;
            seq.chunks_emitted += out.decode_chunks_completed;
            seq.prefilled_tokens += out.tokens_prefilled;
            // The carry task covers every token decoded in earlier steps, so
            // its completion catches the chunk counter up in one go.
            seq.chunks_prefilled =
                (out.carry_prefill_completed ? emitted_at_start : seq.chunks_prefilled) +
                (out.prefill_tasks_completed - (out.carry_prefill_completed ? 1 : 0));
            if (seq.generated > seq.target_len)
                throw InternalError("sequence decoded past its target length");
            seq.finished = seq.generated == seq.target_len;
            if (out.score_ready) seq.scored = true;
            if (seq.chunks_prefilled > seq.chunks_emitted)
                throw InternalError("prefilled chunk count exceeds emitted count");
            if (out.score_ready || scored_before) {
                ready.push_back({scored_before ? Tick{-1} : *out.score_ready,
                                 seq.prompt.id, pos});
            }
        } else if (scored_before) {
            ready.push_back({Tick{-1}, seq.prompt.id, pos});
        }
    }

    std::sort(ready.begin(), ready.end(), [](const Ready& a, const Ready& b) {
        return a.tick != b.tick ? a.tick < b.tick : a.id < b.id;
    });

    SelectionResult result;
    const size_t take = std::min(ready.size(), static_cast<size_t>(batch_size));
    std::vector<bool> taken(buffer.entries.size(), false);
    for (size_t i = 0; i < take; ++i) {
        result.ppo_batch.push_back(buffer.entries[ready[i].pos]);
        taken[ready[i].pos] = true;
    }
    result.short_batch = take < static_cast<size_t>(batch_size);

    std::vector<SequenceState> remaining;
    remaining.reserve(buffer.entries.size() - take);
    for (size_t pos = 0; pos < buffer.entries.size(); ++pos) {
        if (taken[pos]) continue;
        buffer.entries[pos].deferrals += 1;
        remaining.push_back(std::move(buffer.entries[pos]));
    }
    buffer.entries = std::move(remaining);
    result.deferred = static_cast<int>(buffer.entries.size());
    return result;
}

void DeltaController::validate() const {
    if (window < 1) throw ConfigError("controller window must be >= 1");
    if (delta_min > delta_max) throw ConfigError("delta_min must be <= delta_max");
    if (delta_min < 0) throw ConfigError("delta_min must be >= 0");
    if (inc < 1 || dec < 1) throw ConfigError("delta momenta must be >= 1");
}

namespace {
double mean_of(const std::vector<double>& v, size_t first, size_t last) {
    return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(first),
                           v.begin() + static_cast<std::ptrdiff_t>(last), 0.0) /
           static_cast<double>(last - first);
}
} // namespace

DeltaController::Update update_delta_alg1(DeltaController& ctrl, int delta) {
    ctrl.validate();
    const size_t w = static_cast<size_t>(ctrl.window);
    if (ctrl.reward_history.size() < 2 * w) return {delta, std::nullopt};
    const size_t n = ctrl.reward_history.size();
    const double d = mean_of(ctrl.reward_history, n - w, n) -
                     mean_of(ctrl.reward_history, n - 2 * w, n - w);
    const int sign = (d > 0.0) - (d < 0.0);
    const int change = std::max(1, delta / 4);
    const int next = std::clamp(delta - sign * change, ctrl.delta_min, ctrl.delta_max);
    ctrl.reward_history.erase(ctrl.reward_history.begin(),
                              ctrl.reward_history.end() - static_cast<std::ptrdiff_t>(w));
    return {next, d};
}

DeltaController::Update update_delta_eq4(DeltaController& ctrl, int delta, double slope) {
    ctrl.validate();
    const int next = slope > 0.0 ? std::min(ctrl.delta_max, delta + ctrl.inc)
                                 : std::max(ctrl.delta_min, delta - ctrl.dec);
    return {next, slope};
}

DeltaController::Update DeltaController::update(int delta) {
    switch (mode) {
    case DeltaMode::Fixed:
        return {delta, std::nullopt};
    case DeltaMode::Alg1WindowDiff:
        return update_delta_alg1(*this, delta);
    case DeltaMode::Eq4Slope: {
        validate();
        const size_t w = static_cast<size_t>(window);
        if (reward_history.size() < w + 1) return {delta, std::nullopt};
        // Telescoped window-mean of one-step differences.
        const size_t n = reward_history.size();
        const double slope =
            (reward_history[n - 1] - reward_history[n - 1 - w]) / static_cast<double>(w);
        if (n > w + 1)
            reward_history.erase(reward_history.begin(),
                                 reward_history.end() - static_cast<std::ptrdiff_t>(w + 1));
        return update_delta_eq4(*this, delta, slope);
    }
    }
    throw InternalError("unreachable controller mode");
}

} // namespace rlpipe
