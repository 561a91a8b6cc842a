#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rlpipe/engine.hpp"
#include "rlpipe/model.hpp"

namespace rlpipe {

// Inter-step overlap: run B + delta prompts per step, train on the first B
// that finish scoring, and carry the rest (with their partial work) into the
// next step.

class PromptSource {
public:
    virtual ~PromptSource() = default;
    virtual std::optional<PromptRequest> next(int step) = 0;
};

/// Serves `total` prompts of fixed length (total < 0 means unbounded).
class StreamPromptSource : public PromptSource {
public:
    StreamPromptSource(int prompt_len, std::int64_t total = -1)
        : prompt_len_(prompt_len), total_(total) {}
    std::optional<PromptRequest> next(int step) override {
        if (total_ >= 0 && issued_ >= total_) return std::nullopt;
        return PromptRequest{issued_++, prompt_len_, step};
    }
    std::int64_t issued() const { return issued_; }

private:
    int prompt_len_;
    std::int64_t total_;
    SeqId issued_ = 0;
};

struct OvercommitBuffer {
    std::vector<SequenceState> entries; // FIFO: carried-over first, then new
    int batch_size = 1;                 // B
    int delta = 0;                      // current overcommit
    int capacity() const { return batch_size + delta; }
};

/// Tops the buffer up to capacity, drawing each new sequence's response
/// length at admission. Returns the number of sequences admitted.
int refill(OvercommitBuffer& buffer, PromptSource& source, int step,
           const LengthDistribution& lengths, Rng& length_rng);

struct SelectionResult {
    std::vector<SequenceState> ppo_batch; // earliest score-ready first
    int deferred = 0;                     // sequences left in the buffer
    bool short_batch = false;             // fewer than B ever finished
};

/// Applies one step's timeline to the buffer: folds completed work into each
/// entry, pulls the B earliest-scored sequences out as the PPO batch (ties
/// by lower id; sequences scored in an earlier step count as ready at -1),
/// and increments deferral counters on everything left behind.
SelectionResult select_finished(OvercommitBuffer& buffer, const StepTimeline& timeline,
                                int batch_size);

enum class DeltaMode { Fixed, Alg1WindowDiff, Eq4Slope };

// Reward-driven overcommit controller. Both published update rules are
// implemented: the windowed-difference rule shrinks delta while rewards
// improve, the slope rule grows it. They move in opposite directions by
// construction; this artifact keeps both selectable and does not reconcile
// them.
struct DeltaController {
    DeltaMode mode = DeltaMode::Alg1WindowDiff;
    int window = 8;    // W
    int delta_min = 0;
    int delta_max = 8;
    int inc = 1;       // slope-rule momentum
    int dec = 1;
    std::vector<double> reward_history;

    void validate() const;
    void observe(double mean_reward) { reward_history.push_back(mean_reward); }

    struct Update {
        int delta = 0;
        std::optional<double> stat; // d (window diff) or s_t (slope)
    };
    /// Applies the configured rule if enough history has accumulated;
    /// otherwise returns delta unchanged with no stat.
    Update update(int delta);
};

/// Windowed-difference rule: d = mean(last W) - mean(previous W);
/// delta' = clip(delta - sign(d) * max(1, delta/4), min, max); sign(0) = 0.
/// History is truncated to the last W entries after each update.
DeltaController::Update update_delta_alg1(DeltaController& ctrl, int delta);

/// Slope rule on s_t: s_t > 0 grows delta by inc, s_t <= 0 shrinks by dec,
/// clipped to bounds.
DeltaController::Update update_delta_eq4(DeltaController& ctrl, int delta, double slope);

} // namespace rlpipe
