#pragma once

#include <cstdint>

namespace rlpipe {

// Closed-form timing and convergence formulas. These are the analytic side
// of every simulator cross-check; they operate on reals even though the
// simulator runs integer ticks (callers convert and carry a one-chunk
// quantization tolerance).

struct TimingInputs {
    double generation = 0.0; // G
    double prefill = 0.0;    // P
    double residual = 0.0;   // R

    void validate() const; // all >= 0
};

struct TailInputs {
    double t_fast = 1.0;     // per-step time with no straggler
    double delta_slow = 0.0; // extra time a straggler adds
    double p = 0.0;          // probability a step pays the straggler penalty

    void validate() const;
};

/// Sequential step time G + P + R.
double t_sync(const TimingInputs& in);

/// Streamed step time max{G, P + R}.
double t_stream(const TimingInputs& in);

struct SpeedupBound {
    double exact = 1.0; // t_sync / t_stream
    double bound = 1.0; // 1 + min{G,P} / t_sync
};

/// Exact streaming speedup and its lower bound; exact >= bound for all
/// non-negative inputs (checked, throws InternalError otherwise).
SpeedupBound stream_speedup_lower_bound(const TimingInputs& in);

/// Overcommit speedup 1 + p * delta_slow / t_fast.
double overcommit_speedup(const TailInputs& in);

struct DelayedSgdBoundInputs {
    double mu = 0.1;     // strong convexity
    double lipschitz = 1.0; // gradient Lipschitz constant L
    double eta = 0.0;    // step size, must satisfy eta <= 1/(L+mu)
    double d_max = 0.0;  // deferral-gradient norm bound

    void validate() const;
};

/// (1 - 2*eta*mu)^k * d0 + 4*eta^2*d_max^2 / mu.
double delayed_sgd_bound(const DelayedSgdBoundInputs& in, std::int64_t k, double d0);

} // namespace rlpipe
