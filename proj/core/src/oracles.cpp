#include "rlpipe/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "rlpipe/errors.hpp"

namespace rlpipe {

void TimingInputs::validate() const {
    if (generation < 0.0 || prefill < 0.0 || residual < 0.0)
        throw ConfigError("timing inputs must be >= 0");
}

void TailInputs::validate() const {
    if (t_fast <= 0.0) throw ConfigError("t_fast must be > 0");
    if (delta_slow < 0.0) throw ConfigError("delta_slow must be >= 0");
    if (p < 0.0 || p > 1.0) throw ConfigError("p must be in [0,1]");
}

double t_sync(const TimingInputs& in) {
    in.validate();
    return in.generation + in.prefill + in.residual;
}

double t_stream(const TimingInputs& in) {
    in.validate();
    return std::max(in.generation, in.prefill + in.residual);
}

SpeedupBound stream_speedup_lower_bound(const TimingInputs& in) {
    const double sync = t_sync(in);
    const double stream = t_stream(in);
    if (stream <= 0.0) throw ConfigError("speedup undefined for t_stream = 0");
    SpeedupBound out;
    out.exact = sync / stream;
    out.bound = 1.0 + std::min(in.generation, in.prefill) / sync;
    if (out.exact < out.bound)
        throw InternalError("stream speedup fell below its own lower bound");
    return out;
}

double overcommit_speedup(const TailInputs& in) {
    in.validate();
    return 1.0 + in.p * in.delta_slow / in.t_fast;
}

void DelayedSgdBoundInputs::validate() const {
    if (!(mu > 0.0) || !(lipschitz >= mu))
        throw ConfigError("delayed-sgd bound requires 0 < mu <= L");
    if (!(eta > 0.0) || eta > 1.0 / (lipschitz + mu))
        throw ConfigError("delayed-sgd bound requires 0 < eta <= 1/(L+mu)");
    if (d_max < 0.0) throw ConfigError("d_max must be >= 0");
    if (!(2.0 * eta * mu < 1.0))
        throw ConfigError("delayed-sgd bound requires 2*eta*mu < 1");
}

double delayed_sgd_bound(const DelayedSgdBoundInputs& in, std::int64_t k, double d0) {
    in.validate();
    if (k < 0) throw InputError("iteration index must be >= 0");
    const double contraction = std::pow(1.0 - 2.0 * in.eta * in.mu, static_cast<double>(k));
    return contraction * d0 + 4.0 * in.eta * in.eta * in.d_max * in.d_max / in.mu;
}

} // namespace rlpipe
