#include "rlpipe/delayed_sgd.hpp"

#include <cmath>

#include "rlpipe/errors.hpp"

namespace rlpipe {

void DelayedSgdConfig::validate() const {
    if (dim < 1) throw ConfigError("delayed-sgd dimension must be >= 1");
    if (!(mu > 0.0) || !(mu <= lipschitz))
        throw ConfigError("delayed-sgd requires 0 < mu <= L");
    if (!(eta > 0.0) || eta > 1.0 / (lipschitz + mu))
        throw ConfigError("delayed-sgd requires 0 < eta <= 1/(L+mu)");
    if (d_max < 0.0 || g_max < 0.0)
        throw ConfigError("delayed-sgd norm bounds must be >= 0");
    if (iterations < 0) throw ConfigError("delayed-sgd iterations must be >= 0");
    if (!(initial_distance_sq > 0.0))
        throw ConfigError("delayed-sgd initial distance must be > 0");
    if (!eigenvalues.empty()) {
        if (static_cast<int>(eigenvalues.size()) != dim)
            throw ConfigError("delayed-sgd spectrum size must match dim");
        for (double ev : eigenvalues)
            if (ev < mu || ev > lipschitz)
                throw ConfigError("delayed-sgd spectrum must lie within [mu, L]");
    }
}

DelayedSgdResult delayed_sgd_run(const DelayedSgdConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const size_t n = static_cast<size_t>(cfg.dim);

    std::vector<double> eigs = cfg.eigenvalues;
    if (eigs.empty()) {
        eigs.resize(n);
        for (size_t i = 0; i < n; ++i) {
            eigs[i] = cfg.mu + (cfg.lipschitz - cfg.mu) * static_cast<double>(i + 1) /
                                   static_cast<double>(n);
        }
    }

    Rng rng = Rng::derive(seed, "delayed-sgd");
    // Error vector in the Hessian eigenbasis; theta* is the origin there.
    std::vector<double> e(n);
    double norm_sq = 0.0;
    for (auto& x : e) {
        x = rng.normal();
        norm_sq += x * x;
    }
    const double scale = std::sqrt(cfg.initial_distance_sq / norm_sq);
    for (auto& x : e) x *= scale;

    DelayedSgdResult result;
    result.distance_sq.reserve(static_cast<size_t>(cfg.iterations) + 1);
    result.bound.reserve(static_cast<size_t>(cfg.iterations) + 1);

    std::vector<double> d(n, 0.0);
    const auto bound_in = cfg.bound_inputs();
    for (std::int64_t k = 0;; ++k) {
        double dist = 0.0;
        for (double x : e) dist += x * x;
        // theta_0 is constructed with squared distance exactly d0; the k = 0
        // recomputation only adds rounding noise on top of that definition.
        if (k == 0) dist = cfg.initial_distance_sq;
        result.distance_sq.push_back(dist);
        result.bound.push_back(delayed_sgd_bound(bound_in, k, cfg.initial_distance_sq));
        if (dist > result.bound.back()) result.within_bound = false;
        if (k == cfg.iterations) break;

        double g_norm_sq = 0.0;
        for (size_t i = 0; i < n; ++i) g_norm_sq += eigs[i] * e[i] * eigs[i] * e[i];
        if (g_norm_sq > cfg.g_max * cfg.g_max)
            throw InputError("gradient norm exceeded the configured g_max");

        switch (cfg.noise) {
        case DeferralNoise::None:
            break;
        case DeferralNoise::RandomUnit: {
            double dn = 0.0;
            for (auto& x : d) {
                x = rng.normal();
                dn += x * x;
            }
            const double s = dn > 0.0 ? cfg.d_max / std::sqrt(dn) : 0.0;
            for (auto& x : d) x *= s;
            break;
        }
        case DeferralNoise::Outward: {
            const double en = std::sqrt(dist);
            for (size_t i = 0; i < n; ++i) d[i] = en > 0.0 ? cfg.d_max * e[i] / en : 0.0;
            break;
        }
        }
        for (size_t i = 0; i < n; ++i) e[i] -= cfg.eta * (eigs[i] * e[i] + d[i]);
    }
    return result;
}

} // namespace rlpipe
