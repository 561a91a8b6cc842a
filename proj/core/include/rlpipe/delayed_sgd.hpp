#pragma once

#include <cstdint>
#include <vector>

#include "rlpipe/oracles.hpp"
#include "rlpipe/rng.hpp"

namespace rlpipe {

// Deferral-as-noise convergence experiment: gradient descent on a quadratic
// satisfying the (mu, L) assumptions, perturbed each step by a bounded
// deferral gradient d_k, checked against the closed-form bound.

enum class DeferralNoise { None, RandomUnit, Outward };

struct DelayedSgdConfig {
    int dim = 10;
    double mu = 0.1;        // strong-convexity constant assumed by the bound
    double lipschitz = 1.0; // gradient Lipschitz constant
    double eta = 1.0 / 1.1; // step size, must satisfy eta <= 1/(L + mu)
    double d_max = 0.0;     // deferral-gradient norm bound (saturated each step)
    double g_max = 64.0;    // gradient norm bound; asserted, enters no formula
    std::int64_t iterations = 10000;
    double initial_distance_sq = 25.0; // ||theta_0 - theta*||^2
    DeferralNoise noise = DeferralNoise::RandomUnit;
    // Hessian spectrum; empty selects mu + (L - mu) * i/dim for i = 1..dim,
    // which satisfies the (mu, L) assumptions with slack. A spectrum touching
    // mu exactly defeats the bound's (1 - 2*eta*mu) contraction, which is
    // tighter than the true worst-case per-step factor (1 - eta*mu)^2.
    std::vector<double> eigenvalues;

    void validate() const;
    DelayedSgdBoundInputs bound_inputs() const { return {mu, lipschitz, eta, d_max}; }
};

struct DelayedSgdResult {
    std::vector<double> distance_sq; // ||theta_k - theta*||^2, k = 0..iterations
    std::vector<double> bound;       // closed-form bound at each k
    bool within_bound = true;        // distance_sq[k] <= bound[k] for all k
};

/// Iterates theta_{k+1} = theta_k - eta (g_k + d_k) on the quadratic and
/// returns the measured squared-distance trajectory next to the bound curve.
DelayedSgdResult delayed_sgd_run(const DelayedSgdConfig& cfg, std::uint64_t seed);

} // namespace rlpipe
