#pragma once

#include <cstdint>
#include <vector>

#include "rlpipe/model.hpp"
#include "rlpipe/rng.hpp"

namespace rlpipe {

struct PpoHyperparams {
    double gamma = 1.0;          // discount, [0,1]
    double lambda = 1.0;         // GAE parameter, [0,1]
    double clip_epsilon = 0.2;   // clip radius, > 0
    double learning_rate = 0.1;  // policy step size, > 0
    double value_learning_rate = 0.2;

    void validate() const;
};

// Tabular softmax policy over a small vocabulary; the conditioning state is
// the previous token (state 0 = beginning-of-sequence). The value table is
// indexed by the same states.
struct PolicyParams {
    int vocab = 4;
    std::vector<double> theta; // (vocab + 1) x vocab logits, row-major
    std::vector<double> value; // vocab + 1 state values

    int n_states() const { return vocab + 1; }
    double logit(int state, int action) const { return theta[static_cast<size_t>(state) * vocab + action]; }
    double& logit(int state, int action) { return theta[static_cast<size_t>(state) * vocab + action]; }

    static PolicyParams uniform(int vocab);
    void validate() const;
};

/// Conditioning state before emitting token t of `response`.
inline int policy_state(const std::vector<int>& response, size_t t) {
    return t == 0 ? 0 : response[t - 1] + 1;
}

/// Log-softmax of one policy row.
std::vector<double> policy_logprobs(const PolicyParams& policy, int state);

// One rollout as the PPO update consumes it. Prefix boundaries record how the
// response was streamed; exactly one prefix (the last) is final.
struct TrajectorySample {
    PromptRequest prompt;
    std::vector<int> response;        // y_i
    std::vector<int> prefix_ends;     // ascending chunk ends; back() == len(response)
    double reward = 0.0;              // scalar reward of the full response
    std::vector<double> values;       // per-state values incl. terminal: len+1
    std::vector<double> old_logprobs; // per-token log pi_old, captured at generation
};

struct TrajectoryBatch {
    std::vector<TrajectorySample> samples;
    void validate() const; // shape + exactly-one-final-prefix invariants
};

/// GAE advantages. `values` holds one entry per state including the terminal
/// state (|values| == |rewards| + 1; pass 0 for terminated sequences).
std::vector<double> compute_gae(const std::vector<double>& rewards,
                                const std::vector<double>& values, double gamma,
                                double lambda);

/// Terminal-reward vector for a response: zeros with `reward` at the end.
std::vector<double> terminal_rewards(size_t len, double reward);

/// Per-token GAE advantages of one sample (terminal scalar reward).
std::vector<double> sample_advantages(const TrajectorySample& sample, double gamma,
                                      double lambda);

/// Clipped surrogate: mean over tokens of min(r A, clip(r, 1-eps, 1+eps) A).
double clipped_objective(const TrajectoryBatch& batch, const PolicyParams& policy,
                         const PpoHyperparams& hp);

/// Analytic gradient of clipped_objective with respect to the policy logits.
std::vector<double> clipped_objective_grad(const TrajectoryBatch& batch,
                                           const PolicyParams& policy,
                                           const PpoHyperparams& hp);

/// Textbook estimator: (1/B) sum_i A(y_i) grad log pi(y_i | x_i), with the
/// sequence advantage A(y_i) = sum of per-token GAE advantages.
std::vector<double> grad_standard(const TrajectoryBatch& batch, const PolicyParams& policy,
                                  const PpoHyperparams& hp);

/// Streamed estimator evaluated literally: iterates every prefix and gates
/// each term by the final-prefix indicator. The surviving term runs the same
/// arithmetic as grad_standard, so the two agree exactly, element for
/// element.
std::vector<double> grad_streamed(const TrajectoryBatch& batch, const PolicyParams& policy,
                                  const PpoHyperparams& hp);

// Synthetic token task: reward is affine in the number of target tokens, so
// exact enumeration oracles exist at small sizes and the optimum is known.
struct ToyEnv {
    int vocab = 4;
    int target_token = 0;
    double reward_scale = 1.0;
    double reward_bias = 0.0;

    void validate() const;
    double reward_of(const std::vector<int>& response) const;
};

/// Samples a rollout of `length` tokens under the current policy, capturing
/// old log-probs and the reward at generation time. Values are left empty;
/// fill them at scoring time with fill_values().
TrajectorySample rollout(const ToyEnv& env, const PolicyParams& policy,
                         const PromptRequest& prompt, int length,
                         std::vector<int> prefix_ends, Rng& rng);

/// Writes current per-state values (terminal 0) into the sample.
void fill_values(TrajectorySample& sample, const PolicyParams& policy);

/// One PPO update on a scored batch: clipped-gradient ascent on the policy
/// and an in-place tabular value fit toward discounted returns. Returns the
/// batch mean reward.
double toy_rlhf_step(const ToyEnv& env, PolicyParams& policy, const TrajectoryBatch& batch,
                     const PpoHyperparams& hp);

} // namespace rlpipe
