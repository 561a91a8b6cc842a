#include "rlpipe/ppo.hpp"

#include <algorithm>
#include <cmath>

#include "rlpipe/errors.hpp"

namespace rlpipe {

void PpoHyperparams::validate() const {
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must be in [0,1]");
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must be in [0,1]");
    if (!(clip_epsilon > 0.0)) throw ConfigError("clip epsilon must be > 0");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (!(value_learning_rate > 0.0)) throw ConfigError("value learning rate must be > 0");
}

PolicyParams PolicyParams::uniform(int vocab) {
    PolicyParams p;
    p.vocab = vocab;
    p.theta.assign(static_cast<size_t>(vocab + 1) * vocab, 0.0);
    p.value.assign(static_cast<size_t>(vocab + 1), 0.0);
    p.validate();
    return p;
}

void PolicyParams::validate() const {
    if (vocab < 2) throw ConfigError("policy vocabulary must have >= 2 tokens");
    if (theta.size() != static_cast<size_t>(vocab + 1) * vocab)
        throw ConfigError("policy logit table has the wrong shape");
    if (value.size() != static_cast<size_t>(vocab + 1))
        throw ConfigError("value table has the wrong shape");
    for (double x : theta)
        if (!std::isfinite(x)) throw InputError("policy logits must be finite");
    for (double x : value)
        if (!std::isfinite(x)) throw InputError("state values must be finite");
}

std::vector<double> policy_logprobs(const PolicyParams& policy, int state) {
    std::vector<double> out(static_cast<size_t>(policy.vocab));
    double max_logit = policy.logit(state, 0);
    for (int a = 1; a < policy.vocab; ++a) max_logit = std::max(max_logit, policy.logit(state, a));
    double z = 0.0;
    for (int a = 0; a < policy.vocab; ++a) z += std::exp(policy.logit(state, a) - max_logit);
    const double log_z = std::log(z) + max_logit;
    for (int a = 0; a < policy.vocab; ++a) out[static_cast<size_t>(a)] = policy.logit(state, a) - log_z;
    return out;
}

void TrajectoryBatch::validate() const {
    for (const auto& s : samples) {
        if (s.response.empty()) throw InputError("empty response in batch");
        if (s.prefix_ends.empty())
            throw InputError("sample has no prefixes: exactly one final prefix required");
        if (!std::is_sorted(s.prefix_ends.begin(), s.prefix_ends.end()) ||
            std::adjacent_find(s.prefix_ends.begin(), s.prefix_ends.end()) != s.prefix_ends.end())
            throw InputError("prefix ends must be strictly ascending");
        if (s.prefix_ends.front() < 1)
            throw InputError("prefix ends must be >= 1");
        // The final prefix is the full response; anything longer or a second
        // full-length entry would mean zero or multiple final prefixes.
        if (static_cast<size_t>(s.prefix_ends.back()) != s.response.size())
            throw InputError("last prefix must cover the full response");
        if (s.old_logprobs.size() != s.response.size())
            throw InputError("old log-probs must align with response tokens");
        if (!s.values.empty() && s.values.size() != s.response.size() + 1)
            throw InputError("values must include one terminal entry");
    }
}

std::vector<double> compute_gae(const std::vector<double>& rewards,
                                const std::vector<double>& values, double gamma,
                                double lambda) {
    if (values.size() != rewards.size() + 1)
        throw InputError("values must have exactly one more entry than rewards");
    const size_t n = rewards.size();
    std::vector<double> adv(n, 0.0);
    double running = 0.0;
    for (size_t i = n; i-- > 0;) {
        const double delta = rewards[i] + gamma * values[i + 1] - values[i];
        running = delta + gamma * lambda * running;
        adv[i] = running;
    }
    return adv;
}

std::vector<double> terminal_rewards(size_t len, double reward) {
    std::vector<double> r(len, 0.0);
    if (len > 0) r.back() = reward;
    return r;
}

std::vector<double> sample_advantages(const TrajectorySample& sample, double gamma,
                                      double lambda) {
    if (sample.values.size() != sample.response.size() + 1)
        throw InputError("sample values not filled (call fill_values first)");
    return compute_gae(terminal_rewards(sample.response.size(), sample.reward),
                       sample.values, gamma, lambda);
}

double clipped_objective(const TrajectoryBatch& batch, const PolicyParams& policy,
                         const PpoHyperparams& hp) {
    batch.validate();
    hp.validate();
    const double eps = hp.clip_epsilon;
    double total = 0.0;
    size_t tokens = 0;
    for (const auto& s : batch.samples) {
        const auto adv = sample_advantages(s, hp.gamma, hp.lambda);
        for (size_t t = 0; t < s.response.size(); ++t) {
            const auto lp = policy_logprobs(policy, policy_state(s.response, t));
            const double ratio = std::exp(lp[static_cast<size_t>(s.response[t])] - s.old_logprobs[t]);
            if (!std::isfinite(ratio)) throw InputError("non-finite policy ratio");
            const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
            total += std::min(ratio * adv[t], clipped * adv[t]);
            ++tokens;
        }
    }
    return tokens > 0 ? total / static_cast<double>(tokens) : 0.0;
}

namespace {

// d objective / d logits of one token's terms, accumulated into grad.
// scale already includes the 1/token-count factor.
void accumulate_logprob_grad(const PolicyParams& policy, int state, int action,
                             double scale, std::vector<double>& grad) {
    const auto lp = policy_logprobs(policy, state);
    const size_t row = static_cast<size_t>(state) * policy.vocab;
    for (int a = 0; a < policy.vocab; ++a) {
        const double indicator = a == action ? 1.0 : 0.0;
        grad[row + a] += scale * (indicator - std::exp(lp[static_cast<size_t>(a)]));
    }
}

} // namespace

std::vector<double> clipped_objective_grad(const TrajectoryBatch& batch,
                                           const PolicyParams& policy,
                                           const PpoHyperparams& hp) {
    batch.validate();
    hp.validate();
    const double eps = hp.clip_epsilon;
    std::vector<double> grad(policy.theta.size(), 0.0);
    size_t tokens = 0;
    for (const auto& s : batch.samples) tokens += s.response.size();
    if (tokens == 0) return grad;
    const double inv = 1.0 / static_cast<double>(tokens);

    for (const auto& s : batch.samples) {
        const auto adv = sample_advantages(s, hp.gamma, hp.lambda);
        for (size_t t = 0; t < s.response.size(); ++t) {
            const int state = policy_state(s.response, t);
            const auto lp = policy_logprobs(policy, state);
            const double ratio = std::exp(lp[static_cast<size_t>(s.response[t])] - s.old_logprobs[t]);
            if (!std::isfinite(ratio)) throw InputError("non-finite policy ratio");
            const double a_t = adv[t];
            // min(r A, clip(r) A): the unclipped branch contributes A * dr;
            // the clip branch contributes A * dr inside the band and 0 outside.
            const double unclipped = ratio * a_t;
            const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * a_t;
            double dterm_dratio;
            if (unclipped <= clipped) {
                dterm_dratio = a_t;
            } else {
                const bool inside = ratio > 1.0 - eps && ratio < 1.0 + eps;
                dterm_dratio = inside ? a_t : 0.0;
            }
            if (dterm_dratio != 0.0) {
                // dr/dlogits = r * dlogpi/dlogits.
                accumulate_logprob_grad(policy, state, s.response[t],
                                        inv * dterm_dratio * ratio, grad);
            }
        }
    }
    return grad;
}

std::vector<double> grad_standard(const TrajectoryBatch& batch, const PolicyParams& policy,
                                  const PpoHyperparams& hp) {
    batch.validate();
    hp.validate();
    std::vector<double> grad(policy.theta.size(), 0.0);
    if (batch.samples.empty()) return grad;
    const double inv_b = 1.0 / static_cast<double>(batch.samples.size());
    for (const auto& s : batch.samples) {
        const auto adv = sample_advantages(s, hp.gamma, hp.lambda);
        double seq_adv = 0.0;
        for (double a : adv) seq_adv += a;
        for (size_t t = 0; t < s.response.size(); ++t) {
            accumulate_logprob_grad(policy, policy_state(s.response, t), s.response[t],
                                    inv_b * seq_adv, grad);
        }
    }
    return grad;
}

std::vector<double> grad_streamed(const TrajectoryBatch& batch, const PolicyParams& policy,
                                  const PpoHyperparams& hp) {
    batch.validate();
    hp.validate();
    std::vector<double> grad(policy.theta.size(), 0.0);
    if (batch.samples.empty()) return grad;
    const double inv_b = 1.0 / static_cast<double>(batch.samples.size());
    for (const auto& s : batch.samples) {
        const auto adv = sample_advantages(s, hp.gamma, hp.lambda);
        double seq_adv = 0.0;
        for (double a : adv) seq_adv += a;
        // Literal double sum over prefixes: only the final prefix's indicator
        // is 1, and that term performs exactly the arithmetic grad_standard
        // performs, so the results match bit for bit.
        int finals_seen = 0;
        for (size_t p = 0; p < s.prefix_ends.size(); ++p) {
            const bool is_final =
                static_cast<size_t>(s.prefix_ends[p]) == s.response.size();
            if (!is_final) continue;
            ++finals_seen;
            for (size_t t = 0; t < s.response.size(); ++t) {
                accumulate_logprob_grad(policy, policy_state(s.response, t), s.response[t],
                                        inv_b * seq_adv, grad);
            }
        }
        if (finals_seen != 1)
            throw InputError("sample must have exactly one final prefix");
    }
    return grad;
}

void ToyEnv::validate() const {
    if (vocab < 2) throw ConfigError("toy env vocabulary must have >= 2 tokens");
    if (vocab > 16) throw ConfigError("toy env vocabulary capped at 16 tokens");
    if (target_token < 0 || target_token >= vocab)
        throw ConfigError("target token must be a vocabulary token");
}

double ToyEnv::reward_of(const std::vector<int>& response) const {
    long count = std::count(response.begin(), response.end(), target_token);
    return reward_scale * static_cast<double>(count) + reward_bias;
}

TrajectorySample rollout(const ToyEnv& env, const PolicyParams& policy,
                         const PromptRequest& prompt, int length,
                         std::vector<int> prefix_ends, Rng& rng) {
    env.validate();
    policy.validate();
    if (length < 1) throw InputError("rollout length must be >= 1");
    if (policy.vocab != env.vocab) throw InputError("policy and env vocabularies differ");

    TrajectorySample s;
    s.prompt = prompt;
    s.response.reserve(static_cast<size_t>(length));
    s.old_logprobs.reserve(static_cast<size_t>(length));
    for (int t = 0; t < length; ++t) {
        const int state = policy_state(s.response, static_cast<size_t>(t));
        const auto lp = policy_logprobs(policy, state);
        const double u = rng.uniform01();
        double acc = 0.0;
        int action = policy.vocab - 1;
        for (int a = 0; a < policy.vocab; ++a) {
            acc += std::exp(lp[static_cast<size_t>(a)]);
            if (u < acc) {
                action = a;
                break;
            }
        }
        s.response.push_back(action);
        s.old_logprobs.push_back(lp[static_cast<size_t>(action)]);
    }
    s.reward = env.reward_of(s.response);
    s.prefix_ends = prefix_ends.empty() ? std::vector<int>{length} : std::move(prefix_ends);
    return s;
}

void fill_values(TrajectorySample& sample, const PolicyParams& policy) {
    sample.values.assign(sample.response.size() + 1, 0.0);
    for (size_t t = 0; t < sample.response.size(); ++t)
        sample.values[t] = policy.value[static_cast<size_t>(policy_state(sample.response, t))];
    sample.values.back() = 0.0; // terminal convention: terminated sequences end at 0
}

double toy_rlhf_step(const ToyEnv& env, PolicyParams& policy, const TrajectoryBatch& batch,
                     const PpoHyperparams& hp) {
    env.validate();
    hp.validate();
    batch.validate();
    if (batch.samples.empty()) return 0.0;

    const auto grad = clipped_objective_grad(batch, policy, hp);
    for (size_t i = 0; i < policy.theta.size(); ++i)
        policy.theta[i] += hp.learning_rate * grad[i];

    // Tabular least-squares value fit toward discounted returns.
    std::vector<double> sum(policy.value.size(), 0.0);
    std::vector<int> count(policy.value.size(), 0);
    double reward_total = 0.0;
    for (const auto& s : batch.samples) {
        reward_total += s.reward;
        const auto rewards = terminal_rewards(s.response.size(), s.reward);
        double ret = 0.0;
        std::vector<double> returns(s.response.size());
        for (size_t t = s.response.size(); t-- > 0;) {
            ret = rewards[t] + hp.gamma * ret;
            returns[t] = ret;
        }
        for (size_t t = 0; t < s.response.size(); ++t) {
            const auto state = static_cast<size_t>(policy_state(s.response, t));
            sum[state] += returns[t];
            count[state] += 1;
        }
    }
    for (size_t st = 0; st < policy.value.size(); ++st) {
        if (count[st] == 0) continue;
        const double target = sum[st] / count[st];
        policy.value[st] += hp.value_learning_rate * (target - policy.value[st]);
    }
    return reward_total / static_cast<double>(batch.samples.size());
}

} // namespace rlpipe
