#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "edac/trainer.hpp"

namespace edac {

// Mean undiscounted return of the deterministic policy (action = tanh(mu)).
inline double compute_policy_ref(const EnvSpec& spec, const GaussianPolicy& policy, int episodes,
                                 uint64_t seed) {
    Rng rng(seed);
    double sum = 0.0;
    for (int e = 0; e < episodes; ++e)
        sum += rollout_return(spec, rng.raw(), rng,
                              [&policy](const std::vector<double>& s, Rng&) {
                                  return policy_mean_action(policy, s);
                              });
    return sum / episodes;
}

struct ReferenceRunOptions {
    int env_steps = 12000;
    int warmup_steps = 1000;
    int width = 32;
    int depth = 3;
    int batch_size = 64;
    int ckpt_every = 100;
    int eval_episodes = 20;
    int anchor_episodes = 200;
    double medium_lo = 30.0;
    double medium_hi = 40.0;

    static ReferenceRunOptions for_env(const EnvSpec& spec) {
        ReferenceRunOptions o;
        if (spec.name == "pendulum") {
            o.env_steps = 40000;
            o.warmup_steps = 2000;
        }
        return o;
    }
};

// Product of one online SAC run: the converged expert, the first checkpoint
// in the medium score band, the full replay buffer, and the score anchors.
struct ReferenceRun {
    GaussianPolicy expert;
    GaussianPolicy medium;
    double expert_score = 0.0;
    double medium_score = 0.0;
    size_t medium_step = 0;
    std::vector<Transition> replay;
    ScoreAnchors anchors;
};

// Online SAC (vanilla, two clipped critics) at desk scale. The expert is the
// final policy; the medium policy is the first periodic checkpoint whose
// deterministic normalized score lands in [medium_lo, medium_hi].
inline ReferenceRun train_reference_policies(const EnvSpec& spec, uint64_t seed,
                                             const ReferenceRunOptions& opt = {}) {
    TrainConfig cfg;
    cfg.algorithm = Algo::Sac;
    cfg.n = 2;
    cfg.gamma = spec.gamma;
    cfg.width = opt.width;
    cfg.depth = opt.depth;
    cfg.batch_size = opt.batch_size;

    Rng seeder(seed);
    cfg.seed = seeder.raw();
    Rng env_rng(seeder.raw());
    const uint64_t anchor_seed = seeder.raw();
    const uint64_t expert_eval_seed = seeder.raw();
    const uint64_t ckpt_eval_seed = seeder.raw();

    TrainerState st = init_trainer(cfg, spec.state_dim, spec.action_dim);

    ReferenceRun run;
    std::vector<std::pair<size_t, GaussianPolicy>> checkpoints;
    std::vector<double> s = reset(spec, env_rng.raw());
    int t_in_ep = 0;
    for (int t = 1; t <= opt.env_steps; ++t) {
        std::vector<double> a(spec.action_dim);
        if (t <= opt.warmup_steps)
            for (auto& x : a) x = env_rng.uniform(-1.0, 1.0);
        else
            a = policy_sample_action(st.policy, s, env_rng);
        StepResult res = step(spec, s, a, t_in_ep);
        // Horizon cutoffs are timeouts, not absorbing states: stored done = 0.
        run.replay.push_back({s, a, res.reward, res.next_state, false});
        s = std::move(res.next_state);
        ++t_in_ep;
        if (res.done) {
            s = reset(spec, env_rng.raw());
            t_in_ep = 0;
        }
        if (t > opt.warmup_steps) train_step(st, run.replay, cfg);
        if (t % opt.ckpt_every == 0) checkpoints.emplace_back(t, st.policy);
    }

    run.expert = st.policy;
    run.anchors.random_ref = compute_random_ref(spec, opt.anchor_episodes, anchor_seed);
    run.anchors.expert_ref =
        compute_policy_ref(spec, run.expert, opt.anchor_episodes, anchor_seed + 1);
    if (!(run.anchors.expert_ref > run.anchors.random_ref))
        throw NumericError("train_reference_policies: expert did not beat the random policy (" +
                           std::to_string(run.anchors.expert_ref) + " vs " +
                           std::to_string(run.anchors.random_ref) + ")");
    run.expert_score = normalized_score(
        compute_policy_ref(spec, run.expert, opt.eval_episodes, expert_eval_seed), run.anchors);

    double best_seen = -1e300;
    bool found = false;
    for (const auto& [ckpt_step, policy] : checkpoints) {
        const double score = normalized_score(
            compute_policy_ref(spec, policy, opt.eval_episodes, ckpt_eval_seed), run.anchors);
        best_seen = std::max(best_seen, score);
        if (score >= opt.medium_lo && score <= opt.medium_hi) {
            run.medium = policy;
            run.medium_score = score;
            run.medium_step = ckpt_step;
            found = true;
            break;
        }
    }
    if (!found)
        throw NumericError(
            "train_reference_policies: no checkpoint reached the medium band [" +
            std::to_string(opt.medium_lo) + ", " + std::to_string(opt.medium_hi) +
            "] within " + std::to_string(opt.env_steps) + " env steps (best score seen " +
            std::to_string(best_seen) + " across " + std::to_string(checkpoints.size()) +
            " checkpoints)");
    return run;
}

// ---- tier collection ---------------------------------------------------------

namespace detail {

template <typename ActionFn>
std::vector<Transition> rollout_transitions(const EnvSpec& spec, size_t n, Rng& rng,
                                            ActionFn&& act) {
    std::vector<Transition> out;
    out.reserve(n);
    while (out.size() < n) {
        std::vector<double> s = reset(spec, rng.raw());
        for (int t = 0; t < spec.horizon && out.size() < n; ++t) {
            std::vector<double> a = act(s, rng);
            StepResult res = step(spec, s, a, t);
            out.push_back({s, a, res.reward, res.next_state, false});
            s = std::move(res.next_state);
        }
    }
    return out;
}

}  // namespace detail

// Builds the offline dataset for one tier. Rollout tiers (random, medium,
// expert, medium-expert) produce exactly n transitions; the replay tiers
// return the entire recorded buffer (n is ignored for them).
inline OfflineDataset collect(const EnvSpec& spec, const std::string& tier,
                              const ReferenceRun& ref, size_t n, uint64_t seed) {
    if (n < 1) throw ConfigError("collect: n must be >= 1");
    OfflineDataset d;
    d.tier = tier;
    d.spec = spec;
    d.seed = seed;
    d.anchors = ref.anchors;
    Rng rng(seed);

    auto policy_actions = [](const GaussianPolicy& p) {
        return [&p](const std::vector<double>& s, Rng& r) { return policy_sample_action(p, s, r); };
    };
    auto uniform_actions = [&spec](const std::vector<double>&, Rng& r) {
        std::vector<double> a(spec.action_dim);
        for (auto& x : a) x = r.uniform(-1.0, 1.0);
        return a;
    };

    if (tier == "random") {
        d.transitions = detail::rollout_transitions(spec, n, rng, uniform_actions);
        d.behavior_score = 0.0;
    } else if (tier == "medium") {
        d.transitions = detail::rollout_transitions(spec, n, rng, policy_actions(ref.medium));
        d.behavior_score = ref.medium_score;
    } else if (tier == "expert") {
        d.transitions = detail::rollout_transitions(spec, n, rng, policy_actions(ref.expert));
        d.behavior_score = ref.expert_score;
    } else if (tier == "medium-expert") {
        d.transitions = detail::rollout_transitions(spec, n / 2, rng, policy_actions(ref.medium));
        auto expert_part =
            detail::rollout_transitions(spec, n - n / 2, rng, policy_actions(ref.expert));
        d.transitions.insert(d.transitions.end(), expert_part.begin(), expert_part.end());
        d.behavior_score = 0.5 * (ref.medium_score + ref.expert_score);
    } else if (tier == "medium-replay") {
        d.transitions.assign(ref.replay.begin(),
                             ref.replay.begin() + static_cast<long>(std::min(
                                                      ref.medium_step, ref.replay.size())));
        d.behavior_score = ref.medium_score;
    } else if (tier == "full-replay") {
        d.transitions = ref.replay;
        d.behavior_score = ref.expert_score;
    } else {
        std::string valid;
        for (const auto& t : known_tiers()) valid += (valid.empty() ? "" : ", ") + t;
        throw ConfigError("unknown tier '" + tier + "' (valid: " + valid + ")");
    }
    return d;
}

}  // namespace edac
