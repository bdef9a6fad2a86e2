#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "edac/common.hpp"
#include "edac/rng.hpp"

namespace edac {

// Deterministic toy continuous-control environments. Actions live in
// [-1,1]^action_dim; rewards are quadratic costs, so always <= 0, and the
// undiscounted return lies in [horizon * r_min, 0].
struct EnvSpec {
    std::string name;
    int state_dim = 0;
    int action_dim = 0;
    int horizon = 0;
    double gamma = 0.99;
    double dt = 0.05;
    double mass = 1.0;
    double damping = 0.5;
    double goal = 0.0;
    double action_cost = 0.01;
    double gravity = 9.81;   // pendulum only
    double length = 1.0;     // pendulum only
    double max_speed = 8.0;  // pendulum only
};

inline EnvSpec env_spec(const std::string& name) {
    EnvSpec s;
    s.name = name;
    if (name == "pointmass1d") {
        s.state_dim = 2;  // [pos, vel]
        s.action_dim = 1;
        s.horizon = 100;
    } else if (name == "pointmass2d") {
        s.state_dim = 4;  // [px, py, vx, vy]
        s.action_dim = 2;
        s.horizon = 100;
    } else if (name == "pendulum") {
        s.state_dim = 3;  // [cos th, sin th, th_dot]
        s.action_dim = 1;
        s.horizon = 200;
    } else {
        throw ConfigError("unknown environment '" + name +
                          "' (valid: pointmass1d, pointmass2d, pendulum)");
    }
    return s;
}

inline std::vector<double> reset(const EnvSpec& spec, uint64_t seed) {
    Rng rng(seed);
    if (spec.name == "pointmass1d") return {rng.uniform(-1.0, 1.0), 0.0};
    if (spec.name == "pointmass2d")
        return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0, 0.0};
    if (spec.name == "pendulum") {
        const double theta = rng.uniform(-kTwoPi / 2.0, kTwoPi / 2.0);
        return {std::cos(theta), std::sin(theta), 0.0};
    }
    throw ConfigError("unknown environment '" + spec.name + "'");
}

struct StepResult {
    std::vector<double> next_state;
    double reward = 0.0;
    bool done = false;
};

namespace detail {
inline double clip_unit(double x) { return x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x); }
inline double wrap_pi(double theta) {
    const double pi = kTwoPi / 2.0;
    double t = std::fmod(theta + pi, kTwoPi);
    if (t < 0) t += kTwoPi;
    return t - pi;
}
}  // namespace detail

// Pure transition function. `step_index` is the 0-based index of the step
// being taken; done fires exactly when the horizon is reached. Rewards are
// r(s, a), evaluated at the pre-transition state.
inline StepResult step(const EnvSpec& spec, const std::vector<double>& state,
                       const std::vector<double>& action, int step_index) {
    if (static_cast<int>(state.size()) != spec.state_dim)
        throw ShapeError("step: state dimension mismatch for " + spec.name);
    if (static_cast<int>(action.size()) != spec.action_dim)
        throw ShapeError("step: action dimension mismatch for " + spec.name);
    for (double x : state)
        if (!std::isfinite(x)) throw NumericError("step: non-finite state in " + spec.name);

    StepResult out;
    double action_sq = 0.0;
    std::vector<double> a(action.size());
    for (size_t i = 0; i < action.size(); ++i) {
        a[i] = detail::clip_unit(action[i]);
        action_sq += a[i] * a[i];
    }

    if (spec.name == "pointmass1d" || spec.name == "pointmass2d") {
        const int dims = spec.action_dim;
        out.next_state.resize(2 * dims);
        double cost = 0.0;
        for (int i = 0; i < dims; ++i) {
            const double pos = state[i], vel = state[dims + i];
            out.next_state[i] = pos + spec.dt * vel;
            out.next_state[dims + i] = vel + spec.dt * (a[i] - spec.damping * vel);
            const double d = pos - spec.goal;
            cost += d * d;
        }
        out.reward = -cost - spec.action_cost * action_sq;
    } else if (spec.name == "pendulum") {
        const double theta = std::atan2(state[1], state[0]);
        const double theta_dot = state[2];
        double new_dot =
            theta_dot + spec.dt * ((spec.gravity / spec.length) * std::sin(theta) + a[0]);
        new_dot = std::min(spec.max_speed, std::max(-spec.max_speed, new_dot));
        const double new_theta = theta + spec.dt * new_dot;
        out.next_state = {std::cos(new_theta), std::sin(new_theta), new_dot};
        const double err = detail::wrap_pi(theta);
        out.reward = -err * err - spec.action_cost * action_sq;
    } else {
        throw ConfigError("unknown environment '" + spec.name + "'");
    }
    out.done = step_index + 1 >= spec.horizon;
    return out;
}

// Reference returns pinning the normalized score: 0 is a uniform random
// policy, 100 the trained expert.
struct ScoreAnchors {
    double random_ref = 0.0;
    double expert_ref = 0.0;
};

inline double normalized_score(double undiscounted_return, const ScoreAnchors& anchors) {
    if (!(anchors.expert_ref > anchors.random_ref))
        throw ConfigError("normalized_score: degenerate anchors (expert_ref <= random_ref)");
    return 100.0 * (undiscounted_return - anchors.random_ref) /
           (anchors.expert_ref - anchors.random_ref);
}

// Undiscounted return of one episode under an arbitrary action callback
// (state, rng) -> action.
template <typename ActionFn>
double rollout_return(const EnvSpec& spec, uint64_t reset_seed, Rng& rng, ActionFn&& act) {
    std::vector<double> s = reset(spec, reset_seed);
    double total = 0.0;
    for (int t = 0; t < spec.horizon; ++t) {
        StepResult r = step(spec, s, act(s, rng), t);
        total += r.reward;
        s = std::move(r.next_state);
    }
    return total;
}

inline double uniform_policy_return(const EnvSpec& spec, uint64_t reset_seed, Rng& rng) {
    return rollout_return(spec, reset_seed, rng, [&spec](const std::vector<double>&, Rng& r) {
        std::vector<double> a(spec.action_dim);
        for (auto& x : a) x = r.uniform(-1.0, 1.0);
        return a;
    });
}

// Mean uniform-policy return over `episodes` rollouts (the random_ref anchor).
inline double compute_random_ref(const EnvSpec& spec, int episodes, uint64_t seed) {
    Rng rng(seed);
    double sum = 0.0;
    for (int e = 0; e < episodes; ++e) sum += uniform_policy_return(spec, rng.raw(), rng);
    return sum / episodes;
}

}  // namespace edac
