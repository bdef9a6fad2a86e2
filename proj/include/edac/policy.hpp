#pragma once

#include <cmath>
#include <vector>

#include "edac/mlp.hpp"
#include "edac/normal.hpp"

namespace edac {

inline constexpr double kLogSigmaMin = -20.0;
inline constexpr double kLogSigmaMax = 2.0;
inline constexpr double kTanhEps = 1e-6;
// Largest pre-squash magnitude for which std::tanh stays strictly below 1 in
// f64; beyond ~19 it rounds to exactly 1 and the action leaves (-1, 1).
inline constexpr double kPreSquashClamp = 18.0;

// tanh-squashed Gaussian actor. The trunk maps the state to
// (mu, log sigma) per action dimension; log sigma is clamped to
// [-20, 2] before exponentiation.
struct GaussianPolicy {
    Mlp trunk;
    int action_dim = 0;

    bool operator==(const GaussianPolicy& o) const {
        return trunk == o.trunk && action_dim == o.action_dim;
    }
};

inline GaussianPolicy init_policy(int state_dim, int action_dim, const std::vector<int>& hidden,
                                  uint64_t seed) {
    std::vector<int> widths{state_dim};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(2 * action_dim);
    return GaussianPolicy{init_params(widths, seed), action_dim};
}

struct PolicySample {
    NodeId action;    // B x A, strictly inside (-1, 1)
    NodeId log_prob;  // B x 1
    NodeId mean;      // B x A, pre-squash mu
};

// Reparametrized sample: action = tanh(mu + sigma * noise), with the
// tanh change-of-variables correction on the log density. `noise` is
// injected (standard normal draws) so the sample is a deterministic,
// differentiable function of the trunk parameters.
inline PolicySample policy_sample(Graph& g, const MlpNodes& trunk, int action_dim, NodeId state,
                                  const Tensor& noise, double tanh_eps = kTanhEps) {
    NodeId out = mlp_forward(g, trunk, state);
    if (g.cols(out) != 2 * action_dim)
        throw ShapeError("policy_sample: trunk output width " + std::to_string(g.cols(out)) +
                         " does not match 2*action_dim");
    const int batch = g.rows(out);
    NodeId mu = g.slice(out, 0, batch, 0, action_dim);
    NodeId log_sigma = g.clamp(g.slice(out, 0, batch, action_dim, 2 * action_dim),
                               kLogSigmaMin, kLogSigmaMax);
    NodeId sigma = g.exp(log_sigma);

    NodeId eps = g.constant(noise);
    if (g.rows(eps) != batch || g.cols(eps) != action_dim)
        throw ShapeError("policy_sample: noise shape mismatch");
    NodeId u = g.clamp(g.add(mu, g.mul(sigma, eps)), -kPreSquashClamp, kPreSquashClamp);
    NodeId action = g.tanh(u);

    // Gaussian log density of the pre-squash sample. (u - mu)/sigma is kept
    // symbolic so the reparametrized gradient flows through mu and sigma.
    NodeId z = g.div(g.sub(u, mu), sigma);
    NodeId per_dim = g.neg(g.add(g.mul_scalar(g.square(z), 0.5), log_sigma));
    NodeId base = g.add_scalar(g.row_sum(per_dim),
                               -0.5 * std::log(kTwoPi) * static_cast<double>(action_dim));

    // Squash correction: sum_dims log(1 - tanh(u)^2 + eps).
    NodeId one = g.broadcast(g.constant(1.0), batch, action_dim);
    NodeId correction = g.row_sum(g.log(g.add_scalar(g.sub(one, g.square(action)), tanh_eps)));
    return PolicySample{action, g.sub(base, correction), mu};
}

// Deterministic evaluation action: tanh(mu). Graph-free.
inline std::vector<double> policy_mean_action(const GaussianPolicy& p,
                                              const std::vector<double>& state) {
    std::vector<double> out = mlp_forward_plain(p.trunk, state);
    std::vector<double> a(p.action_dim);
    for (int i = 0; i < p.action_dim; ++i)
        a[i] = std::tanh(std::min(kPreSquashClamp, std::max(-kPreSquashClamp, out[i])));
    return a;
}

// Stochastic action sampled with the caller's RNG. Graph-free.
inline std::vector<double> policy_sample_action(const GaussianPolicy& p,
                                                const std::vector<double>& state, Rng& rng) {
    std::vector<double> out = mlp_forward_plain(p.trunk, state);
    std::vector<double> a(p.action_dim);
    for (int i = 0; i < p.action_dim; ++i) {
        const double mu = out[i];
        double ls = out[p.action_dim + i];
        ls = std::min(kLogSigmaMax, std::max(kLogSigmaMin, ls));
        double u = mu + std::exp(ls) * rng.normal();
        u = std::min(kPreSquashClamp, std::max(-kPreSquashClamp, u));
        a[i] = std::tanh(u);
    }
    return a;
}

}  // namespace edac
