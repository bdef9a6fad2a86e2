#pragma once

#include <cmath>
#include <vector>

#include "edac/dataset.hpp"
#include "edac/ensemble.hpp"
#include "edac/policy.hpp"

namespace edac {

inline Tensor draw_normal(Rng& rng, int r, int c) {
    Tensor t(r, c);
    for (auto& x : t.v) x = rng.normal();
    return t;
}

// Entropy temperature. In auto mode beta = exp(log_beta) is adapted toward
// a target entropy; in fixed mode it stays at the configured value.
struct Temperature {
    enum class Mode { Fixed, Auto };
    Mode mode = Mode::Auto;
    double beta = 1.0;
    double target_entropy = 0.0;
    double log_beta = 0.0;

    static Temperature fixed(double beta) { return {Mode::Fixed, beta, 0.0, std::log(beta)}; }
    static Temperature automatic(int action_dim, double initial_beta = 1.0) {
        return {Mode::Auto, initial_beta, -static_cast<double>(action_dim),
                std::log(initial_beta)};
    }

    bool operator==(const Temperature& o) const {
        return mode == o.mode && beta == o.beta && target_entropy == o.target_entropy &&
               log_beta == o.log_beta;
    }
};

// ---- Bellman target --------------------------------------------------------

// y = r + gamma * (1 - done) * (min_j Q'_j(s', a') - beta log pi(a'|s')) with
// one fresh next-action sample per row. Computed on a throwaway graph and
// returned as plain values, so the target is a constant to every later loss.
inline Tensor bellman_target(const QEnsemble& ensemble, const GaussianPolicy& policy,
                             const Batch& batch, double beta, double gamma,
                             const Tensor& next_noise) {
    static thread_local Graph g;
    g.reset();
    MlpNodes trunk = insert_params(g, policy.trunk, false);
    NodeId s_next = g.constant(batch.s_next);
    PolicySample ps = policy_sample(g, trunk, policy.action_dim, s_next, next_noise);
    EnsembleNodes targets = insert_ensemble(g, ensemble, Which::Targets, false);
    NodeId qmin = g.min_axis(q_stack(g, q_forward(g, targets, s_next, ps.action)), 1);
    NodeId v = g.sub(qmin, g.mul_scalar(ps.log_prob, beta));
    NodeId not_done = g.sub(g.broadcast(g.constant(1.0), batch.size(), 1), g.constant(batch.done));
    NodeId y = g.add(g.constant(batch.r), g.mul_scalar(g.mul(not_done, v), gamma));
    return g.value(y);
}

// REM target: the same bootstrap with the ensemble min replaced by the convex
// combination sum_j xi_j Q'_j.
inline Tensor bellman_target_rem(const QEnsemble& ensemble, const GaussianPolicy& policy,
                                 const Batch& batch, double beta, double gamma,
                                 const Tensor& next_noise, const std::vector<double>& xi) {
    static thread_local Graph g;
    g.reset();
    MlpNodes trunk = insert_params(g, policy.trunk, false);
    NodeId s_next = g.constant(batch.s_next);
    PolicySample ps = policy_sample(g, trunk, policy.action_dim, s_next, next_noise);
    EnsembleNodes targets = insert_ensemble(g, ensemble, Which::Targets, false);
    auto qs = q_forward(g, targets, s_next, ps.action);
    NodeId combo = g.mul_scalar(qs[0], xi[0]);
    for (size_t j = 1; j < qs.size(); ++j) combo = g.add(combo, g.mul_scalar(qs[j], xi[j]));
    NodeId v = g.sub(combo, g.mul_scalar(ps.log_prob, beta));
    NodeId not_done = g.sub(g.broadcast(g.constant(1.0), batch.size(), 1), g.constant(batch.done));
    NodeId y = g.add(g.constant(batch.r), g.mul_scalar(g.mul(not_done, v), gamma));
    return g.value(y);
}

// ---- critic losses ----------------------------------------------------------

// Per-member Bellman MSE sharing one target: loss_i = mean_b (Q_i(s,a) - y)^2.
inline std::vector<NodeId> q_loss_sac_n(Graph& g, const std::vector<NodeId>& member_qs,
                                        NodeId y_const) {
    std::vector<NodeId> losses;
    losses.reserve(member_qs.size());
    for (NodeId q : member_qs) losses.push_back(g.mean(g.square(g.sub(q, y_const))));
    return losses;
}

enum class EsVariant { Cosine, RawInner };

// d(sum_b Q)/da for one member; rows are per-sample action gradients.
inline NodeId action_gradient(Graph& g, const MlpNodes& member, NodeId s, NodeId a_leaf) {
    NodeId q = mlp_forward(g, member, g.concat(s, a_leaf, 1));
    return g.gradient(g.sum(q), {a_leaf}).at(a_leaf);
}

// Row-wise cosine similarity of two gradient batches. The normalization is
// stabilized so a zero-gradient member yields 0 rather than 0/0.
inline NodeId cosine_rows(Graph& g, NodeId gi, NodeId gj, bool stop_normalizer) {
    NodeId num = g.row_sum(g.mul(gi, gj));
    NodeId ni = g.sqrt(g.add_scalar(g.row_sum(g.square(gi)), 1e-24));
    NodeId nj = g.sqrt(g.add_scalar(g.row_sum(g.square(gj)), 1e-24));
    NodeId denom = g.mul(ni, nj);
    if (stop_normalizer) denom = g.constant(g.value(denom));
    return g.div(num, denom);
}

// ES_{phi_i, phi_j}(s, a) averaged over the batch, as a differentiable node.
inline NodeId es_pair(Graph& g, const EnsembleNodes& members, NodeId s, NodeId a_leaf, int i,
                      int j, EsVariant variant = EsVariant::Cosine, bool stop_normalizer = false) {
    if (i == j) throw ConfigError("es_pair: requires i != j");
    NodeId gi = action_gradient(g, members.nets[i], s, a_leaf);
    NodeId gj = action_gradient(g, members.nets[j], s, a_leaf);
    NodeId rows = variant == EsVariant::Cosine ? cosine_rows(g, gi, gj, stop_normalizer)
                                               : g.row_sum(g.mul(gi, gj));
    return g.mean(rows);
}

struct EdacLoss {
    std::vector<NodeId> member_losses;  // MSE_i + (eta/(N-1)) * full ES sum
    NodeId total;                       // sum_i MSE_i + (eta/(N-1)) * full ES sum
    NodeId es_sum;                      // sum over ordered pairs of mean_b ES (kNoNode if eta=0)
    bool zero_gradient_member = false;
};

// Alg.-1 critic objective: SAC-N MSEs plus (eta/(N-1)) * sum_{i != j} ES at the
// dataset actions. The ES sum ranges over ordered pairs; its parameter
// gradient is second-order (the ES term contains d Q/d a as graph nodes).
// With eta = 0 this is exactly q_loss_sac_n.
inline EdacLoss q_loss_edac(Graph& g, const EnsembleNodes& members,
                            const std::vector<NodeId>& member_qs, NodeId s, NodeId a_leaf,
                            NodeId y_const, double eta, EsVariant variant = EsVariant::Cosine,
                            bool stop_normalizer = false) {
    const int n = static_cast<int>(members.nets.size());
    if (n < 2) throw ConfigError("q_loss_edac: N must be >= 2");
    EdacLoss out;
    std::vector<NodeId> mse = q_loss_sac_n(g, member_qs, y_const);
    out.es_sum = kNoNode;
    if (eta == 0.0) {
        out.member_losses = mse;
        out.total = mse[0];
        for (int i = 1; i < n; ++i) out.total = g.add(out.total, mse[i]);
        return out;
    }

    std::vector<NodeId> grads;
    grads.reserve(n);
    for (int i = 0; i < n; ++i) {
        NodeId gi = action_gradient(g, members.nets[i], s, a_leaf);
        const Tensor gv = g.value(gi);
        for (int row = 0; row < gv.rows; ++row) {
            double norm_sq = 0.0;
            for (int c = 0; c < gv.cols; ++c) norm_sq += gv.at(row, c) * gv.at(row, c);
            if (norm_sq < 1e-24) out.zero_gradient_member = true;
        }
        grads.push_back(gi);
    }
    NodeId unordered = kNoNode;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            NodeId rows = variant == EsVariant::Cosine
                              ? cosine_rows(g, grads[i], grads[j], stop_normalizer)
                              : g.row_sum(g.mul(grads[i], grads[j]));
            NodeId pair_mean = g.mean(rows);
            unordered = unordered == kNoNode ? pair_mean : g.add(unordered, pair_mean);
        }
    out.es_sum = g.mul_scalar(unordered, 2.0);  // ordered pairs: (i,j) and (j,i)
    NodeId es_term = g.mul_scalar(out.es_sum, eta / static_cast<double>(n - 1));
    out.member_losses.reserve(n);
    for (int i = 0; i < n; ++i) out.member_losses.push_back(g.add(mse[i], es_term));
    out.total = mse[0];
    for (int i = 1; i < n; ++i) out.total = g.add(out.total, mse[i]);
    out.total = g.add(out.total, es_term);
    return out;
}

// REM critic loss: one Bellman MSE on the convex combination sum_j xi_j Q_j.
inline NodeId q_loss_rem(Graph& g, const std::vector<NodeId>& member_qs, NodeId y_const,
                         const std::vector<double>& xi) {
    NodeId combo = g.mul_scalar(member_qs[0], xi[0]);
    for (size_t j = 1; j < member_qs.size(); ++j)
        combo = g.add(combo, g.mul_scalar(member_qs[j], xi[j]));
    return g.mean(g.square(g.sub(combo, y_const)));
}

// Normalized-uniform simplex draw: xi_n = xi'_n / sum_k xi'_k, xi'_k ~ U(0,1).
inline std::vector<double> draw_simplex(Rng& rng, int n) {
    std::vector<double> xi(n);
    double total = 0.0;
    for (auto& x : xi) {
        x = rng.uniform01();
        total += x;
    }
    for (auto& x : xi) x /= total;
    return xi;
}

// Simplified conservative penalty: alpha * (mean Q over sampled actions -
// mean Q over dataset actions), per member. The m samples per row are half
// uniform on [-1,1]^A and half draws from the current policy; both are
// constants in the critic graph.
inline std::vector<NodeId> cql_penalty_lite(Graph& g, const EnsembleNodes& members,
                                            const Batch& batch, const GaussianPolicy& policy,
                                            const std::vector<NodeId>& member_qs_data,
                                            double alpha, int m, Rng& rng) {
    if (m < 2 || m % 2 != 0) throw ConfigError("cql_penalty_lite: m must be even and >= 2");
    const int b = batch.size(), ad = policy.action_dim, sd = batch.s.cols;
    Tensor s_rep(b * m, sd);
    Tensor a_samp(b * m, ad);
    for (int row = 0; row < b; ++row) {
        std::vector<double> state(batch.s.v.begin() + static_cast<size_t>(row) * sd,
                                  batch.s.v.begin() + static_cast<size_t>(row + 1) * sd);
        for (int k = 0; k < m; ++k) {
            const int out_row = row * m + k;
            for (int j = 0; j < sd; ++j) s_rep.at(out_row, j) = state[j];
            if (k < m / 2) {
                for (int j = 0; j < ad; ++j) a_samp.at(out_row, j) = rng.uniform(-1.0, 1.0);
            } else {
                std::vector<double> a = policy_sample_action(policy, state, rng);
                for (int j = 0; j < ad; ++j) a_samp.at(out_row, j) = a[j];
            }
        }
    }
    NodeId s_node = g.constant(s_rep);
    NodeId a_node = g.constant(a_samp);
    auto qs_samp = q_forward(g, members, s_node, a_node);
    std::vector<NodeId> penalties;
    penalties.reserve(members.nets.size());
    for (size_t j = 0; j < members.nets.size(); ++j)
        penalties.push_back(
            g.mul_scalar(g.sub(g.mean(qs_samp[j]), g.mean(member_qs_data[j])), alpha));
    return penalties;
}

// -c * mean_b Var_j(Q_j(s,a)) with the population (divisor N) convention;
// minimizing the loss therefore pushes the ensemble spread up.
inline NodeId variance_regularizer(Graph& g, const std::vector<NodeId>& member_qs, double c) {
    const double n = static_cast<double>(member_qs.size());
    NodeId stacked = q_stack(g, member_qs);
    NodeId mean_q = g.mul_scalar(g.row_sum(stacked), 1.0 / n);
    NodeId mean_sq = g.mul_scalar(g.row_sum(g.square(stacked)), 1.0 / n);
    NodeId var = g.sub(mean_sq, g.square(mean_q));
    return g.mul_scalar(g.mean(var), -c);
}

// ---- policy objective --------------------------------------------------------

struct PolicyObjective {
    NodeId loss;           // minimized: -(mean_b (min_j Q_j(s, a~) - beta log pi))
    NodeId log_prob_mean;  // mean_b log pi(a~|s)
    NodeId q_pi_mean;      // ensemble-mean Q at the policy actions
};

inline PolicyObjective policy_loss(Graph& g, const EnsembleNodes& members, const MlpNodes& trunk,
                                   int action_dim, NodeId s, const Tensor& noise, double beta) {
    PolicySample ps = policy_sample(g, trunk, action_dim, s, noise);
    auto qs = q_forward(g, members, s, ps.action);
    NodeId stacked = q_stack(g, qs);
    NodeId qmin = g.min_axis(stacked, 1);
    NodeId objective = g.mean(g.sub(qmin, g.mul_scalar(ps.log_prob, beta)));
    return PolicyObjective{g.neg(objective), g.mean(ps.log_prob), g.mean(stacked)};
}

}  // namespace edac
