#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "edac/losses.hpp"

namespace edac {

enum class Algo { Sac, SacN, Edac, Rem, CqlLite, VarReg };

inline std::string algo_name(Algo a) {
    switch (a) {
        case Algo::Sac: return "sac";
        case Algo::SacN: return "sac-n";
        case Algo::Edac: return "edac";
        case Algo::Rem: return "rem";
        case Algo::CqlLite: return "cql-lite";
        case Algo::VarReg: return "var-reg";
    }
    return "?";
}

inline Algo algo_from_name(const std::string& s) {
    for (Algo a : {Algo::Sac, Algo::SacN, Algo::Edac, Algo::Rem, Algo::CqlLite, Algo::VarReg})
        if (algo_name(a) == s) return a;
    throw ConfigError("unknown algorithm '" + s +
                      "' (valid: sac, sac-n, edac, rem, cql-lite, var-reg)");
}

// Every scalar of the training loop. Defaults follow the SAC protocol the
// experiments inherit: Adam 3e-4, gamma 0.99, target smoothing rho 0.995,
// batch 256, 3 hidden layers.
struct TrainConfig {
    Algo algorithm = Algo::SacN;
    int n = 10;             // ensemble size
    double eta = 0.0;       // ES weight (edac only)
    double gamma = 0.99;
    double rho = 0.995;
    bool beta_auto = true;
    double beta = 1.0;      // fixed value, or initial value in auto mode
    double lr_q = 3e-4;
    double lr_policy = 3e-4;
    int batch_size = 256;
    int total_steps = 50000;
    uint64_t seed = 0;
    int width = 256;
    int depth = 3;
    // Baseline knobs.
    double cql_alpha = 1.0;
    int cql_m = 4;
    double var_c = 1.0;
    EsVariant es_variant = EsVariant::Cosine;
    bool es_stop_normalizer = false;

    std::vector<int> hidden() const { return std::vector<int>(depth, width); }

    void validate() const {
        if (n < 2) throw ConfigError("config: N must be >= 2");
        if (eta < 0.0) throw ConfigError("config: eta must be >= 0");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("config: gamma must be in (0,1]");
        if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("config: rho must be in [0,1]");
        if (algorithm != Algo::Edac && eta != 0.0)
            throw ConfigError("config: eta must be 0 unless algorithm is edac");
        if (algorithm == Algo::Sac && n != 2)
            throw ConfigError("config: vanilla sac requires N = 2");
        if (beta <= 0.0) throw ConfigError("config: beta must be > 0");
        if (batch_size < 1 || total_steps < 0) throw ConfigError("config: bad batch/steps");
        if (width < 1 || depth < 1) throw ConfigError("config: bad network size");
        if (cql_alpha < 0.0) throw ConfigError("config: cql_alpha must be >= 0");
        if (var_c < 0.0) throw ConfigError("config: var_c must be >= 0");
    }
};

// ---- Adam -------------------------------------------------------------------

struct AdamState {
    std::vector<std::vector<double>> m, v;
    int64_t t = 0;

    void init_like(const std::vector<Tensor*>& params) {
        m.clear();
        v.clear();
        for (const Tensor* p : params) {
            m.emplace_back(p->v.size(), 0.0);
            v.emplace_back(p->v.size(), 0.0);
        }
        t = 0;
    }

    bool operator==(const AdamState& o) const { return m == o.m && v == o.v && t == o.t; }
};

inline void adam_step(AdamState& st, const std::vector<Tensor*>& params,
                      const std::vector<Tensor>& grads, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    st.t += 1;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
    for (size_t p = 0; p < params.size(); ++p) {
        auto& m = st.m[p];
        auto& v = st.v[p];
        auto& x = params[p]->v;
        const auto& g = grads[p].v;
        for (size_t i = 0; i < x.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            x[i] -= lr * (m[i] / corr1) / (std::sqrt(v[i] / corr2) + eps);
        }
    }
}

// Scalar Adam for the temperature parameter.
struct ScalarAdam {
    double m = 0.0, v = 0.0;
    int64_t t = 0;

    double step(double grad, double lr) {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        t += 1;
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad * grad;
        const double mhat = m / (1.0 - std::pow(b1, static_cast<double>(t)));
        const double vhat = v / (1.0 - std::pow(b2, static_cast<double>(t)));
        return lr * mhat / (std::sqrt(vhat) + eps);
    }

    bool operator==(const ScalarAdam& o) const { return m == o.m && v == o.v && t == o.t; }
};

// ---- trainer state ------------------------------------------------------------

struct TrainerState {
    QEnsemble ensemble;
    GaussianPolicy policy;
    Temperature temp;
    std::vector<AdamState> q_opt;  // one per member
    AdamState policy_opt;
    ScalarAdam beta_opt;
    int64_t step = 0;
    Rng rng;

    TrainerState() : rng(0) {}

    bool operator==(const TrainerState& o) const {
        return ensemble == o.ensemble && policy == o.policy && temp == o.temp &&
               q_opt == o.q_opt && policy_opt == o.policy_opt && beta_opt == o.beta_opt &&
               step == o.step;
    }
};

inline TrainerState init_trainer(const TrainConfig& cfg, int state_dim, int action_dim) {
    cfg.validate();
    TrainerState st;
    Rng seeder(cfg.seed);
    st.ensemble = init_ensemble(state_dim, action_dim, cfg.hidden(), cfg.n, seeder.raw());
    st.policy = init_policy(state_dim, action_dim, cfg.hidden(), seeder.raw());
    st.temp = cfg.beta_auto ? Temperature::automatic(action_dim, cfg.beta)
                            : Temperature::fixed(cfg.beta);
    st.q_opt.resize(cfg.n);
    for (int j = 0; j < cfg.n; ++j) st.q_opt[j].init_like(st.ensemble.members[j].params());
    st.policy_opt.init_like(st.policy.trunk.params());
    st.rng = Rng(seeder.raw());
    return st;
}

struct StepMetrics {
    int64_t step = 0;
    double q_loss = 0.0;       // mean over members of the Bellman MSE part
    double policy_loss = 0.0;
    double es_value = 0.0;     // ordered-pair ES sum (edac), else 0
    double aux_value = 0.0;    // cql penalty / variance term, else 0
    double q_mean = 0.0;       // ensemble-mean Q on the batch (dataset actions)
    double q_min = 0.0;        // ensemble-min Q on the batch
    double q_pi_mean = 0.0;    // ensemble-mean Q at policy actions
    double entropy = 0.0;      // -mean log pi
    double beta = 0.0;
    bool es_zero_grad = false;
};

inline void to_json(nlohmann::json& j, const StepMetrics& m) {
    j = {{"step", m.step},       {"q_loss", m.q_loss},       {"policy_loss", m.policy_loss},
         {"es", m.es_value},     {"aux", m.aux_value},       {"q_mean", m.q_mean},
         {"q_min", m.q_min},     {"q_pi_mean", m.q_pi_mean}, {"entropy", m.entropy},
         {"beta", m.beta},       {"es_zero_grad", m.es_zero_grad}};
}

// ---- trainer checkpoints -------------------------------------------------------

inline void save_trainer_checkpoint(const std::string& path, const TrainerState& st) {
    std::vector<NamedTensors> nets;
    nets.push_back(pack_mlp("policy", st.policy.trunk));
    for (int j = 0; j < st.ensemble.size(); ++j) {
        nets.push_back(pack_mlp("member_" + std::to_string(j), st.ensemble.members[j]));
        nets.push_back(pack_mlp("target_" + std::to_string(j), st.ensemble.targets[j]));
    }
    nets.push_back(NamedTensors{"temperature", {Tensor::scalar(st.temp.beta)}});
    save_checkpoint(path, nets);
}

struct LoadedCheckpoint {
    GaussianPolicy policy;
    QEnsemble ensemble;
    double beta = 1.0;
};

inline LoadedCheckpoint load_trainer_checkpoint(const std::string& path) {
    LoadedCheckpoint out;
    bool have_policy = false;
    std::vector<std::pair<int, Mlp>> members, targets;
    for (const NamedTensors& net : load_checkpoint(path)) {
        if (net.name == "policy") {
            out.policy.trunk = unpack_mlp(net);
            out.policy.action_dim = out.policy.trunk.out_dim() / 2;
            have_policy = true;
        } else if (net.name.rfind("member_", 0) == 0) {
            members.emplace_back(std::stoi(net.name.substr(7)), unpack_mlp(net));
        } else if (net.name.rfind("target_", 0) == 0) {
            targets.emplace_back(std::stoi(net.name.substr(7)), unpack_mlp(net));
        } else if (net.name == "temperature" && !net.tensors.empty()) {
            out.beta = net.tensors[0].item();
        }
    }
    if (!have_policy) throw IoError(IoError::Kind::Invalid, "no policy network in " + path);
    std::sort(members.begin(), members.end(), [](auto& a, auto& b) { return a.first < b.first; });
    std::sort(targets.begin(), targets.end(), [](auto& a, auto& b) { return a.first < b.first; });
    for (auto& [idx, mlp] : members) out.ensemble.members.push_back(std::move(mlp));
    for (auto& [idx, mlp] : targets) out.ensemble.targets.push_back(std::move(mlp));
    return out;
}

// One deterministic update: lines 3-7 of the training loop (shared target ->
// critic update -> temperature/policy update -> target smoothing). RNG draw
// order is fixed: batch indices, [REM xi], next-action noise, policy noise,
// [CQL action samples].
inline StepMetrics train_step(TrainerState& st, const std::vector<Transition>& data,
                              const TrainConfig& cfg) {
    if (data.empty()) throw ConfigError("train_step: dataset is empty");
    StepMetrics metrics;
    metrics.step = st.step;
    try {
        const auto idx = sample_indices(data.size(), cfg.batch_size, st.rng);
        const Batch batch = make_batch(data, idx);
        const int b = batch.size(), ad = st.policy.action_dim;

        std::vector<double> xi;
        if (cfg.algorithm == Algo::Rem) xi = draw_simplex(st.rng, cfg.n);
        const Tensor next_noise = draw_normal(st.rng, b, ad);
        const Tensor pi_noise = draw_normal(st.rng, b, ad);

        const Tensor y =
            cfg.algorithm == Algo::Rem
                ? bellman_target_rem(st.ensemble, st.policy, batch, st.temp.beta, cfg.gamma,
                                     next_noise, xi)
                : bellman_target(st.ensemble, st.policy, batch, st.temp.beta, cfg.gamma,
                                 next_noise);

        // ---- critic update ----
        {
            static thread_local Graph g;
            g.reset();
            EnsembleNodes members = insert_ensemble(g, st.ensemble, Which::Members, true);
            NodeId s = g.constant(batch.s);
            const bool need_action_grad = cfg.algorithm == Algo::Edac && cfg.eta > 0.0;
            NodeId a = g.leaf(batch.a, need_action_grad);
            NodeId yc = g.constant(y);
            auto qs = q_forward(g, members, s, a);

            NodeId total = kNoNode;
            double mse_sum = 0.0;
            if (cfg.algorithm == Algo::Sac) {
                // Vanilla clipped double Q: two critics written out directly.
                NodeId l1 = g.mean(g.square(g.sub(qs[0], yc)));
                NodeId l2 = g.mean(g.square(g.sub(qs[1], yc)));
                total = g.add(l1, l2);
                mse_sum = g.scalar_value(l1) + g.scalar_value(l2);
            } else if (cfg.algorithm == Algo::Rem) {
                total = q_loss_rem(g, qs, yc, xi);
                mse_sum = g.scalar_value(total) * cfg.n;  // reported per-member scale
            } else if (cfg.algorithm == Algo::Edac) {
                EdacLoss el = q_loss_edac(g, members, qs, s, a, yc, cfg.eta, cfg.es_variant,
                                          cfg.es_stop_normalizer);
                total = el.total;
                metrics.es_value = el.es_sum == kNoNode ? 0.0 : g.scalar_value(el.es_sum);
                metrics.es_zero_grad = el.zero_gradient_member;
                for (size_t j = 0; j < qs.size(); ++j)
                    mse_sum += g.scalar_value(g.mean(g.square(g.sub(qs[j], yc))));
            } else {
                auto losses = q_loss_sac_n(g, qs, yc);
                total = losses[0];
                for (size_t j = 1; j < losses.size(); ++j) total = g.add(total, losses[j]);
                for (NodeId l : losses) mse_sum += g.scalar_value(l);
                if (cfg.algorithm == Algo::CqlLite) {
                    auto pen = cql_penalty_lite(g, members, batch, st.policy, qs, cfg.cql_alpha,
                                                cfg.cql_m, st.rng);
                    NodeId pen_total = pen[0];
                    for (size_t j = 1; j < pen.size(); ++j) pen_total = g.add(pen_total, pen[j]);
                    metrics.aux_value = g.scalar_value(pen_total) / cfg.n;
                    total = g.add(total, pen_total);
                } else if (cfg.algorithm == Algo::VarReg) {
                    NodeId vr = variance_regularizer(g, qs, cfg.var_c);
                    metrics.aux_value = g.scalar_value(vr);
                    total = g.add(total, vr);
                }
            }
            metrics.q_loss = mse_sum / cfg.n;

            NodeId stacked = q_stack(g, qs);
            metrics.q_mean = g.scalar_value(g.mean(stacked));
            metrics.q_min = g.scalar_value(g.mean(g.min_axis(stacked, 1)));

            std::vector<NodeId> wrt;
            for (const MlpNodes& net : members.nets) collect_param_nodes(net, wrt);
            GradMap grads = g.gradient(total, wrt);
            size_t k = 0;
            for (int j = 0; j < cfg.n; ++j) {
                auto params = st.ensemble.members[j].params();
                std::vector<Tensor> gvals;
                gvals.reserve(params.size());
                for (size_t p = 0; p < params.size(); ++p) gvals.push_back(g.value(grads.at(wrt[k++])));
                adam_step(st.q_opt[j], params, gvals, cfg.lr_q);
            }
        }

        // ---- temperature + policy update (uses the just-updated critics) ----
        {
            static thread_local Graph g;
            g.reset();
            EnsembleNodes members = insert_ensemble(g, st.ensemble, Which::Members, false);
            MlpNodes trunk = insert_params(g, st.policy.trunk, true);
            NodeId s = g.constant(batch.s);
            PolicySample ps = policy_sample(g, trunk, ad, s, pi_noise);
            const double log_pi_mean = g.scalar_value(g.mean(ps.log_prob));
            metrics.entropy = -log_pi_mean;

            if (st.temp.mode == Temperature::Mode::Auto) {
                // d/d(log beta) of log_beta * (-log pi - target_entropy).
                const double c = -log_pi_mean - st.temp.target_entropy;
                st.temp.log_beta -= st.beta_opt.step(c, cfg.lr_policy);
                st.temp.beta = std::exp(st.temp.log_beta);
            }
            metrics.beta = st.temp.beta;

            auto qs = q_forward(g, members, s, ps.action);
            NodeId stacked = q_stack(g, qs);
            NodeId qmin = g.min_axis(stacked, 1);
            NodeId objective = g.mean(g.sub(qmin, g.mul_scalar(ps.log_prob, st.temp.beta)));
            NodeId loss = g.neg(objective);
            metrics.policy_loss = g.scalar_value(loss);
            metrics.q_pi_mean = g.scalar_value(g.mean(stacked));

            std::vector<NodeId> wrt;
            collect_param_nodes(trunk, wrt);
            GradMap grads = g.gradient(loss, wrt);
            auto params = st.policy.trunk.params();
            std::vector<Tensor> gvals;
            gvals.reserve(params.size());
            for (NodeId w : wrt) gvals.push_back(g.value(grads.at(w)));
            adam_step(st.policy_opt, params, gvals, cfg.lr_policy);
        }

        soft_update(st.ensemble, cfg.rho);
        st.step += 1;
    } catch (const NumericError& e) {
        throw NumericError("train_step " + std::to_string(st.step) + " (q_loss=" +
                           std::to_string(metrics.q_loss) + ", policy_loss=" +
                           std::to_string(metrics.policy_loss) + "): " + e.what());
    }
    return metrics;
}

}  // namespace edac
