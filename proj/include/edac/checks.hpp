#pragma once

#include <string>
#include <vector>

#include "edac/analysis.hpp"
#include "edac/trainer.hpp"

namespace edac {

struct CheckResult {
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

namespace detail {

inline std::vector<double> random_unit(Rng& rng, int dim) {
    std::vector<double> v(dim);
    double norm_sq = 0.0;
    for (auto& x : v) {
        x = rng.normal();
        norm_sq += x * x;
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& x : v) x *= inv;
    return v;
}

// Max relative disagreement between an analytic gradient and central finite
// differences of `eval`, probing every coordinate of `param`.
template <typename EvalFn>
double fd_max_rel_error(Tensor& param, const Tensor& analytic, double step, EvalFn&& eval) {
    double max_rel = 0.0;
    for (size_t i = 0; i < param.size(); ++i) {
        const double keep = param.v[i];
        param.v[i] = keep + step;
        const double fp = eval();
        param.v[i] = keep - step;
        const double fm = eval();
        param.v[i] = keep;
        const double numeric = (fp - fm) / (2.0 * step);
        max_rel = std::max(max_rel, std::fabs(analytic.v[i] - numeric) /
                                        (std::fabs(analytic.v[i]) + std::fabs(numeric) + 1e-12));
    }
    return max_rel;
}

}  // namespace detail

// ---- closed-form math batteries (Lemma 1, Props 1-2, Eq. 3) -------------------

inline std::vector<CheckResult> run_math_checks(uint64_t seed = 20240601) {
    std::vector<CheckResult> out;

    {  // Lemma 1: total variance == 1 - ||mean||^2 on 100 unit families
        Rng rng(seed);
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const int n = 2 + static_cast<int>(rng.below(49));
            const int dim = 2 + static_cast<int>(rng.below(7));
            std::vector<std::vector<double>> grads;
            for (int j = 0; j < n; ++j) grads.push_back(detail::random_unit(rng, dim));
            VarianceSpectrum vs = variance_spectrum(grads);
            worst = std::max(worst,
                             std::fabs(vs.total_variance - (1.0 - vs.mean_norm * vs.mean_norm)));
        }
        out.push_back({"lemma1-total-variance-identity", worst, 1e-10, worst <= 1e-10});
    }

    {  // Prop 1: bound never violated on 100 locally-linear ensembles
        Rng rng(seed + 1);
        double worst_violation = -1e300;
        bool all_hold = true;
        for (int trial = 0; trial < 100; ++trial) {
            const int n = 2 + static_cast<int>(rng.below(49));
            const int dim = 2 + static_cast<int>(rng.below(7));
            std::vector<std::vector<double>> grads;
            for (int j = 0; j < n; ++j) grads.push_back(detail::random_unit(rng, dim));
            Prop1Result r = prop1_check(grads, rng.uniform(0.1, 3.0), rng.uniform(-5.0, 5.0));
            all_hold = all_hold && r.holds;
            worst_violation = std::max(worst_violation, r.lhs - r.bound);
        }
        // Includes the analytic orthogonal-pair case (lambda_min = 0).
        Prop1Result ortho = prop1_check({{1.0, 0.0}, {0.0, 1.0}}, 1.0, 0.0);
        all_hold = all_hold && ortho.holds && std::fabs(ortho.bound - 0.25) < 1e-12 &&
                   std::fabs(ortho.lhs) < 1e-12;
        out.push_back({"prop1-variance-bound", worst_violation, 1e-12, all_hold});
    }

    {  // Prop 2: uniform-sphere covariance within 3e-3 of I/n
        for (int n : {2, 3, 8}) {
            SphereCovResult r = sphere_cov_check(n, 1000000, seed + 10 + n);
            out.push_back({"prop2-sphere-cov-n" + std::to_string(n), r.max_abs_dev, 3e-3,
                           r.max_abs_dev <= 3e-3 && r.mean_norm <= 3e-3});
        }
    }

    {  // Eq. 3 vs Monte-Carlo minima, plus the N=1 exactness contract
        Rng rng(seed + 2);
        for (int n : {2, 5, 10, 50}) {
            const int draws = 1000000;
            double acc = 0.0;
            for (int it = 0; it < draws; ++it) {
                double mn = rng.normal();
                for (int j = 1; j < n; ++j) mn = std::min(mn, rng.normal());
                acc += mn;
            }
            const double mc = acc / draws;
            const double err = std::fabs(expected_min_approx(0.0, 1.0, n) - mc);
            out.push_back({"eq3-vs-mc-n" + std::to_string(n), err, 0.06, err <= 0.06});
        }
        const bool exact = expected_min_approx(1.75, 3.0, 1) == 1.75;
        out.push_back({"eq3-n1-returns-mean", exact ? 0.0 : 1.0, 0.0, exact});
    }

    return out;
}

// ---- gradient batteries ---------------------------------------------------------

// Per-primitive finite-difference sweep (the same battery the unit tests
// run), plus every training loss on small networks.
inline std::vector<CheckResult> run_gradient_checks(uint64_t seed = 72) {
    std::vector<CheckResult> out;
    const double kStep = 1e-5;

    {  // primitive sweep over 100 seeds (composite scalar touching all ops)
        double worst = 0.0;
        for (uint64_t s = 0; s < 100; ++s) {
            Rng rng(seed + s);
            Tensor x(6, 4);
            for (auto& v : x.v) v = rng.uniform(0.3, 1.7);
            auto composite = [](Graph& g, NodeId leaf) {
                NodeId a = g.slice(leaf, 0, 3, 0, 4);
                NodeId b = g.slice(leaf, 3, 6, 0, 4);
                NodeId m = g.matmul(a, b, false, true);
                NodeId t = g.tanh(g.mul(a, b));
                NodeId e = g.exp(g.neg(g.sqrt(a)));
                NodeId l = g.log(g.add(b, g.broadcast(g.constant(0.5), 3, 4)));
                NodeId mix = g.add(g.sum(g.square(m)), g.mean(g.div(t, g.add_scalar(e, 2.0))));
                return g.add(mix, g.sum(g.concat(l, t, 1)));
            };
            worst = std::max(worst, finite_difference_check(composite, x, kStep));
        }
        out.push_back({"primitives-composite-fd", worst, 1e-6, worst <= 1e-6});
    }

    // Shared fixtures: width-8 networks, 2+1 dims, 6-row batches.
    const int sd = 2, ad = 2, b = 6;
    Rng rng(seed + 1000);
    Batch batch;
    batch.s = Tensor(b, sd);
    batch.a = Tensor(b, ad);
    batch.r = Tensor(b, 1);
    batch.s_next = Tensor(b, sd);
    batch.done = Tensor::zeros(b, 1);
    for (auto& v : batch.s.v) v = rng.uniform(-1, 1);
    for (auto& v : batch.a.v) v = rng.uniform(-0.8, 0.8);
    for (auto& v : batch.r.v) v = rng.uniform(-1, 0);
    for (auto& v : batch.s_next.v) v = rng.uniform(-1, 1);
    Tensor y(b, 1);
    for (auto& v : y.v) v = rng.uniform(-1, 1);

    // Bellman MSE (single critic against a frozen target).
    {
        QEnsemble e = init_ensemble(sd, ad, {8, 8}, 2, seed + 1);
        auto value_and_grad = [&](Tensor* grad) {
            Graph g;
            EnsembleNodes nets = insert_ensemble(g, e, Which::Members, true);
            auto qs = q_forward(g, nets, g.constant(batch.s), g.constant(batch.a));
            NodeId loss = g.mean(g.square(g.sub(qs[0], g.constant(y))));
            if (grad != nullptr) {
                std::vector<NodeId> wrt{nets.nets[0].weights[1]};
                *grad = g.value(g.gradient(loss, wrt).at(wrt[0]));
            }
            return g.scalar_value(loss);
        };
        Tensor analytic;
        value_and_grad(&analytic);
        const double err = detail::fd_max_rel_error(e.members[0].weights[1], analytic, kStep,
                                                    [&] { return value_and_grad(nullptr); });
        out.push_back({"bellman-mse-grad", err, 1e-5, err <= 1e-5});
    }

    // SAC-N critic loss (sum over members).
    {
        QEnsemble e = init_ensemble(sd, ad, {8, 8}, 3, seed + 2);
        auto value_and_grad = [&](Tensor* grad) {
            Graph g;
            EnsembleNodes nets = insert_ensemble(g, e, Which::Members, true);
            auto qs = q_forward(g, nets, g.constant(batch.s), g.constant(batch.a));
            auto losses = q_loss_sac_n(g, qs, g.constant(y));
            NodeId total = losses[0];
            for (size_t j = 1; j < losses.size(); ++j) total = g.add(total, losses[j]);
            if (grad != nullptr) {
                std::vector<NodeId> wrt{nets.nets[1].weights[0]};
                *grad = g.value(g.gradient(total, wrt).at(wrt[0]));
            }
            return g.scalar_value(total);
        };
        Tensor analytic;
        value_and_grad(&analytic);
        const double err = detail::fd_max_rel_error(e.members[1].weights[0], analytic, kStep,
                                                    [&] { return value_and_grad(nullptr); });
        out.push_back({"sac-n-loss-grad", err, 1e-5, err <= 1e-5});
    }

    // EDAC critic loss: full objective (MSE + ES) and the ES term alone at
    // second order.
    {
        QEnsemble e = init_ensemble(sd, ad, {8, 8}, 3, seed + 3);
        auto value_and_grad = [&](double eta, Tensor* grad) {
            Graph g;
            EnsembleNodes nets = insert_ensemble(g, e, Which::Members, true);
            NodeId s = g.constant(batch.s);
            NodeId a = g.leaf(batch.a, true);
            auto qs = q_forward(g, nets, s, a);
            EdacLoss el = q_loss_edac(g, nets, qs, s, a, g.constant(y), eta);
            if (grad != nullptr) {
                std::vector<NodeId> wrt{nets.nets[0].weights[1]};
                *grad = g.value(g.gradient(el.total, wrt).at(wrt[0]));
            }
            return g.scalar_value(el.total);
        };
        Tensor analytic;
        value_and_grad(1.0, &analytic);
        const double err =
            detail::fd_max_rel_error(e.members[0].weights[1], analytic, kStep,
                                     [&] { return value_and_grad(1.0, nullptr); });
        out.push_back({"edac-loss-with-es-grad", err, 1e-3, err <= 1e-3});

        auto es_only = [&](Tensor* grad) {
            Graph g;
            EnsembleNodes nets = insert_ensemble(g, e, Which::Members, true);
            NodeId s = g.constant(batch.s);
            NodeId a = g.leaf(batch.a, true);
            NodeId es = es_pair(g, nets, s, a, 0, 2);
            if (grad != nullptr) {
                std::vector<NodeId> wrt{nets.nets[2].weights[0]};
                *grad = g.value(g.gradient(es, wrt).at(wrt[0]));
            }
            return g.scalar_value(es);
        };
        Tensor es_analytic;
        es_only(&es_analytic);
        const double es_err = detail::fd_max_rel_error(e.members[2].weights[0], es_analytic, kStep,
                                                       [&] { return es_only(nullptr); });
        out.push_back({"es-second-order-grad", es_err, 1e-3, es_err <= 1e-3});
    }

    // Policy objective.
    {
        QEnsemble e = init_ensemble(sd, ad, {8, 8}, 2, seed + 4);
        GaussianPolicy p = init_policy(sd, ad, {8, 8}, seed + 5);
        Rng nrng(seed + 6);
        Tensor noise(b, ad);
        for (auto& v : noise.v) v = nrng.uniform(-1.2, 1.2);
        auto value_and_grad = [&](Tensor* grad) {
            Graph g;
            EnsembleNodes nets = insert_ensemble(g, e, Which::Members, false);
            MlpNodes trunk = insert_params(g, p.trunk, true);
            PolicyObjective obj =
                policy_loss(g, nets, trunk, ad, g.constant(batch.s), noise, 0.3);
            if (grad != nullptr) {
                std::vector<NodeId> wrt{trunk.weights[0]};
                *grad = g.value(g.gradient(obj.loss, wrt).at(wrt[0]));
            }
            return g.scalar_value(obj.loss);
        };
        Tensor analytic;
        value_and_grad(&analytic);
        const double err = detail::fd_max_rel_error(p.trunk.weights[0], analytic, 1e-6,
                                                    [&] { return value_and_grad(nullptr); });
        out.push_back({"policy-loss-grad", err, 1e-5, err <= 1e-5});
    }

    // REM convex-combination loss.
    {
        QEnsemble e = init_ensemble(sd, ad, {8, 8}, 3, seed + 7);
        Rng xrng(seed + 8);
        const std::vector<double> xi = draw_simplex(xrng, 3);
        auto value_and_grad = [&](Tensor* grad) {
            Graph g;
            EnsembleNodes nets = insert_ensemble(g, e, Which::Members, true);
            auto qs = q_forward(g, nets, g.constant(batch.s), g.constant(batch.a));
            NodeId loss = q_loss_rem(g, qs, g.constant(y), xi);
            if (grad != nullptr) {
                std::vector<NodeId> wrt{nets.nets[1].weights[1]};
                *grad = g.value(g.gradient(loss, wrt).at(wrt[0]));
            }
            return g.scalar_value(loss);
        };
        Tensor analytic;
        value_and_grad(&analytic);
        const double err = detail::fd_max_rel_error(e.members[1].weights[1], analytic, kStep,
                                                    [&] { return value_and_grad(nullptr); });
        out.push_back({"rem-loss-grad", err, 1e-5, err <= 1e-5});
    }

    // CQL-lite penalty (sampled actions frozen across probes).
    {
        QEnsemble e = init_ensemble(sd, ad, {8, 8}, 2, seed + 9);
        Rng srng(seed + 10);
        const int m = 4;
        Tensor s_rep(b * m, sd), a_samp(b * m, ad);
        for (int row = 0; row < b; ++row)
            for (int k = 0; k < m; ++k) {
                for (int j = 0; j < sd; ++j) s_rep.at(row * m + k, j) = batch.s.at(row, j);
                for (int j = 0; j < ad; ++j) a_samp.at(row * m + k, j) = srng.uniform(-1, 1);
            }
        auto value_and_grad = [&](Tensor* grad) {
            Graph g;
            EnsembleNodes nets = insert_ensemble(g, e, Which::Members, true);
            auto qs = q_forward(g, nets, g.constant(batch.s), g.constant(batch.a));
            auto qs_samp = q_forward(g, nets, g.constant(s_rep), g.constant(a_samp));
            NodeId mse = g.mean(g.square(g.sub(qs[0], g.constant(y))));
            NodeId pen = g.mul_scalar(g.sub(g.mean(qs_samp[0]), g.mean(qs[0])), 1.0);
            NodeId loss = g.add(mse, pen);
            if (grad != nullptr) {
                std::vector<NodeId> wrt{nets.nets[0].weights[0]};
                *grad = g.value(g.gradient(loss, wrt).at(wrt[0]));
            }
            return g.scalar_value(loss);
        };
        Tensor analytic;
        value_and_grad(&analytic);
        const double err = detail::fd_max_rel_error(e.members[0].weights[0], analytic, kStep,
                                                    [&] { return value_and_grad(nullptr); });
        out.push_back({"cql-lite-loss-grad", err, 1e-5, err <= 1e-5});
    }

    // Variance regularizer.
    {
        QEnsemble e = init_ensemble(sd, ad, {8, 8}, 3, seed + 11);
        auto value_and_grad = [&](Tensor* grad) {
            Graph g;
            EnsembleNodes nets = insert_ensemble(g, e, Which::Members, true);
            auto qs = q_forward(g, nets, g.constant(batch.s), g.constant(batch.a));
            auto losses = q_loss_sac_n(g, qs, g.constant(y));
            NodeId total = losses[0];
            for (size_t j = 1; j < losses.size(); ++j) total = g.add(total, losses[j]);
            total = g.add(total, variance_regularizer(g, qs, 0.5));
            if (grad != nullptr) {
                std::vector<NodeId> wrt{nets.nets[2].weights[1]};
                *grad = g.value(g.gradient(total, wrt).at(wrt[0]));
            }
            return g.scalar_value(total);
        };
        Tensor analytic;
        value_and_grad(&analytic);
        const double err = detail::fd_max_rel_error(e.members[2].weights[1], analytic, kStep,
                                                    [&] { return value_and_grad(nullptr); });
        out.push_back({"var-reg-loss-grad", err, 1e-5, err <= 1e-5});
    }

    return out;
}

}  // namespace edac
