#pragma once

#include <vector>

#include "edac/mlp.hpp"

namespace edac {

// N critics Q_j(s, a) -> scalar plus target copies, shape-identical and
// initialized equal to the members.
struct QEnsemble {
    std::vector<Mlp> members;
    std::vector<Mlp> targets;

    int size() const { return static_cast<int>(members.size()); }

    bool operator==(const QEnsemble& o) const {
        return members == o.members && targets == o.targets;
    }
};

inline QEnsemble init_ensemble(int state_dim, int action_dim, const std::vector<int>& hidden,
                               int n, uint64_t seed) {
    if (n < 2) throw ConfigError("ensemble size N must be >= 2");
    std::vector<int> widths{state_dim + action_dim};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(1);
    QEnsemble e;
    Rng seeder(seed);
    for (int j = 0; j < n; ++j) e.members.push_back(init_params(widths, seeder.raw()));
    e.targets = e.members;
    return e;
}

enum class Which { Members, Targets };

struct EnsembleNodes {
    std::vector<MlpNodes> nets;
};

inline EnsembleNodes insert_ensemble(Graph& g, const QEnsemble& e, Which which,
                                     bool requires_grad) {
    EnsembleNodes out;
    const auto& nets = which == Which::Members ? e.members : e.targets;
    for (const Mlp& m : nets) out.nets.push_back(insert_params(g, m, requires_grad));
    return out;
}

// All N critic outputs at (s, a), each B x 1, member order.
inline std::vector<NodeId> q_forward(Graph& g, const EnsembleNodes& nets, NodeId s, NodeId a) {
    if (g.rows(s) != g.rows(a))
        throw ShapeError("q_forward: state batch " + std::to_string(g.rows(s)) +
                         " != action batch " + std::to_string(g.rows(a)));
    NodeId x = g.concat(s, a, 1);
    std::vector<NodeId> out;
    out.reserve(nets.nets.size());
    for (const MlpNodes& net : nets.nets) out.push_back(mlp_forward(g, net, x));
    return out;
}

// B x N column stack of the member outputs.
inline NodeId q_stack(Graph& g, const std::vector<NodeId>& qs) {
    return g.stack_cols(std::span<const NodeId>(qs.data(), qs.size()));
}

// phi' <- rho * phi' + (1 - rho) * phi, applied to every target parameter.
inline void soft_update(QEnsemble& e, double rho) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("soft_update: rho must be in [0,1]");
    for (size_t j = 0; j < e.members.size(); ++j) {
        auto src = e.members[j].params();
        auto dst = e.targets[j].params();
        for (size_t p = 0; p < src.size(); ++p)
            for (size_t i = 0; i < src[p]->v.size(); ++i)
                dst[p]->v[i] = rho * dst[p]->v[i] + (1.0 - rho) * src[p]->v[i];
    }
}

}  // namespace edac
