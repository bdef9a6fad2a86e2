#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "edac/graph.hpp"
#include "edac/rng.hpp"
#include "edac/tensor.hpp"

namespace edac {

// Fully connected network with relu hidden activations and a linear head.
// weights[l] is (in x out), biases[l] is (1 x out).
struct Mlp {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    int in_dim() const { return weights.front().rows; }
    int out_dim() const { return weights.back().cols; }
    size_t layer_count() const { return weights.size(); }

    std::vector<Tensor*> params() {
        std::vector<Tensor*> out;
        for (size_t l = 0; l < weights.size(); ++l) {
            out.push_back(&weights[l]);
            out.push_back(&biases[l]);
        }
        return out;
    }
    std::vector<const Tensor*> params() const {
        std::vector<const Tensor*> out;
        for (size_t l = 0; l < weights.size(); ++l) {
            out.push_back(&weights[l]);
            out.push_back(&biases[l]);
        }
        return out;
    }

    bool operator==(const Mlp& o) const { return weights == o.weights && biases == o.biases; }
};

// Deterministic per seed: weights uniform in +-1/sqrt(fan_in), biases zero.
inline Mlp init_params(const std::vector<int>& widths, uint64_t seed) {
    if (widths.size() < 2) throw ConfigError("init_params: need at least input and output widths");
    Mlp m;
    Rng rng(seed);
    for (size_t l = 0; l + 1 < widths.size(); ++l) {
        const int fan_in = widths[l], fan_out = widths[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor w(fan_in, fan_out);
        for (auto& x : w.v) x = rng.uniform(-bound, bound);
        m.weights.push_back(std::move(w));
        m.biases.push_back(Tensor::zeros(1, fan_out));
    }
    return m;
}

// Parameter leaves of one Mlp inside a graph.
struct MlpNodes {
    std::vector<NodeId> weights;
    std::vector<NodeId> biases;
};

inline MlpNodes insert_params(Graph& g, const Mlp& m, bool requires_grad) {
    MlpNodes n;
    for (size_t l = 0; l < m.weights.size(); ++l) {
        n.weights.push_back(g.leaf(m.weights[l], requires_grad));
        n.biases.push_back(g.leaf(m.biases[l], requires_grad));
    }
    return n;
}

inline void collect_param_nodes(const MlpNodes& n, std::vector<NodeId>& out) {
    for (size_t l = 0; l < n.weights.size(); ++l) {
        out.push_back(n.weights[l]);
        out.push_back(n.biases[l]);
    }
}

inline NodeId mlp_forward(Graph& g, const MlpNodes& p, NodeId x) {
    NodeId h = x;
    for (size_t l = 0; l < p.weights.size(); ++l) {
        NodeId z = g.matmul(h, p.weights[l]);
        z = g.add(z, g.broadcast(p.biases[l], g.rows(z), g.cols(z)));
        h = l + 1 < p.weights.size() ? g.relu(z) : z;
    }
    return h;
}

// Plain (graph-free) forward pass for hot non-differentiable paths.
inline std::vector<double> mlp_forward_plain(const Mlp& m, const std::vector<double>& x) {
    std::vector<double> h = x, z;
    for (size_t l = 0; l < m.weights.size(); ++l) {
        const Tensor& w = m.weights[l];
        const Tensor& b = m.biases[l];
        z.assign(w.cols, 0.0);
        for (int i = 0; i < w.rows; ++i) {
            const double hi = h[i];
            const double* wrow = w.v.data() + static_cast<size_t>(i) * w.cols;
            for (int j = 0; j < w.cols; ++j) z[j] += hi * wrow[j];
        }
        for (int j = 0; j < w.cols; ++j) {
            z[j] += b.v[j];
            if (l + 1 < m.weights.size() && z[j] < 0.0) z[j] = 0.0;
        }
        h = z;
    }
    return h;
}

}  // namespace edac
