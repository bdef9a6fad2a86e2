#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "edac/losses.hpp"

namespace edac {

// ---- clip penalty and ensemble spread (Fig. 3 quantities) -------------------

// mean over the batch of [(1/N) sum_j Q_j(s,a) - min_j Q_j(s,a)]; >= 0 always.
inline double clip_penalty(const QEnsemble& ensemble, const Tensor& s, const Tensor& a) {
    Graph g;
    EnsembleNodes nets = insert_ensemble(g, ensemble, Which::Members, false);
    NodeId stacked = q_stack(g, q_forward(g, nets, g.constant(s), g.constant(a)));
    const double n = static_cast<double>(ensemble.size());
    NodeId mean_rows = g.mul_scalar(g.row_sum(stacked), 1.0 / n);
    NodeId min_rows = g.min_axis(stacked, 1);
    // mean >= min holds exactly in the reals; relu only strips rounding dust
    // so the result is 0, not -1e-16, when all members agree.
    return g.scalar_value(g.mean(g.relu(g.sub(mean_rows, min_rows))));
}

// mean over the batch of the member standard deviation (population, divisor N).
inline double q_std(const QEnsemble& ensemble, const Tensor& s, const Tensor& a) {
    Graph g;
    EnsembleNodes nets = insert_ensemble(g, ensemble, Which::Members, false);
    NodeId stacked = q_stack(g, q_forward(g, nets, g.constant(s), g.constant(a)));
    const double n = static_cast<double>(ensemble.size());
    NodeId mean_rows = g.mul_scalar(g.row_sum(stacked), 1.0 / n);
    NodeId mean_sq = g.mul_scalar(g.row_sum(g.square(stacked)), 1.0 / n);
    NodeId var = g.relu(g.sub(mean_sq, g.square(mean_rows)));  // clip rounding negatives
    return g.scalar_value(g.mean(g.sqrt(g.add_scalar(var, 1e-300))));
}

struct PenaltyReport {
    double mean_penalty_behavior = 0.0;
    double mean_penalty_random = 0.0;
    double gap = 0.0;  // random - behavior
    double q_std_behavior = 0.0;
    double q_std_random = 0.0;
};

// Draws `rows` states from the dataset and compares the clip penalty and
// Q-std between behavior-policy actions and uniform random actions.
// `behavior` maps a state to an action using the supplied RNG.
template <typename BehaviorFn>
PenaltyReport penalty_report(const QEnsemble& ensemble, const OfflineDataset& data,
                             BehaviorFn&& behavior, int rows, uint64_t seed) {
    Rng rng(seed);
    const int sd = data.spec.state_dim, ad = data.spec.action_dim;
    Tensor s(rows, sd), a_behavior(rows, ad), a_random(rows, ad);
    for (int i = 0; i < rows; ++i) {
        const Transition& t = data.transitions[rng.below(data.size())];
        for (int j = 0; j < sd; ++j) s.at(i, j) = t.s[j];
        std::vector<double> ab = behavior(t.s, rng);
        for (int j = 0; j < ad; ++j) a_behavior.at(i, j) = ab[j];
        for (int j = 0; j < ad; ++j) a_random.at(i, j) = rng.uniform(-1.0, 1.0);
    }
    PenaltyReport r;
    r.mean_penalty_behavior = clip_penalty(ensemble, s, a_behavior);
    r.mean_penalty_random = clip_penalty(ensemble, s, a_random);
    r.gap = r.mean_penalty_random - r.mean_penalty_behavior;
    r.q_std_behavior = q_std(ensemble, s, a_behavior);
    r.q_std_random = q_std(ensemble, s, a_random);
    return r;
}

// ---- expected minimum of N Gaussian realizations -----------------------------

// m - Phi^{-1}((N - pi/8) / (N - pi/4 + 1)) * sigma; N = 1 returns m exactly.
inline double expected_min_approx(double m, double sigma, int n) {
    if (sigma < 0.0) throw ConfigError("expected_min_approx: sigma must be >= 0");
    if (n < 1) throw ConfigError("expected_min_approx: N must be >= 1");
    if (n == 1) return m;
    const double pi = kTwoPi / 2.0;
    const double arg = (n - pi / 8.0) / (n - pi / 4.0 + 1.0);
    return m - inverse_norm_cdf(arg) * sigma;
}

// ---- pairwise input-gradient cosine similarity (Fig. 4) ----------------------

struct CosSimStats {
    double min_pairwise = 0.0;   // batch mean of min over unordered pairs
    double mean_pairwise = 0.0;  // batch mean of mean over unordered pairs
};

// Cosine similarity between the normalized action gradients of every member
// pair, at the given state-action rows.
inline CosSimStats pairwise_cos_sim(const QEnsemble& ensemble, const Tensor& s, const Tensor& a) {
    const int n = ensemble.size();
    if (n < 2) throw ConfigError("pairwise_cos_sim: N must be >= 2");
    Graph g;
    EnsembleNodes nets = insert_ensemble(g, ensemble, Which::Members, false);
    NodeId sc = g.constant(s);
    NodeId ac = g.leaf(a, true);
    const int rows = s.rows, ad = a.cols;
    std::vector<Tensor> grads;
    grads.reserve(n);
    for (int j = 0; j < n; ++j) grads.push_back(g.value(action_gradient(g, nets.nets[j], sc, ac)));

    CosSimStats out;
    double min_acc = 0.0, mean_acc = 0.0;
    const int pairs = n * (n - 1) / 2;
    for (int row = 0; row < rows; ++row) {
        std::vector<std::vector<double>> unit(n, std::vector<double>(ad));
        for (int j = 0; j < n; ++j) {
            double norm_sq = 1e-24;
            for (int d = 0; d < ad; ++d) norm_sq += grads[j].at(row, d) * grads[j].at(row, d);
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (int d = 0; d < ad; ++d) unit[j][d] = grads[j].at(row, d) * inv;
        }
        double row_min = 2.0, row_sum = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const double c = dot(unit[i], unit[j]);
                row_min = std::min(row_min, c);
                row_sum += c;
            }
        min_acc += row_min;
        mean_acc += row_sum / pairs;
    }
    out.min_pairwise = min_acc / rows;
    out.mean_pairwise = mean_acc / rows;
    return out;
}

inline double min_pairwise_cos_sim(const QEnsemble& ensemble, const Tensor& s, const Tensor& a) {
    return pairwise_cos_sim(ensemble, s, a).min_pairwise;
}

// ---- sample variance matrix of gradient families (Lemma 1 machinery) ---------

struct VarianceSpectrum {
    std::vector<std::vector<double>> matrix;        // |A| x |A|, divisor-N variance
    std::vector<double> eigenvalues;                // ascending
    std::vector<std::vector<double>> eigenvectors;  // eigenvectors[k] pairs with eigenvalues[k]
    double total_variance = 0.0;                    // trace
    double mean_norm = 0.0;                         // ||mean gradient||
};

// Cyclic Jacobi for small symmetric matrices; rotates until the off-diagonal
// Frobenius norm is <= tol.
inline void jacobi_eigen(std::vector<std::vector<double>> m, std::vector<double>& eigenvalues,
                         std::vector<std::vector<double>>& eigenvectors, double tol = 1e-12) {
    const int n = static_cast<int>(m.size());
    std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) v[i][i] = 1.0;

    auto off_norm = [&] {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j) s += m[i][j] * m[i][j];
        return std::sqrt(s);
    };

    for (int sweep = 0; sweep < 100 && off_norm() > tol; ++sweep) {
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (std::fabs(m[p][q]) <= tol / (10.0 * n)) continue;
                const double theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double mkp = m[k][p], mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for (int k = 0; k < n; ++k) {
                    const double mpk = m[p][k], mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
    }

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return m[a][a] < m[b][b]; });
    eigenvalues.resize(n);
    eigenvectors.assign(n, std::vector<double>(n));
    for (int k = 0; k < n; ++k) {
        eigenvalues[k] = m[order[k]][order[k]];
        for (int i = 0; i < n; ++i) eigenvectors[k][i] = v[i][order[k]];
    }
}

// Divisor-N sample variance matrix of N gradient vectors plus its spectrum.
inline VarianceSpectrum variance_spectrum(const std::vector<std::vector<double>>& gradients) {
    if (gradients.empty()) throw ConfigError("variance_spectrum: no gradients");
    const int n = static_cast<int>(gradients.size());
    const int dim = static_cast<int>(gradients.front().size());
    for (const auto& gvec : gradients)
        if (static_cast<int>(gvec.size()) != dim)
            throw ShapeError("variance_spectrum: gradient dimension mismatch");

    std::vector<double> mean(dim, 0.0);
    for (const auto& gvec : gradients)
        for (int d = 0; d < dim; ++d) mean[d] += gvec[d];
    for (auto& x : mean) x /= n;

    VarianceSpectrum out;
    out.matrix.assign(dim, std::vector<double>(dim, 0.0));
    for (const auto& gvec : gradients)
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j)
                out.matrix[i][j] += (gvec[i] - mean[i]) * (gvec[j] - mean[j]) / n;

    jacobi_eigen(out.matrix, out.eigenvalues, out.eigenvectors);
    for (int i = 0; i < dim; ++i) out.total_variance += out.matrix[i][i];
    out.mean_norm = l2_norm(mean);
    return out;
}

// ---- locally-linear ensemble bound check --------------------------------------

struct Prop1Result {
    double lhs = 0.0;    // Var_j Q_j(s, a + k w_min), computed directly
    double bound = 0.0;  // (1/|A|) ((N-1)/N) k^2 epsilon
    bool holds = false;
};

// Synthetic members Q_j(s, a + delta) = value_at_a + <delta, q_j> with unit
// q_j; the bound's hypotheses hold by construction.
inline Prop1Result prop1_check(const std::vector<std::vector<double>>& unit_gradients, double k,
                               double value_at_a) {
    const int n = static_cast<int>(unit_gradients.size());
    const int dim = static_cast<int>(unit_gradients.front().size());
    VarianceSpectrum spec = variance_spectrum(unit_gradients);
    const std::vector<double>& w_min = spec.eigenvectors.front();

    std::vector<double> values(n);
    double mean = 0.0;
    for (int j = 0; j < n; ++j) {
        values[j] = value_at_a + k * dot(w_min, unit_gradients[j]);
        mean += values[j];
    }
    mean /= n;
    Prop1Result r;
    for (int j = 0; j < n; ++j) r.lhs += (values[j] - mean) * (values[j] - mean) / n;

    double min_inner = 1.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            min_inner = std::min(min_inner, dot(unit_gradients[i], unit_gradients[j]));
    const double epsilon = 1.0 - min_inner;
    r.bound = (1.0 / dim) * (static_cast<double>(n - 1) / n) * k * k * epsilon;
    r.holds = r.lhs <= r.bound + 1e-12;
    return r;
}

// ---- uniform-sphere covariance check ------------------------------------------

struct SphereCovResult {
    double max_abs_dev = 0.0;  // max entry-wise |Cov - I/n|
    double mean_norm = 0.0;    // norm of the sample mean
};

// Monte-Carlo covariance of X ~ U(S^{n-1}) via normalized Gaussian draws.
inline SphereCovResult sphere_cov_check(int n, int samples, uint64_t seed) {
    if (n < 2) throw ConfigError("sphere_cov_check: n must be >= 2");
    Rng rng(seed);
    std::vector<double> x(n), mean(n, 0.0);
    std::vector<std::vector<double>> second(n, std::vector<double>(n, 0.0));
    for (int it = 0; it < samples; ++it) {
        double norm_sq = 0.0;
        for (int i = 0; i < n; ++i) {
            x[i] = rng.normal();
            norm_sq += x[i] * x[i];
        }
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (int i = 0; i < n; ++i) x[i] *= inv;
        for (int i = 0; i < n; ++i) {
            mean[i] += x[i];
            for (int j = i; j < n; ++j) second[i][j] += x[i] * x[j];
        }
    }
    SphereCovResult r;
    for (auto& m : mean) m /= samples;
    r.mean_norm = l2_norm(mean);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            const double cov = second[i][j] / samples - mean[i] * mean[j];
            const double target = i == j ? 1.0 / n : 0.0;
            r.max_abs_dev = std::max(r.max_abs_dev, std::fabs(cov - target));
        }
    return r;
}

// ---- action distance histogram (Fig. 6) ----------------------------------------

struct ActionDistHist {
    std::vector<double> edges;   // bins+1 edges over [0, 4 |A|]
    std::vector<size_t> counts;  // per bin; sums to the dataset size
    double mean = 0.0;           // mean squared distance
};

// Histogram of ||a_hat - a||^2 with one sampled action per dataset row.
template <typename ActionFn>
ActionDistHist action_distance_hist(const OfflineDataset& data, ActionFn&& sample_action,
                                    int bins, uint64_t seed) {
    if (bins < 1) throw ConfigError("action_distance_hist: bins must be >= 1");
    Rng rng(seed);
    const int ad = data.spec.action_dim;
    const double hi = 4.0 * ad;  // max possible squared distance in [-1,1]^A
    ActionDistHist h;
    h.edges.resize(bins + 1);
    for (int b = 0; b <= bins; ++b) h.edges[b] = hi * b / bins;
    h.counts.assign(bins, 0);
    double total = 0.0;
    for (const Transition& t : data.transitions) {
        std::vector<double> a_hat = sample_action(t.s, rng);
        double d = 0.0;
        for (int j = 0; j < ad; ++j) d += (a_hat[j] - t.a[j]) * (a_hat[j] - t.a[j]);
        total += d;
        int b = static_cast<int>(d / hi * bins);
        b = std::min(bins - 1, std::max(0, b));
        h.counts[b]++;
    }
    h.mean = total / static_cast<double>(data.size());
    return h;
}

}  // namespace edac
