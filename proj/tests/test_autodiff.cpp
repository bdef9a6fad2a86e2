#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "edac/graph.hpp"
#include "edac/rng.hpp"

using namespace edac;

namespace {

Tensor random_tensor(Rng& rng, int r, int c, double lo, double hi) {
    Tensor t(r, c);
    for (auto& x : t.v) x = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("evaluate basic examples") {
    Graph g;
    CHECK(g.evaluate(g.add(g.constant(2.0), g.constant(3.0))).item() == 5.0);

    Tensor eye(2, 2, {1, 0, 0, 1});
    Tensor v(2, 1, {0.7, -2.5});
    NodeId out = g.matmul(g.constant(eye), g.constant(v));
    CHECK(g.evaluate(out) == v);

    CHECK(g.evaluate(g.tanh(g.constant(0.0))).item() == 0.0);
}

TEST_CASE("evaluate determinism is bit exact") {
    auto build = [] {
        Graph g;
        Rng rng(42);
        NodeId a = g.leaf(random_tensor(rng, 5, 4, -2, 2), true);
        NodeId b = g.leaf(random_tensor(rng, 4, 3, -2, 2), true);
        NodeId h = g.tanh(g.matmul(a, b));
        return g.evaluate(g.mean(g.square(h)));
    };
    Tensor first = build();
    Tensor second = build();
    REQUIRE(first.v.size() == second.v.size());
    for (size_t i = 0; i < first.v.size(); ++i) CHECK(first.v[i] == second.v[i]);
}

TEST_CASE("shape mismatch raises a structured error") {
    Graph g;
    NodeId a = g.constant(Tensor::zeros(2, 3));
    NodeId b = g.constant(Tensor::zeros(3, 2));
    CHECK_THROWS_MATCHES(g.add(a, b), ShapeError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("add") &&
                             Catch::Matchers::ContainsSubstring("[2x3]") &&
                             Catch::Matchers::ContainsSubstring("[3x2]")));
    CHECK_THROWS_AS(g.matmul(a, a), ShapeError);
}

TEST_CASE("non-finite intermediates raise NumericError with a node path") {
    Graph g;
    NodeId x = g.constant(-1.0);
    CHECK_THROWS_MATCHES(g.log(x), NumericError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("log")));
    NodeId zero = g.constant(0.0);
    CHECK_THROWS_AS(g.div(g.constant(1.0), zero), NumericError);
}

TEST_CASE("gradient basic examples") {
    Graph g;
    NodeId x = g.leaf(Tensor::scalar(3.0), true);
    GradMap dx = g.gradient(g.square(x), {x});
    CHECK(g.scalar_value(dx.at(x)) == 6.0);

    Graph g2;
    NodeId t = g2.leaf(Tensor::scalar(0.0), true);
    CHECK(g2.scalar_value(g2.gradient(g2.tanh(t), {t}).at(t)) == 1.0);

    Graph g3;
    NodeId a = g3.leaf(Tensor::scalar(2.0), true);
    NodeId b = g3.leaf(Tensor::scalar(3.0), true);
    NodeId f = g3.add(g3.mul(a, b), b);  // x*y + y
    GradMap grads = g3.gradient(f, {a, b});
    CHECK(g3.scalar_value(grads.at(a)) == 3.0);
    CHECK(g3.scalar_value(grads.at(b)) == 3.0);
}

TEST_CASE("gradient requires a scalar output") {
    Graph g;
    NodeId x = g.leaf(Tensor::zeros(2, 2), true);
    CHECK_THROWS_AS(g.gradient(g.tanh(x), {x}), ShapeError);
}

TEST_CASE("unreachable wrt nodes get zero gradients of matching shape") {
    Graph g;
    NodeId used = g.leaf(Tensor::scalar(1.5), true);
    NodeId unused = g.leaf(Tensor::zeros(3, 2), true);
    GradMap grads = g.gradient(g.square(used), {used, unused});
    Tensor zero = g.value(grads.at(unused));
    CHECK(zero.rows == 3);
    CHECK(zero.cols == 2);
    for (double v : zero.v) CHECK(v == 0.0);
}

TEST_CASE("gradient is linear in the objective") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const double alpha = rng.uniform(-2, 2), beta = rng.uniform(-2, 2);
        Graph g;
        NodeId x = g.leaf(random_tensor(rng, 3, 2, 0.2, 1.5), true);
        NodeId f = g.sum(g.square(x));
        NodeId h = g.mean(g.tanh(x));
        NodeId combo = g.add(g.mul(g.broadcast(g.constant(alpha), 1, 1), f),
                             g.mul(g.broadcast(g.constant(beta), 1, 1), h));
        Tensor grad_combo = g.value(g.gradient(combo, {x}).at(x));
        Tensor grad_f = g.value(g.gradient(f, {x}).at(x));
        Tensor grad_h = g.value(g.gradient(h, {x}).at(x));
        for (size_t i = 0; i < grad_combo.size(); ++i)
            CHECK(std::fabs(grad_combo.v[i] - (alpha * grad_f.v[i] + beta * grad_h.v[i])) < 1e-12);
    }
}

TEST_CASE("second order examples") {
    {
        Graph g;  // d^2/dx^2 x^3 = 6x = 12 at x=2
        NodeId x = g.leaf(Tensor::scalar(2.0), true);
        NodeId cube = g.mul(g.square(x), x);
        std::vector<NodeId> wrt{x};
        GradMap second = g.second_gradient(cube, x, wrt);
        CHECK_THAT(g.scalar_value(second.at(x)), Catch::Matchers::WithinAbs(12.0, 1e-12));
    }
    {
        Graph g;  // tanh is odd: second derivative 0 at the origin
        NodeId x = g.leaf(Tensor::scalar(0.0), true);
        std::vector<NodeId> wrt{x};
        GradMap second = g.second_gradient(g.tanh(x), x, wrt);
        CHECK_THAT(g.scalar_value(second.at(x)), Catch::Matchers::WithinAbs(0.0, 1e-12));
    }
}

// Builds a tiny two-layer MLP q(s,a) with tanh hidden activation directly
// from leaves, computes g(w) = ||d q / d a||^2 via nested gradient calls, and
// checks dg/dw against central finite differences of g.
TEST_CASE("second order through an MLP input gradient") {
    Rng rng(123);
    const int in_dim = 3, hidden = 4;
    Tensor s = random_tensor(rng, 1, 1, -1, 1);
    Tensor a0 = random_tensor(rng, 1, 2, -0.5, 0.5);
    Tensor w1 = random_tensor(rng, in_dim, hidden, -0.7, 0.7);
    Tensor b1 = random_tensor(rng, 1, hidden, -0.1, 0.1);
    Tensor w2 = random_tensor(rng, hidden, 1, -0.7, 0.7);

    auto grad_norm_sq = [&](const Tensor& w1v, const Tensor& w2v, Tensor* dw1, Tensor* dw2) {
        Graph g;
        NodeId a = g.leaf(a0, true);
        NodeId W1 = g.leaf(w1v, true);
        NodeId W2 = g.leaf(w2v, true);
        NodeId x = g.concat(g.constant(s), a, 1);
        NodeId h = g.tanh(g.add(g.matmul(x, W1), g.constant(b1)));
        NodeId q = g.matmul(h, W2);  // 1x1
        NodeId da = g.gradient(g.sum(q), {a}).at(a);
        NodeId gnorm = g.sum(g.square(da));
        if (dw1 != nullptr) {
            GradMap outer = g.gradient(gnorm, {W1, W2});
            *dw1 = g.value(outer.at(W1));
            *dw2 = g.value(outer.at(W2));
        }
        return g.scalar_value(gnorm);
    };

    Tensor dw1, dw2;
    grad_norm_sq(w1, w2, &dw1, &dw2);

    const double step = 1e-5;
    double max_rel = 0.0;
    auto probe = [&](Tensor& target, const Tensor& analytic) {
        for (size_t i = 0; i < target.size(); ++i) {
            const double keep = target.v[i];
            target.v[i] = keep + step;
            const double fp = grad_norm_sq(w1, w2, nullptr, nullptr);
            target.v[i] = keep - step;
            const double fm = grad_norm_sq(w1, w2, nullptr, nullptr);
            target.v[i] = keep;
            const double numeric = (fp - fm) / (2 * step);
            max_rel = std::max(max_rel, std::fabs(analytic.v[i] - numeric) /
                                            (std::fabs(analytic.v[i]) + std::fabs(numeric) + 1e-12));
        }
    };
    probe(w1, dw1);
    probe(w2, dw2);
    CHECK(max_rel < 1e-3);
}

TEST_CASE("finite_difference_check examples") {
    Rng rng(5);
    Tensor x = random_tensor(rng, 4, 2, -1.5, 1.5);

    auto sum_sq = [](Graph& g, NodeId leaf) { return g.sum(g.square(leaf)); };
    CHECK(finite_difference_check(sum_sq, x, 1e-5) <= 1e-7);

    auto constant_fn = [](Graph& g, NodeId) { return g.constant(4.2); };
    CHECK(finite_difference_check(constant_fn, x, 1e-5) == 0.0);

    Tensor w = random_tensor(rng, 4, 2, -1, 1);
    auto dot_fn = [&w](Graph& g, NodeId leaf) { return g.sum(g.mul(leaf, g.constant(w))); };
    CHECK(finite_difference_check(dot_fn, x, 1e-5) <= 1e-9);
}

// Every primitive vs central differences, 100 seeds. Inputs are kept away
// from kinks (relu at 0, min-over-axis ties) and domain edges (log, sqrt).
TEST_CASE("per-primitive gradients match finite differences") {
    const double kTol = 1e-6;
    const double kStep = 1e-5;

    for (uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(1000 + seed);
        Tensor weights = random_tensor(rng, 3, 4, -1, 1);
        auto weighted = [&weights](Graph& g, NodeId y) {  // random linear functional
            return g.sum(g.mul(y, g.constant(weights)));
        };

        struct Case {
            const char* name;
            ScalarFn fn;
            Tensor at;
        };
        Tensor x34 = random_tensor(rng, 3, 4, 0.3, 1.7);
        Tensor x68 = random_tensor(rng, 6, 4, 0.3, 1.7);
        Tensor xneg = random_tensor(rng, 3, 4, -1.5, 1.5);
        for (auto& v : xneg.v)
            if (std::fabs(v) < 1e-3) v += 0.5;  // keep relu off its kink

        Tensor xgap = random_tensor(rng, 3, 4, 0, 1);
        for (int i = 0; i < 3; ++i)  // separate row entries so argmin is stable
            for (int j = 0; j < 4; ++j) xgap.at(i, j) += 2.0 * j * ((i + j) % 2 ? 1 : -1);

        std::vector<Case> cases;
        auto split = [](Graph& g, NodeId leaf) {  // two 3x4 halves of a 6x4 leaf
            return std::pair{g.slice(leaf, 0, 3, 0, 4), g.slice(leaf, 3, 6, 0, 4)};
        };
        cases.push_back({"add", [&](Graph& g, NodeId l) {
                             auto [a, b] = split(g, l);
                             return weighted(g, g.add(a, b));
                         }, x68});
        cases.push_back({"sub", [&](Graph& g, NodeId l) {
                             auto [a, b] = split(g, l);
                             return weighted(g, g.sub(a, b));
                         }, x68});
        cases.push_back({"mul", [&](Graph& g, NodeId l) {
                             auto [a, b] = split(g, l);
                             return weighted(g, g.mul(a, b));
                         }, x68});
        cases.push_back({"div", [&](Graph& g, NodeId l) {
                             auto [a, b] = split(g, l);
                             return weighted(g, g.div(a, b));
                         }, x68});
        cases.push_back({"matmul", [&](Graph& g, NodeId l) {
                             auto [a, b] = split(g, l);
                             return g.sum(g.matmul(a, b, false, true));
                         }, x68});
        cases.push_back({"matmul-tn", [&](Graph& g, NodeId l) {
                             auto [a, b] = split(g, l);
                             return g.sum(g.matmul(a, b, true, false));
                         }, x68});
        cases.push_back({"tanh", [&](Graph& g, NodeId l) { return weighted(g, g.tanh(l)); }, x34});
        cases.push_back({"relu", [&](Graph& g, NodeId l) { return weighted(g, g.relu(l)); }, xneg});
        cases.push_back({"exp", [&](Graph& g, NodeId l) { return weighted(g, g.exp(l)); }, x34});
        cases.push_back({"log", [&](Graph& g, NodeId l) { return weighted(g, g.log(l)); }, x34});
        cases.push_back({"sum", [&](Graph& g, NodeId l) { return g.sum(g.square(l)); }, x34});
        cases.push_back({"mean", [&](Graph& g, NodeId l) { return g.mean(g.square(l)); }, x34});
        cases.push_back({"min-axis-1", [&](Graph& g, NodeId l) {
                             return g.sum(g.square(g.min_axis(l, 1)));
                         }, xgap});
        cases.push_back({"min-axis-0", [&](Graph& g, NodeId l) {
                             return g.sum(g.square(g.min_axis(l, 0)));
                         }, xgap});
        cases.push_back({"square", [&](Graph& g, NodeId l) { return weighted(g, g.square(l)); }, x34});
        cases.push_back({"sqrt", [&](Graph& g, NodeId l) { return weighted(g, g.sqrt(l)); }, x34});
        cases.push_back({"negate", [&](Graph& g, NodeId l) { return weighted(g, g.neg(l)); }, x34});
        cases.push_back({"broadcast-cell", [&](Graph& g, NodeId l) {
                             NodeId cell = g.slice(l, 0, 1, 0, 1);
                             return weighted(g, g.broadcast(cell, 3, 4));
                         }, x34});
        cases.push_back({"broadcast-row", [&](Graph& g, NodeId l) {
                             NodeId row = g.slice(l, 0, 1, 0, 4);
                             return weighted(g, g.broadcast(row, 3, 4));
                         }, x34});
        cases.push_back({"broadcast-col", [&](Graph& g, NodeId l) {
                             NodeId col = g.slice(l, 0, 3, 0, 1);
                             return weighted(g, g.broadcast(col, 3, 4));
                         }, x34});
        cases.push_back({"slice", [&](Graph& g, NodeId l) {
                             return g.sum(g.square(g.slice(l, 1, 3, 1, 3)));
                         }, x34});
        cases.push_back({"concat", [&](Graph& g, NodeId l) {
                             auto [a, b] = split(g, l);
                             return g.sum(g.square(g.concat(a, b, 1)));
                         }, x68});

        for (const auto& c : cases) {
            const double err = finite_difference_check(c.fn, c.at, kStep);
            INFO("primitive " << c.name << " seed " << seed);
            CHECK(err <= kTol);
        }
    }
}

TEST_CASE("composite helpers differentiate correctly") {
    Rng rng(77);
    Tensor x = random_tensor(rng, 2, 5, -3, 3);
    for (auto& v : x.v)
        if (std::fabs(v - 1.0) < 0.05 || std::fabs(v + 1.0) < 0.05) v += 0.2;
    auto clamp_fn = [](Graph& g, NodeId l) { return g.sum(g.square(g.clamp(l, -1.0, 1.0))); };
    CHECK(finite_difference_check(clamp_fn, x, 1e-6) <= 1e-6);

    Graph g;
    NodeId l = g.leaf(x, false);
    Tensor clamped = g.value(g.clamp(l, -1.0, 1.0));
    for (size_t i = 0; i < x.size(); ++i)
        CHECK(clamped.v[i] == std::min(1.0, std::max(-1.0, x.v[i])));
}

TEST_CASE("min-over-axis ties route the subgradient to the lowest index") {
    Graph g;
    NodeId x = g.leaf(Tensor(1, 3, {2.0, 2.0, 5.0}), true);
    NodeId m = g.min_axis(x, 1);
    Tensor grad = g.value(g.gradient(g.sum(m), {x}).at(x));
    CHECK(grad.v == std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("relu subgradient at zero is zero") {
    Graph g;
    NodeId x = g.leaf(Tensor(1, 3, {-1.0, 0.0, 2.0}), true);
    Tensor grad = g.value(g.gradient(g.sum(g.relu(x)), {x}).at(x));
    CHECK(grad.v == std::vector<double>{0.0, 0.0, 1.0});
}
