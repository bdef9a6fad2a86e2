#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "edac/checkpoint.hpp"
#include "edac/ensemble.hpp"
#include "edac/policy.hpp"

using namespace edac;

namespace {

Tensor random_tensor(Rng& rng, int r, int c, double lo, double hi) {
    Tensor t(r, c);
    for (auto& x : t.v) x = rng.uniform(lo, hi);
    return t;
}

// Log density of the squashed Gaussian at a given action, computed from the
// change of variables: log N(atanh(a); mu, sigma) - sum log(1 - a^2 + eps).
double log_prob_at(const GaussianPolicy& p, const std::vector<double>& state,
                   const std::vector<double>& action, double eps) {
    std::vector<double> out = mlp_forward_plain(p.trunk, state);
    double lp = 0.0;
    for (int i = 0; i < p.action_dim; ++i) {
        const double mu = out[i];
        const double ls = std::min(kLogSigmaMax, std::max(kLogSigmaMin, out[p.action_dim + i]));
        const double sigma = std::exp(ls);
        const double u = std::atanh(action[i]);
        lp += norm_log_pdf((u - mu) / sigma) - ls;
        lp -= std::log(1.0 - action[i] * action[i] + eps);
    }
    return lp;
}

}  // namespace

TEST_CASE("init_params is deterministic and respects the fan-in bound") {
    Mlp a = init_params({4, 8, 1}, 77);
    Mlp b = init_params({4, 8, 1}, 77);
    CHECK(a == b);
    Mlp c = init_params({4, 8, 1}, 78);
    CHECK_FALSE(a == c);
    for (double w : a.weights[0].v) CHECK(std::fabs(w) <= 0.5);  // fan_in = 4
    for (double bias : a.biases[0].v) CHECK(bias == 0.0);
    CHECK_THROWS_AS(init_params({3}, 1), ConfigError);
}

TEST_CASE("q_forward basics") {
    const int sd = 2, ad = 1;
    QEnsemble e = init_ensemble(sd, ad, {4, 4}, 3, 5);

    SECTION("zero weights with bias b gives constant output b") {
        for (Mlp& m : e.members) {
            for (Tensor& w : m.weights)
                for (auto& x : w.v) x = 0.0;
            m.biases.back().v[0] = 2.5;
        }
        Graph g;
        EnsembleNodes nets = insert_ensemble(g, e, Which::Members, false);
        Rng rng(1);
        NodeId s = g.constant(random_tensor(rng, 4, sd, -1, 1));
        NodeId a = g.constant(random_tensor(rng, 4, ad, -1, 1));
        for (NodeId q : q_forward(g, nets, s, a))
            for (double v : g.value(q).v) CHECK(v == 2.5);
    }

    SECTION("identical members produce identical outputs") {
        e.members[1] = e.members[0];
        Graph g;
        EnsembleNodes nets = insert_ensemble(g, e, Which::Members, false);
        Rng rng(2);
        NodeId s = g.constant(random_tensor(rng, 3, sd, -1, 1));
        NodeId a = g.constant(random_tensor(rng, 3, ad, -1, 1));
        auto qs = q_forward(g, nets, s, a);
        CHECK(g.value(qs[0]) == g.value(qs[1]));
    }

    SECTION("matches a loop of single-member forwards") {
        Graph g;
        EnsembleNodes nets = insert_ensemble(g, e, Which::Members, false);
        Rng rng(3);
        Tensor s = random_tensor(rng, 5, sd, -1, 1);
        Tensor a = random_tensor(rng, 5, ad, -1, 1);
        auto qs = q_forward(g, nets, g.constant(s), g.constant(a));
        for (int j = 0; j < e.size(); ++j) {
            Tensor got = g.value(qs[j]);
            for (int row = 0; row < 5; ++row) {
                std::vector<double> x{s.at(row, 0), s.at(row, 1), a.at(row, 0)};
                const double want = mlp_forward_plain(e.members[j], x)[0];
                CHECK_THAT(got.at(row, 0), Catch::Matchers::WithinRel(want, 1e-14));
            }
        }
    }

    SECTION("batch mismatch raises") {
        Graph g;
        EnsembleNodes nets = insert_ensemble(g, e, Which::Members, false);
        NodeId s = g.constant(Tensor::zeros(4, sd));
        NodeId a = g.constant(Tensor::zeros(3, ad));
        CHECK_THROWS_AS(q_forward(g, nets, s, a), ShapeError);
    }
}

TEST_CASE("q_forward gradients pass finite-difference checks") {
    const int sd = 2, ad = 2;
    QEnsemble e = init_ensemble(sd, ad, {6, 6}, 2, 11);
    Rng rng(13);
    Tensor s = random_tensor(rng, 3, sd, -1, 1);
    Tensor a = random_tensor(rng, 3, ad, -0.8, 0.8);
    Tensor w = random_tensor(rng, 3, 1, -1, 1);

    auto wrt_action = [&](Graph& g, NodeId leaf) {
        EnsembleNodes nets = insert_ensemble(g, e, Which::Members, false);
        auto qs = q_forward(g, nets, g.constant(s), leaf);
        return g.sum(g.mul(qs[0], g.constant(w)));
    };
    CHECK(finite_difference_check(wrt_action, a, 1e-5) <= 1e-6);

    // With respect to one weight tensor of member 0.
    Tensor w0 = e.members[0].weights[1];
    auto wrt_param = [&](Graph& g, NodeId leaf) {
        MlpNodes net = insert_params(g, e.members[0], false);
        net.weights[1] = leaf;
        NodeId x = g.concat(g.constant(s), g.constant(a), 1);
        return g.sum(g.mul(mlp_forward(g, net, x), g.constant(w)));
    };
    CHECK(finite_difference_check(wrt_param, w0, 1e-5) <= 1e-6);
}

TEST_CASE("policy_sample closed-form cases") {
    // Zero trunk: mu = 0, log sigma = 0 so sigma = 1.
    GaussianPolicy p = init_policy(2, 1, {4}, 3);
    for (Tensor& w : p.trunk.weights)
        for (auto& x : w.v) x = 0.0;

    Graph g;
    MlpNodes trunk = insert_params(g, p.trunk, false);
    NodeId state = g.constant(Tensor(1, 2, {0.3, -0.7}));
    PolicySample ps = policy_sample(g, trunk, 1, state, Tensor::zeros(1, 1));
    CHECK(g.value(ps.action).item() == 0.0);
    const double want = -0.5 * std::log(kTwoPi) - std::log(1.0 + kTanhEps);
    CHECK_THAT(g.value(ps.log_prob).item(), Catch::Matchers::WithinAbs(want, 1e-12));
    CHECK_THAT(g.value(ps.log_prob).item(), Catch::Matchers::WithinAbs(-0.9189, 2e-4));

    // noise = 0 collapses the sample to tanh(mu) for any trunk.
    GaussianPolicy q = init_policy(2, 3, {8, 8}, 17);
    Graph g2;
    MlpNodes trunk2 = insert_params(g2, q.trunk, false);
    Rng rng(23);
    Tensor s = random_tensor(rng, 4, 2, -1, 1);
    PolicySample ps2 = policy_sample(g2, trunk2, 3, g2.constant(s), Tensor::zeros(4, 3));
    Tensor act = g2.value(ps2.action);
    Tensor mu = g2.value(ps2.mean);
    for (size_t i = 0; i < act.size(); ++i)
        CHECK_THAT(act.v[i], Catch::Matchers::WithinAbs(std::tanh(mu.v[i]), 1e-15));
}

TEST_CASE("policy actions stay strictly inside (-1,1)") {
    GaussianPolicy p = init_policy(3, 2, {8}, 29);
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        Graph g;
        MlpNodes trunk = insert_params(g, p.trunk, false);
        Tensor s = random_tensor(rng, 2, 3, -50, 50);
        Tensor noise = random_tensor(rng, 2, 2, -10, 10);
        PolicySample ps = policy_sample(g, trunk, 2, g.constant(s), noise);
        for (double a : g.value(ps.action).v) {
            CHECK(a > -1.0);
            CHECK(a < 1.0);
        }
    }
}

TEST_CASE("log_prob matches the change-of-variables oracle") {
    GaussianPolicy p = init_policy(2, 2, {6}, 41);
    Rng rng(43);
    int checked = 0;
    while (checked < 200) {
        Graph g;
        MlpNodes trunk = insert_params(g, p.trunk, false);
        Tensor s = random_tensor(rng, 1, 2, -1, 1);
        Tensor noise = random_tensor(rng, 1, 2, -2, 2);
        PolicySample ps = policy_sample(g, trunk, 2, g.constant(s), noise, /*tanh_eps=*/0.0);
        Tensor a = g.value(ps.action);
        bool interior = true;
        for (double x : a.v) interior = interior && std::fabs(x) < 0.99;
        if (!interior) continue;
        const double oracle = log_prob_at(p, s.v, a.v, 0.0);
        CHECK_THAT(g.value(ps.log_prob).item(), Catch::Matchers::WithinAbs(oracle, 1e-6));
        ++checked;
    }
}

TEST_CASE("squashed density integrates to one over the action space") {
    GaussianPolicy p = init_policy(2, 1, {6}, 53);
    std::vector<double> state{0.4, -0.2};
    Rng rng(59);
    const int n = 1000000;
    double integral = 0.0;
    for (int i = 0; i < n; ++i) {
        const double a = rng.uniform(-1.0, 1.0);
        integral += std::exp(log_prob_at(p, state, {a}, kTanhEps));
    }
    integral *= 2.0 / n;  // measure of (-1,1)
    CHECK_THAT(integral, Catch::Matchers::WithinAbs(1.0, 1e-2));
}

TEST_CASE("soft_update arithmetic and contraction") {
    QEnsemble e = init_ensemble(2, 1, {4}, 2, 61);
    Rng rng(67);
    for (Mlp& t : e.targets)
        for (Tensor* param : t.params())
            for (auto& x : param->v) x = rng.uniform(-1, 1);

    SECTION("rho = 1 leaves targets unchanged") {
        QEnsemble before = e;
        soft_update(e, 1.0);
        CHECK(e.targets == before.targets);
    }
    SECTION("rho = 0 copies members") {
        soft_update(e, 0.0);
        CHECK(e.targets == e.members);
    }
    SECTION("midpoint example") {
        e.members[0].weights[0].v[0] = 4.0;
        e.targets[0].weights[0].v[0] = 2.0;
        soft_update(e, 0.5);
        CHECK(e.targets[0].weights[0].v[0] == 3.0);
    }
    SECTION("distance to members contracts by exactly rho") {
        const double rho = 0.9;
        auto distance = [&] {
            double s = 0.0;
            for (size_t j = 0; j < e.members.size(); ++j) {
                auto mp = e.members[j].params();
                auto tp = e.targets[j].params();
                for (size_t p = 0; p < mp.size(); ++p)
                    for (size_t i = 0; i < mp[p]->v.size(); ++i) {
                        const double d = tp[p]->v[i] - mp[p]->v[i];
                        s += d * d;
                    }
            }
            return std::sqrt(s);
        };
        const double before = distance();
        soft_update(e, rho);
        CHECK_THAT(distance(), Catch::Matchers::WithinRel(rho * before, 1e-12));
    }
    SECTION("rho outside [0,1] rejected") {
        CHECK_THROWS_AS(soft_update(e, 1.5), ConfigError);
        CHECK_THROWS_AS(soft_update(e, -0.1), ConfigError);
    }
}

TEST_CASE("checkpoint round trip and error kinds") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "edac_ckpt_test";
    fs::create_directories(dir);
    const std::string path = (dir / "net.edac").string();

    GaussianPolicy p = init_policy(3, 2, {8, 8, 8}, 71);
    QEnsemble e = init_ensemble(3, 2, {8, 8, 8}, 4, 73);

    std::vector<NamedTensors> nets{pack_mlp("policy", p.trunk)};
    for (int j = 0; j < e.size(); ++j) {
        nets.push_back(pack_mlp("member_" + std::to_string(j), e.members[j]));
        nets.push_back(pack_mlp("target_" + std::to_string(j), e.targets[j]));
    }
    nets.push_back(NamedTensors{"temperature", {Tensor::scalar(0.2)}});
    save_checkpoint(path, nets);

    auto loaded = load_checkpoint(path);
    REQUIRE(loaded.size() == nets.size());
    CHECK(unpack_mlp(loaded[0]) == p.trunk);
    CHECK(unpack_mlp(loaded[1]) == e.members[0]);
    CHECK(loaded.back().tensors[0].item() == 0.2);

    SECTION("corrupt magic is a magic error, not a crash") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("XXXX", 4);
        f.close();
        CHECK_THROWS_AS(load_checkpoint(path), IoError);
        try {
            load_checkpoint(path);
        } catch (const IoError& err) {
            CHECK(err.kind == IoError::Kind::Magic);
        }
    }
    SECTION("truncation detected") {
        auto size = fs::file_size(path);
        fs::resize_file(path, size - 9);
        try {
            load_checkpoint(path);
            FAIL("expected IoError");
        } catch (const IoError& err) {
            CHECK(err.kind == IoError::Kind::Truncated);
        }
    }
    SECTION("bad version detected") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(8);
        const char bad[4] = {99, 0, 0, 0};
        f.write(bad, 4);
        f.close();
        try {
            load_checkpoint(path);
            FAIL("expected IoError");
        } catch (const IoError& err) {
            CHECK(err.kind == IoError::Kind::Version);
        }
    }
    fs::remove_all(dir);
}
