#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "edac/analysis.hpp"

using namespace edac;

namespace {

void zero_weights(Mlp& m) {
    for (Tensor& w : m.weights)
        for (auto& x : w.v) x = 0.0;
    for (Tensor& b : m.biases)
        for (auto& x : b.v) x = 0.0;
}

QEnsemble constant_ensemble(int sd, int ad, const std::vector<double>& member_values) {
    QEnsemble e = init_ensemble(sd, ad, {4}, static_cast<int>(member_values.size()), 1);
    for (size_t j = 0; j < member_values.size(); ++j) {
        zero_weights(e.members[j]);
        e.members[j].biases.back().v[0] = member_values[j];
    }
    e.targets = e.members;
    return e;
}

std::vector<double> random_unit_vector(Rng& rng, int dim) {
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

OfflineDataset uniform_dataset(size_t n, uint64_t seed) {
    OfflineDataset d;
    d.spec = env_spec("pointmass1d");
    d.tier = "random";
    d.seed = seed;
    d.anchors = {0.0, 1.0};
    Rng rng(seed);
    while (d.transitions.size() < n) {
        std::vector<double> s = reset(d.spec, rng.raw());
        for (int t = 0; t < d.spec.horizon && d.transitions.size() < n; ++t) {
            std::vector<double> a{rng.uniform(-1.0, 1.0)};
            StepResult r = step(d.spec, s, a, t);
            d.transitions.push_back({s, a, r.reward, r.next_state, false});
            s = r.next_state;
        }
    }
    return d;
}

}  // namespace

TEST_CASE("clip penalty closed forms and naive oracle") {
    SECTION("identical members give zero") {
        QEnsemble e = constant_ensemble(2, 1, {1.7, 1.7, 1.7});
        Tensor s = Tensor::zeros(4, 2), a = Tensor::zeros(4, 1);
        CHECK(clip_penalty(e, s, a) == 0.0);
    }
    SECTION("member values {1,2,3} give mean - min = 1") {
        QEnsemble e = constant_ensemble(2, 1, {1.0, 2.0, 3.0});
        Tensor s = Tensor::zeros(1, 2), a = Tensor::zeros(1, 1);
        CHECK_THAT(clip_penalty(e, s, a), Catch::Matchers::WithinAbs(1.0, 1e-15));
    }
    SECTION("matches an independent plain-loop oracle and is nonnegative") {
        QEnsemble e = init_ensemble(2, 1, {6, 6}, 5, 77);
        Rng rng(78);
        Tensor s(8, 2), a(8, 1);
        for (auto& x : s.v) x = rng.uniform(-1, 1);
        for (auto& x : a.v) x = rng.uniform(-1, 1);
        const double got = clip_penalty(e, s, a);

        double naive = 0.0;
        for (int row = 0; row < 8; ++row) {
            double sum = 0.0, mn = 1e300;
            for (int j = 0; j < e.size(); ++j) {
                const double q = mlp_forward_plain(
                    e.members[j], {s.at(row, 0), s.at(row, 1), a.at(row, 0)})[0];
                sum += q;
                mn = std::min(mn, q);
            }
            naive += sum / e.size() + (-1.0) * mn;
        }
        naive /= 8.0;
        CHECK_THAT(got, Catch::Matchers::WithinRel(naive, 1e-12));
        CHECK(got >= 0.0);
    }
}

TEST_CASE("penalty report identities") {
    SECTION("duplicated-member ensemble reports all zeros") {
        QEnsemble e = init_ensemble(2, 1, {6, 6}, 4, 79);
        for (int j = 1; j < 4; ++j) e.members[j] = e.members[0];
        OfflineDataset d = uniform_dataset(200, 5);
        auto uniform_behavior = [](const std::vector<double>&, Rng& r) {
            return std::vector<double>{r.uniform(-1.0, 1.0)};
        };
        PenaltyReport rep = penalty_report(e, d, uniform_behavior, 64, 11);
        CHECK(rep.mean_penalty_behavior == 0.0);
        CHECK(rep.mean_penalty_random == 0.0);
        CHECK(rep.gap == 0.0);
        CHECK_THAT(rep.q_std_behavior, Catch::Matchers::WithinAbs(0.0, 1e-12));
        CHECK_THAT(rep.q_std_random, Catch::Matchers::WithinAbs(0.0, 1e-12));
    }
    SECTION("gap is random minus behavior by definition") {
        QEnsemble e = init_ensemble(2, 1, {6, 6}, 3, 83);
        OfflineDataset d = uniform_dataset(200, 6);
        auto uniform_behavior = [](const std::vector<double>&, Rng& r) {
            return std::vector<double>{r.uniform(-1.0, 1.0)};
        };
        PenaltyReport rep = penalty_report(e, d, uniform_behavior, 64, 13);
        CHECK(rep.gap == rep.mean_penalty_random - rep.mean_penalty_behavior);
    }
}

TEST_CASE("expected minimum approximation") {
    SECTION("N = 1 returns the mean exactly") {
        CHECK(expected_min_approx(3.25, 2.0, 1) == 3.25);
        CHECK(expected_min_approx(-7.5, 0.0, 1) == -7.5);
    }
    SECTION("N = 2 standard normal is about -0.600") {
        CHECK_THAT(expected_min_approx(0.0, 1.0, 2), Catch::Matchers::WithinAbs(-0.600, 5e-4));
    }
    SECTION("matches Monte-Carlo expected minima within 0.06 sigma") {
        Rng rng(2027);
        for (int n : {2, 5, 10, 50}) {
            const int draws = 200000;
            double acc = 0.0;
            for (int it = 0; it < draws; ++it) {
                double mn = rng.normal();
                for (int j = 1; j < n; ++j) mn = std::min(mn, rng.normal());
                acc += mn;
            }
            const double mc = acc / draws;
            INFO("N = " << n << " MC " << mc);
            CHECK(std::fabs(expected_min_approx(0.0, 1.0, n) - mc) <= 0.06);
        }
    }
    SECTION("N = 10 Monte-Carlo reference value") {
        Rng rng(4242);
        const int draws = 1000000;
        double acc = 0.0;
        for (int it = 0; it < draws; ++it) {
            double mn = rng.normal();
            for (int j = 1; j < 10; ++j) mn = std::min(mn, rng.normal());
            acc += mn;
        }
        CHECK_THAT(acc / draws, Catch::Matchers::WithinAbs(-1.5388, 0.01));
    }
    SECTION("location-scale structure") {
        const double c5 = -expected_min_approx(0.0, 1.0, 5);
        CHECK_THAT(expected_min_approx(2.0, 3.0, 5), Catch::Matchers::WithinAbs(2.0 - 3.0 * c5, 1e-12));
    }
}

TEST_CASE("pairwise cosine similarity of input gradients") {
    Rng rng(91);
    Tensor s(5, 1), a(5, 2);
    for (auto& x : s.v) x = rng.uniform(-1, 1);
    for (auto& x : a.v) x = rng.uniform(-0.8, 0.8);

    // Wide-enough hidden layers keep at least one relu active per row, so
    // the action gradients are nonzero and the cosines are exact.
    SECTION("identical members give 1") {
        QEnsemble e = init_ensemble(1, 2, {12, 12}, 3, 97);
        e.members[1] = e.members[0];
        e.members[2] = e.members[0];
        CHECK_THAT(min_pairwise_cos_sim(e, s, a), Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
    SECTION("negated twin gives -1") {
        QEnsemble e = init_ensemble(1, 2, {12, 12}, 2, 101);
        e.members[1] = e.members[0];
        for (auto& x : e.members[1].weights.back().v) x = -x;
        for (auto& x : e.members[1].biases.back().v) x = -x;
        CHECK_THAT(min_pairwise_cos_sim(e, s, a), Catch::Matchers::WithinAbs(-1.0, 1e-9));
    }
    SECTION("always within [-1, 1]") {
        QEnsemble e = init_ensemble(1, 2, {6, 6}, 6, 103);
        CosSimStats st = pairwise_cos_sim(e, s, a);
        CHECK(st.min_pairwise >= -1.0 - 1e-12);
        CHECK(st.min_pairwise <= 1.0 + 1e-12);
        CHECK(st.mean_pairwise >= st.min_pairwise - 1e-12);
    }
}

TEST_CASE("variance spectrum and the total-variance identity") {
    SECTION("all vectors equal: zero matrix, unit mean norm") {
        std::vector<std::vector<double>> grads(4, std::vector<double>{0.6, 0.8});
        VarianceSpectrum vs = variance_spectrum(grads);
        for (const auto& row : vs.matrix)
            for (double x : row) CHECK_THAT(x, Catch::Matchers::WithinAbs(0.0, 1e-15));
        for (double ev : vs.eigenvalues) CHECK_THAT(ev, Catch::Matchers::WithinAbs(0.0, 1e-14));
        CHECK_THAT(vs.mean_norm, Catch::Matchers::WithinAbs(1.0, 1e-15));
        CHECK_THAT(vs.total_variance, Catch::Matchers::WithinAbs(0.0, 1e-15));
    }
    SECTION("hand-computed two-vector case") {
        VarianceSpectrum vs = variance_spectrum({{1.0, 0.0}, {0.0, 1.0}});
        CHECK_THAT(vs.total_variance, Catch::Matchers::WithinAbs(0.5, 1e-12));
        CHECK_THAT(vs.mean_norm * vs.mean_norm, Catch::Matchers::WithinAbs(0.5, 1e-12));
        REQUIRE(vs.eigenvalues.size() == 2);
        CHECK_THAT(vs.eigenvalues[0], Catch::Matchers::WithinAbs(0.0, 1e-12));
        CHECK_THAT(vs.eigenvalues[1], Catch::Matchers::WithinAbs(0.5, 1e-12));
        CHECK_THAT(vs.matrix[0][0], Catch::Matchers::WithinAbs(0.25, 1e-12));
        CHECK_THAT(vs.matrix[0][1], Catch::Matchers::WithinAbs(-0.25, 1e-12));
    }
    SECTION("total variance equals 1 - ||mean||^2 on 100 random unit families") {
        Rng rng(107);
        for (int trial = 0; trial < 100; ++trial) {
            const int n = 2 + static_cast<int>(rng.below(49));
            const int dim = 2 + static_cast<int>(rng.below(7));
            std::vector<std::vector<double>> grads;
            for (int j = 0; j < n; ++j) grads.push_back(random_unit_vector(rng, dim));
            VarianceSpectrum vs = variance_spectrum(grads);
            CHECK(std::fabs(vs.total_variance - (1.0 - vs.mean_norm * vs.mean_norm)) <= 1e-10);
        }
    }
    SECTION("spectrum reconstructs the matrix and stays consistent") {
        Rng rng(109);
        for (int trial = 0; trial < 20; ++trial) {
            const int n = 3 + static_cast<int>(rng.below(20));
            const int dim = 2 + static_cast<int>(rng.below(7));
            std::vector<std::vector<double>> grads;
            for (int j = 0; j < n; ++j) grads.push_back(random_unit_vector(rng, dim));
            VarianceSpectrum vs = variance_spectrum(grads);

            double eig_total = 0.0;
            for (double ev : vs.eigenvalues) {
                CHECK(ev >= -1e-10);
                eig_total += ev;
            }
            CHECK(std::fabs(eig_total - vs.total_variance) <= 1e-9);
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j) {
                    CHECK(std::fabs(vs.matrix[i][j] - vs.matrix[j][i]) <= 1e-12);
                    double rec = 0.0;
                    for (int k = 0; k < dim; ++k)
                        rec += vs.eigenvalues[k] * vs.eigenvectors[k][i] * vs.eigenvectors[k][j];
                    CHECK(std::fabs(rec - vs.matrix[i][j]) <= 1e-9);
                }
        }
    }
}

TEST_CASE("locally-linear variance bound") {
    SECTION("equal gradients: everything zero, bound holds") {
        std::vector<std::vector<double>> grads(5, std::vector<double>{1.0, 0.0});
        Prop1Result r = prop1_check(grads, 2.0, 0.7);
        CHECK_THAT(r.lhs, Catch::Matchers::WithinAbs(0.0, 1e-15));
        CHECK_THAT(r.bound, Catch::Matchers::WithinAbs(0.0, 1e-15));
        CHECK(r.holds);
    }
    SECTION("orthogonal pair in 2D at k = 1") {
        Prop1Result r = prop1_check({{1.0, 0.0}, {0.0, 1.0}}, 1.0, 0.0);
        CHECK_THAT(r.lhs, Catch::Matchers::WithinAbs(0.0, 1e-12));
        CHECK_THAT(r.bound, Catch::Matchers::WithinAbs(0.25, 1e-12));
        CHECK(r.holds);
    }
    SECTION("100 random instances never violate the bound") {
        Rng rng(113);
        for (int trial = 0; trial < 100; ++trial) {
            const int n = 2 + static_cast<int>(rng.below(49));
            const int dim = 2 + static_cast<int>(rng.below(7));
            std::vector<std::vector<double>> grads;
            for (int j = 0; j < n; ++j) grads.push_back(random_unit_vector(rng, dim));
            const double k = rng.uniform(0.1, 3.0);
            Prop1Result r = prop1_check(grads, k, rng.uniform(-5, 5));
            INFO("trial " << trial << " lhs " << r.lhs << " bound " << r.bound);
            CHECK(r.holds);
        }
    }
}

TEST_CASE("uniform sphere covariance is I/n") {
    for (int n : {2, 8}) {
        SphereCovResult r = sphere_cov_check(n, 1000000, 1234 + n);
        INFO("n = " << n);
        CHECK(r.max_abs_dev <= 3e-3);
        CHECK(r.mean_norm <= 3e-3);
    }
    CHECK_THROWS_AS(sphere_cov_check(1, 10, 0), ConfigError);
}

TEST_CASE("action distance histogram") {
    OfflineDataset d = uniform_dataset(20000, 17);

    SECTION("replaying dataset actions puts all mass at zero") {
        size_t row = 0;
        auto replay = [&](const std::vector<double>&, Rng&) { return d.transitions[row++].a; };
        ActionDistHist h = action_distance_hist(d, replay, 10, 3);
        CHECK(h.mean == 0.0);
        CHECK(h.counts[0] == d.size());
        for (size_t b = 1; b < h.counts.size(); ++b) CHECK(h.counts[b] == 0);
    }
    SECTION("uniform policy vs uniform dataset: mean squared distance 2/3") {
        // E(U-V)^2 = Var U + Var V = 1/3 + 1/3 for independent U,V ~ U(-1,1).
        auto uniform_policy = [](const std::vector<double>&, Rng& r) {
            return std::vector<double>{r.uniform(-1.0, 1.0)};
        };
        ActionDistHist h = action_distance_hist(d, uniform_policy, 16, 5);
        CHECK_THAT(h.mean, Catch::Matchers::WithinAbs(2.0 / 3.0, 0.02));
        size_t total = 0;
        for (size_t c : h.counts) total += c;
        CHECK(total == d.size());
    }
}
