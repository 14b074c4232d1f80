#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "tdlgm/recognition.hpp"

using namespace tdlgm;

namespace {

void zero_all(ParamSet& ps) {
    for (auto& [name, t] : ps.entries()) std::fill(t.data.begin(), t.data.end(), 0.0);
}

}  // namespace

TEST_SUITE("recognition") {

TEST_CASE("zero params give mu 0 and softplus-floor variance") {
    LatentRecognizer rec = make_latent_recognizer(3, 4, 1);
    zero_all(rec.params);
    auto specs = latent_recognize(rec, 0.37);
    REQUIRE(specs.size() == 3);
    const double expected = std::log(2.0) + 1e-6;
    for (const auto& s : specs)
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(s.mu[i] == 0.0);
            CHECK(s.diag_cov[i] == doctest::Approx(expected).epsilon(1e-12));
        }
}

TEST_CASE("variances stay positive for any input") {
    LatentRecognizer rec = make_latent_recognizer(2, 3, 9);
    for (double v : {-10.0, -1.0, 0.0, 0.5, 1.0, 10.0})
        for (const auto& s : latent_recognize(rec, v))
            for (double c : s.diag_cov.data) CHECK(c > 0.0);
}

TEST_CASE("latent recognition is deterministic") {
    LatentRecognizer rec = make_latent_recognizer(3, 4, 2);
    auto a = latent_recognize(rec, 0.8);
    auto b = latent_recognize(rec, 0.8);
    for (std::size_t l = 0; l < a.size(); ++l)
        for (std::size_t i = 0; i < a[l].mu.numel(); ++i) {
            CHECK(a[l].mu[i] == b[l].mu[i]);
            CHECK(a[l].diag_cov[i] == b[l].diag_cov[i]);
        }
}

TEST_CASE("reparam with unit spec returns the raw draw") {
    GaussianSpec spec{Tensor({3}), Tensor({3}, {1.0, 1.0, 1.0})};
    Rng a(12), b(12);
    Tensor out = reparam_sample(spec, a);
    for (std::size_t i = 0; i < 3; ++i) CHECK(out[i] == doctest::Approx(b.normal()));
}

TEST_CASE("reparam collapses to mu in the degenerate limit") {
    GaussianSpec spec{Tensor({2}, {0.4, -0.7}), Tensor({2}, {1e-12, 1e-12})};
    Rng rng(5);
    Tensor out = reparam_sample(spec, rng);
    CHECK(std::fabs(out[0] - 0.4) < 1e-5);
    CHECK(std::fabs(out[1] + 0.7) < 1e-5);
}

TEST_CASE("gradient of reparam sum w.r.t. mu is all ones") {
    ParamSet ps;
    ps.add("mu", Tensor({3}, {0.1, 0.2, 0.3}));
    Tape tape;
    BoundParams bound = bind_params(tape, ps);
    Rng rng(7);
    GaussianSpecV spec{bound.at("mu"), tape.constant(Tensor({3}, {0.5, 1.0, 2.0}))};
    Value root = sum(reparam_sample(tape, spec, rng));
    GradientMap g = tape.backward(root, ps);
    for (double v : g.at("mu").data) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("reparam empirical moments match the spec") {
    const std::size_t n = 100000;
    GaussianSpec spec{Tensor({2}, {0.3, -1.0}), Tensor({2}, {0.5, 2.0})};
    Rng rng(123);
    std::vector<double> d0, d1;
    d0.reserve(n);
    d1.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor s = reparam_sample(spec, rng);
        d0.push_back(s[0]);
        d1.push_back(s[1]);
    }
    auto [m0, v0] = oracle::sample_mean_var(d0);
    auto [m1, v1] = oracle::sample_mean_var(d1);
    CHECK(std::fabs(m0 - 0.3) < 0.02 * std::sqrt(0.5) + 0.01);
    CHECK(std::fabs(m1 + 1.0) < 0.02 * std::sqrt(2.0) + 0.01);
    CHECK(std::fabs(v0 - 0.5) / 0.5 < 0.02);
    CHECK(std::fabs(v1 - 2.0) / 2.0 < 0.02);
}

TEST_CASE("identical windows give identical state stacks") {
    StateRecognizer rec = make_state_recognizer(3, 8, 4, 6, 3);
    std::vector<double> window{0.1, 0.9, 0.4, 0.5};
    StateStack a = recognize_state(rec, window);
    StateStack b = recognize_state(rec, window);
    REQUIRE(a.size() == 2);
    for (std::size_t l = 0; l < a.size(); ++l)
        for (std::size_t i = 0; i < a[l].hidden.numel(); ++i) {
            CHECK(a[l].hidden[i] == b[l].hidden[i]);
            CHECK(a[l].cell[i] == b[l].cell[i]);
        }
}

TEST_CASE("short windows equal the explicit mid-range padding") {
    StateRecognizer rec = make_state_recognizer(3, 6, 4, 6, 8);
    std::vector<double> short_win{0.2, 0.8, 0.3, 0.6};  // length m-2
    std::vector<double> padded{0.5, 0.5, 0.2, 0.8, 0.3, 0.6};
    StateStack a = recognize_state(rec, short_win);
    StateStack b = recognize_state(rec, padded);
    for (std::size_t l = 0; l < a.size(); ++l)
        for (std::size_t i = 0; i < a[l].hidden.numel(); ++i) {
            CHECK(a[l].hidden[i] == b[l].hidden[i]);
            CHECK(a[l].cell[i] == b[l].cell[i]);
        }
}

TEST_CASE("zero params recognize zero states") {
    StateRecognizer rec = make_state_recognizer(3, 5, 4, 6, 1);
    zero_all(rec.params);
    StateStack ss = recognize_state(rec, {0.4, 0.6});
    for (const auto& s : ss) {
        for (double v : s.hidden.data) CHECK(v == 0.0);
        for (double v : s.cell.data) CHECK(v == 0.0);
    }
}

TEST_CASE("empty window is rejected") {
    StateRecognizer rec = make_state_recognizer(3, 5, 4, 6, 1);
    CHECK_THROWS_AS(recognize_state(rec, {}), std::invalid_argument);
}

TEST_CASE("recognized hidden states respect the tanh bound") {
    StateRecognizer rec = make_state_recognizer(4, 8, 6, 12, 101);
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> window(8);
        for (double& v : window) v = rng.uniform();
        for (const auto& s : recognize_state(rec, window))
            for (double v : s.hidden.data) CHECK(std::fabs(v) < 1.0);
    }
}

}  // TEST_SUITE
