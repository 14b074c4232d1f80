#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "tdlgm/baselines.hpp"
#include "tdlgm/eval.hpp"

using namespace tdlgm;

TEST_SUITE("baselines") {

TEST_CASE("zero-parameter predictor outputs zero") {
    RnnPredictor m = make_rnn(RnnArch{4}, 1);
    for (auto& [name, t] : m.params.entries()) std::fill(t.data.begin(), t.data.end(), 0.0);
    auto [pred, state] = rnn_predict_step(m, 0.7, zero_layer_state(4));
    CHECK(pred == 0.0);
}

TEST_CASE("state threading changes the second prediction") {
    RnnPredictor m = make_rnn(RnnArch{6}, 11);
    LayerState s0 = zero_layer_state(6);
    auto [p1, s1] = rnn_predict_step(m, 0.8, s0);
    auto [threaded, s2] = rnn_predict_step(m, 0.3, s1);
    auto [reset, s3] = rnn_predict_step(m, 0.3, s0);
    CHECK(threaded != reset);
}

TEST_CASE("squared-error gradient matches finite differences") {
    RnnPredictor m = make_rnn(RnnArch{3}, 21);
    const double err = grad_check(
        [&](Tape& tape, const ParamSet& p) {
            BoundParams bound = bind_params(tape, p);
            LayerStateV state = lift(tape, zero_layer_state(3));
            Value se = tape.constant_scalar(0.0);
            const double xs[3] = {0.2, 0.7, 0.4};
            const double ys[3] = {0.7, 0.4, 0.6};
            for (int t = 0; t < 3; ++t) {
                RnnStepOut out = rnn_predict_step(tape, bound, m,
                                                  tape.constant(Tensor::vec({xs[t]})), state);
                se = add(se, sum(square(sub(out.prediction, tape.constant_scalar(ys[t])))));
                state = out.state;
            }
            return se;
        },
        m.params, 1e-5);
    CHECK(err < 1e-3);
}

TEST_CASE("dlgm reconstruction validates the window and stays in range") {
    DlgmArch arch;
    arch.layers = 2;
    arch.hidden_dim = 4;
    arch.latent_dim = 2;
    arch.history_w = 3;
    DlgmInstance inst = make_dlgm(arch, 5);
    CHECK_THROWS_AS(dlgm_reconstruct(inst, {0.5}, 0.4), std::invalid_argument);
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const double v = dlgm_reconstruct(inst, {rng.uniform(), rng.uniform(), rng.uniform()},
                                          rng.uniform());
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("dlgm reconstruction with w=0 degenerates to the stateless decode") {
    DlgmArch arch;
    arch.layers = 2;
    arch.hidden_dim = 4;
    arch.latent_dim = 2;
    arch.history_w = 0;
    DlgmInstance inst = make_dlgm(arch, 6);
    const double a = dlgm_reconstruct(inst, {}, 0.4);
    const double b = dlgm_reconstruct(inst, {}, 0.4);
    CHECK(a == b);
    std::vector<GaussianSpec> specs = latent_recognize(inst.q, 0.4);
    std::vector<Tensor> xi;
    for (const auto& s : specs) xi.push_back(s.mu);
    CHECK(a == clamp01(dlgm_generate(inst.gen, xi, {})));
}

}  // TEST_SUITE
