#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdlgm/autodiff.hpp"
#include "tdlgm/generator.hpp"
#include "tdlgm/nn.hpp"
#include "tdlgm/recognition.hpp"

namespace tdlgm {

// ---------------------------------------------------------------------------
// plain recurrent next-step predictor: one LSTM layer + linear head

struct RnnPredictor {
    int hidden_dim = 0;
    ParamSet params;  // rnn.lstm.*, rnn.head.*
};

struct RnnArch {
    int hidden_dim = 32;
};

inline ArchSpec rnn_arch_spec(const RnnArch& a) {
    ArchSpec arch;
    arch.entries.push_back(ArchEntry::make_lstm("rnn.lstm", LstmDims{1, a.hidden_dim}));
    arch.entries.push_back(ArchEntry::make_mlp("rnn.head", MlpSpec{a.hidden_dim, 1}));
    return arch;
}

inline RnnPredictor make_rnn(const RnnArch& arch, std::uint64_t seed) {
    RnnPredictor m;
    m.hidden_dim = arch.hidden_dim;
    m.params = init_params(rnn_arch_spec(arch), seed);
    return m;
}

struct RnnStepOut {
    Value prediction;  // shape {1}
    LayerStateV state;
};

inline RnnStepOut rnn_predict_step(Tape& tape, const BoundParams& bound, const RnnPredictor& m,
                                   Value v_t, const LayerStateV& state) {
    LayerStateV next =
        lstm_step(tape, bound, "rnn.lstm", LstmDims{1, m.hidden_dim}, v_t, state);
    Value pred = mlp_forward(tape, bound, "rnn.head", MlpSpec{m.hidden_dim, 1}, next.hidden);
    return RnnStepOut{pred, next};
}

inline std::pair<double, LayerState> rnn_predict_step(const RnnPredictor& m, double v_t,
                                                      const LayerState& state) {
    Tape tape;
    BoundParams bound = bind_params(tape, m.params);
    RnnStepOut out = rnn_predict_step(tape, bound, m, tape.constant(Tensor::vec({v_t})),
                                      lift(tape, state));
    return {out.prediction.scalar(), LayerState{out.state.hidden.tensor(),
                                                out.state.cell.tensor()}};
}

// ---------------------------------------------------------------------------
// DLGM reconstruction: posterior mean decode conditioned on the history window

inline double dlgm_reconstruct(const DlgmInstance& inst, const std::vector<double>& window,
                               double v_t) {
    if (static_cast<int>(window.size()) != inst.gen.history_w)
        throw std::invalid_argument("dlgm_reconstruct: window length " +
                                    std::to_string(window.size()) + ", expected " +
                                    std::to_string(inst.gen.history_w));
    std::vector<GaussianSpec> specs = latent_recognize(inst.q, v_t);
    std::vector<Tensor> xi;
    xi.reserve(specs.size());
    for (const GaussianSpec& s : specs) xi.push_back(s.mu);  // deterministic decode
    return clamp01(dlgm_generate(inst.gen, xi, window));
}

}  // namespace tdlgm
