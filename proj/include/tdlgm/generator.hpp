#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdlgm/autodiff.hpp"
#include "tdlgm/nn.hpp"
#include "tdlgm/recognition.hpp"
#include "tdlgm/rng.hpp"

namespace tdlgm {

inline double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// ---------------------------------------------------------------------------
// TDLGM generator: layered latent draws interleaved with recurrent state.
//
//   h_L   = G_L xi_L
//   h_l   = R_l(h_{l+1}, s_l) + G_l xi_l          l = L-1 .. 1
//   s_l'  = state of the same R_l step
//   v     ~ N(T_0(h_1), sigma_out^2)
//
// Each recurrent layer's state update consumes the h coming from the layer
// above, i.e. the same input its R_l consumed.

struct TdlgmModel {
    int layers = 0;      // L >= 2
    int latent_dim = 0;  // width of each xi_l
    int hidden_dim = 0;  // width of every h_l and of the recurrent state
    double sigma_out = 0.05;
    MlpSpec out_spec;  // T_0: hidden_dim -> ... -> 1
    ParamSet params;   // gen.G{l}, gen.lstm{l}.*, gen.out.*
};

struct TdlgmArch {
    int layers = 3;
    int latent_dim = 4;
    int hidden_dim = 32;
    int window_m = 8;
    int srec_hidden = 32;
    int out_hidden = 32;
    double sigma_out = 0.05;
};

// Generator plus its two recognition models; they train jointly.
struct TdlgmInstance {
    TdlgmModel gen;
    LatentRecognizer q;
    StateRecognizer srec;
};

inline ArchSpec tdlgm_generator_arch(const TdlgmArch& a) {
    ArchSpec arch;
    for (int l = 1; l <= a.layers; ++l)
        arch.entries.push_back(ArchEntry::make_matrix(
            "gen.G" + std::to_string(l), static_cast<std::size_t>(a.hidden_dim),
            static_cast<std::size_t>(a.latent_dim)));
    for (int l = 1; l <= a.layers - 1; ++l)
        arch.entries.push_back(ArchEntry::make_lstm("gen.lstm" + std::to_string(l),
                                                    LstmDims{a.hidden_dim, a.hidden_dim}));
    arch.entries.push_back(
        ArchEntry::make_mlp("gen.out", MlpSpec{a.hidden_dim, a.out_hidden, 1}));
    return arch;
}

inline TdlgmInstance make_tdlgm(const TdlgmArch& arch, std::uint64_t seed) {
    if (arch.layers < 2) throw std::invalid_argument("tdlgm needs at least 2 layers");
    TdlgmInstance inst;
    inst.gen.layers = arch.layers;
    inst.gen.latent_dim = arch.latent_dim;
    inst.gen.hidden_dim = arch.hidden_dim;
    inst.gen.sigma_out = arch.sigma_out;
    inst.gen.out_spec = MlpSpec{arch.hidden_dim, arch.out_hidden, 1};
    inst.gen.params = init_params(tdlgm_generator_arch(arch), seed);
    inst.q = make_latent_recognizer(arch.layers, arch.latent_dim, seed + 1);
    inst.srec = make_state_recognizer(arch.layers, arch.window_m, arch.hidden_dim,
                                      arch.srec_hidden, seed + 2);
    return inst;
}

inline StateStack zero_states(const TdlgmModel& model) {
    StateStack ss;
    for (int l = 1; l <= model.layers - 1; ++l) ss.push_back(zero_layer_state(model.hidden_dim));
    return ss;
}

// One standard-normal vector per layer.
inline std::vector<Tensor> sample_latent(const TdlgmModel& model, Rng& rng) {
    std::vector<Tensor> xi;
    xi.reserve(model.layers);
    for (int l = 0; l < model.layers; ++l) {
        Tensor t({static_cast<std::size_t>(model.latent_dim)});
        for (double& v : t.data) v = rng.normal();
        xi.push_back(std::move(t));
    }
    return xi;
}

struct GenStepOut {
    Value v_mean;        // T_0(h_1), shape {1}
    StateStackV states;  // next states, layers 1..L-1
    std::vector<Value> h;  // h[i] is h_{i+1}
};

inline GenStepOut generate_step(Tape& tape, const BoundParams& bound, const TdlgmModel& model,
                                const StateStackV& states, const std::vector<Value>& xi) {
    const int L = model.layers;
    if (static_cast<int>(xi.size()) != L)
        throw std::invalid_argument("generate_step: expected " + std::to_string(L) +
                                    " latent vectors, got " + std::to_string(xi.size()));
    if (static_cast<int>(states.size()) != L - 1)
        throw std::invalid_argument("generate_step: expected " + std::to_string(L - 1) +
                                    " layer states, got " + std::to_string(states.size()));

    std::vector<Value> h(L);
    StateStackV next(L - 1);
    const LstmDims dims{model.hidden_dim, model.hidden_dim};

    h[L - 1] = matmul(bound.at("gen.G" + std::to_string(L)), xi[L - 1]);
    for (int l = L - 1; l >= 1; --l) {
        LayerStateV stepped = lstm_step(tape, bound, "gen.lstm" + std::to_string(l), dims,
                                        h[l], states[l - 1]);
        h[l - 1] = add(stepped.hidden, matmul(bound.at("gen.G" + std::to_string(l)), xi[l - 1]));
        next[l - 1] = stepped;
    }

    Value v_mean = mlp_forward(tape, bound, "gen.out", model.out_spec, h[0]);
    return GenStepOut{v_mean, std::move(next), std::move(h)};
}

struct PlainGenStep {
    double v;  // sampled from pi, or the mean in deterministic mode
    StateStack states;
    std::vector<Tensor> h;
};

// rng == nullptr means deterministic mode: the pi mean is returned unsampled.
inline PlainGenStep generate_step(const TdlgmModel& model, const StateStack& states,
                                  const std::vector<Tensor>& xi, Rng* rng = nullptr) {
    Tape tape;
    BoundParams bound = bind_params(tape, model.params);
    std::vector<Value> xi_v;
    xi_v.reserve(xi.size());
    for (const Tensor& t : xi) xi_v.push_back(tape.constant(t));
    GenStepOut out = generate_step(tape, bound, model, lift(tape, states), xi_v);

    PlainGenStep plain;
    plain.v = out.v_mean.scalar();
    if (rng) plain.v += model.sigma_out * rng->normal();
    plain.states = lower(out.states);
    for (const Value& hv : out.h) plain.h.push_back(hv.tensor());
    return plain;
}

// Multi-step generation: fresh latent draws each step, output clamped to [0,1].
enum class GenMode { Sampled, Mean };

inline std::vector<double> rollout(const TdlgmModel& model, StateStack states, int steps,
                                   Rng& rng, GenMode mode) {
    if (steps < 1) throw std::invalid_argument("rollout: steps must be >= 1");
    std::vector<double> out;
    out.reserve(steps);
    for (int i = 0; i < steps; ++i) {
        std::vector<Tensor> xi = sample_latent(model, rng);
        PlainGenStep step =
            generate_step(model, states, xi, mode == GenMode::Sampled ? &rng : nullptr);
        out.push_back(clamp01(step.v));
        states = std::move(step.states);
    }
    return out;
}

// ---------------------------------------------------------------------------
// DLGM baseline: the stateless layer chain, history-conditioned at the bottom.
//
//   h_L = G_L xi_L
//   h_l = T_l(h_{l+1}) + G_l xi_l                 l = L-1 .. 1
//   v   ~ pi(v | T_0(h_1 ++ history))

struct DlgmModel {
    int layers = 0;
    int latent_dim = 0;
    int hidden_dim = 0;
    int history_w = 0;  // history window length; 0 degenerates to pure DLGM
    double sigma_out = 0.05;
    MlpSpec out_spec;  // (hidden_dim + history_w) -> ... -> 1
    ParamSet params;   // dlgm.G{l}, dlgm.T{l}.*, dlgm.out.*
};

struct DlgmArch {
    int layers = 3;
    int latent_dim = 4;
    int hidden_dim = 32;
    int history_w = 8;
    int out_hidden = 32;
    double sigma_out = 0.05;
};

struct DlgmInstance {
    DlgmModel gen;
    LatentRecognizer q;
};

inline ArchSpec dlgm_generator_arch(const DlgmArch& a) {
    ArchSpec arch;
    for (int l = 1; l <= a.layers; ++l)
        arch.entries.push_back(ArchEntry::make_matrix(
            "dlgm.G" + std::to_string(l), static_cast<std::size_t>(a.hidden_dim),
            static_cast<std::size_t>(a.latent_dim)));
    for (int l = 1; l <= a.layers - 1; ++l)
        arch.entries.push_back(ArchEntry::make_mlp(
            "dlgm.T" + std::to_string(l), MlpSpec{a.hidden_dim, a.hidden_dim, a.hidden_dim}));
    arch.entries.push_back(ArchEntry::make_mlp(
        "dlgm.out", MlpSpec{a.hidden_dim + a.history_w, a.out_hidden, 1}));
    return arch;
}

inline DlgmInstance make_dlgm(const DlgmArch& arch, std::uint64_t seed) {
    if (arch.layers < 2) throw std::invalid_argument("dlgm needs at least 2 layers");
    DlgmInstance inst;
    inst.gen.layers = arch.layers;
    inst.gen.latent_dim = arch.latent_dim;
    inst.gen.hidden_dim = arch.hidden_dim;
    inst.gen.history_w = arch.history_w;
    inst.gen.sigma_out = arch.sigma_out;
    inst.gen.out_spec = MlpSpec{arch.hidden_dim + arch.history_w, arch.out_hidden, 1};
    inst.gen.params = init_params(dlgm_generator_arch(arch), seed);
    inst.q = make_latent_recognizer(arch.layers, arch.latent_dim, seed + 1);
    return inst;
}

inline Value dlgm_generate(Tape& tape, const BoundParams& bound, const DlgmModel& model,
                           const std::vector<Value>& xi, const std::vector<double>& history) {
    const int L = model.layers;
    if (static_cast<int>(xi.size()) != L)
        throw std::invalid_argument("dlgm_generate: expected " + std::to_string(L) +
                                    " latent vectors");
    if (static_cast<int>(history.size()) != model.history_w)
        throw std::invalid_argument("dlgm_generate: history length " +
                                    std::to_string(history.size()) + ", expected " +
                                    std::to_string(model.history_w));

    const MlpSpec t_spec{model.hidden_dim, model.hidden_dim, model.hidden_dim};
    Value h = matmul(bound.at("dlgm.G" + std::to_string(L)), xi[L - 1]);
    for (int l = L - 1; l >= 1; --l) {
        Value mapped = mlp_forward(tape, bound, "dlgm.T" + std::to_string(l), t_spec, h);
        h = add(mapped, matmul(bound.at("dlgm.G" + std::to_string(l)), xi[l - 1]));
    }
    Value in = model.history_w > 0 ? concat({h, tape.constant(Tensor::vec(history))}) : h;
    return mlp_forward(tape, bound, "dlgm.out", model.out_spec, in);
}

inline double dlgm_generate(const DlgmModel& model, const std::vector<Tensor>& xi,
                            const std::vector<double>& history) {
    Tape tape;
    BoundParams bound = bind_params(tape, model.params);
    std::vector<Value> xi_v;
    xi_v.reserve(xi.size());
    for (const Tensor& t : xi) xi_v.push_back(tape.constant(t));
    return dlgm_generate(tape, bound, model, xi_v, history).scalar();
}

inline std::vector<Tensor> sample_latent_dlgm(const DlgmModel& model, Rng& rng) {
    std::vector<Tensor> xi;
    xi.reserve(model.layers);
    for (int l = 0; l < model.layers; ++l) {
        Tensor t({static_cast<std::size_t>(model.latent_dim)});
        for (double& v : t.data) v = rng.normal();
        xi.push_back(std::move(t));
    }
    return xi;
}

}  // namespace tdlgm
