#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdlgm/autodiff.hpp"
#include "tdlgm/nn.hpp"
#include "tdlgm/params.hpp"
#include "tdlgm/rng.hpp"

namespace tdlgm {

// Diagonal Gaussian q(xi | v): mean and per-coordinate variance.
struct GaussianSpec {
    Tensor mu;
    Tensor diag_cov;
};

struct GaussianSpecV {
    Value mu;
    Value diag_cov;
};

inline constexpr double kCovFloor = 1e-6;

// ---------------------------------------------------------------------------
// latent recognition q(xi_l | v_t): linear heads per layer, softplus variance

struct LatentRecognizer {
    int layers = 0;
    int latent_dim = 0;
    ParamSet params;  // q.mu{l}.*, q.cov{l}.* for l = 1..layers
};

inline MlpSpec latent_head_spec(int latent_dim) { return MlpSpec{1, latent_dim}; }

inline ArchSpec latent_recognizer_arch(int layers, int latent_dim) {
    ArchSpec arch;
    for (int l = 1; l <= layers; ++l) {
        arch.entries.push_back(
            ArchEntry::make_mlp("q.mu" + std::to_string(l), latent_head_spec(latent_dim)));
        arch.entries.push_back(
            ArchEntry::make_mlp("q.cov" + std::to_string(l), latent_head_spec(latent_dim)));
    }
    return arch;
}

inline LatentRecognizer make_latent_recognizer(int layers, int latent_dim, std::uint64_t seed) {
    LatentRecognizer rec;
    rec.layers = layers;
    rec.latent_dim = latent_dim;
    rec.params = init_params(latent_recognizer_arch(layers, latent_dim), seed);
    return rec;
}

// softplus(x) + floor keeps every variance strictly positive
inline Value softplus_floor(Tape& tape, Value raw) {
    Value one = tape.constant(Tensor::full(raw.tensor().shape, 1.0));
    Value sp = log(add(one, exp(raw)));
    return add(sp, tape.constant(Tensor::full(raw.tensor().shape, kCovFloor)));
}

inline std::vector<GaussianSpecV> latent_recognize(Tape& tape, const BoundParams& bound,
                                                   const LatentRecognizer& rec, double v_t) {
    if (!std::isfinite(v_t)) throw std::invalid_argument("latent_recognize: non-finite input");
    Value x = tape.constant(Tensor::vec({v_t}));
    const MlpSpec head = latent_head_spec(rec.latent_dim);
    std::vector<GaussianSpecV> specs;
    specs.reserve(rec.layers);
    for (int l = 1; l <= rec.layers; ++l) {
        Value mu = mlp_forward(tape, bound, "q.mu" + std::to_string(l), head, x);
        Value raw = mlp_forward(tape, bound, "q.cov" + std::to_string(l), head, x);
        specs.push_back(GaussianSpecV{mu, softplus_floor(tape, raw)});
    }
    return specs;
}

inline std::vector<GaussianSpec> latent_recognize(const LatentRecognizer& rec, double v_t) {
    Tape tape;
    BoundParams bound = bind_params(tape, rec.params);
    std::vector<GaussianSpec> out;
    for (const auto& s : latent_recognize(tape, bound, rec, v_t))
        out.push_back(GaussianSpec{s.mu.tensor(), s.diag_cov.tensor()});
    return out;
}

// mu + sqrt(diag_cov) * eps with eps entering the graph as a constant, so
// gradients flow to mu and diag_cov only.
inline Value reparam_sample(Tape& tape, const GaussianSpecV& spec, Rng& rng) {
    Tensor eps(spec.mu.tensor().shape);
    for (double& e : eps.data) e = rng.normal();
    Value std_dev = exp(scale(log(spec.diag_cov), 0.5));
    return add(spec.mu, mul(std_dev, tape.constant(std::move(eps))));
}

inline Tensor reparam_sample(const GaussianSpec& spec, Rng& rng) {
    if (!spec.mu.same_shape(spec.diag_cov))
        throw std::invalid_argument("reparam_sample: mu/diag_cov length mismatch");
    Tensor out = spec.mu;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        if (spec.diag_cov[i] <= 0.0)
            throw std::invalid_argument("reparam_sample: non-positive variance");
        out[i] += std::sqrt(spec.diag_cov[i]) * rng.normal();
    }
    return out;
}

// ---------------------------------------------------------------------------
// state recognition F^: one MLP per recurrent layer over the flattened window

struct StateRecognizer {
    int layers = 0;    // generator layer count L; heads exist for l = 1..L-1
    int window_m = 0;  // window length m
    int hidden_dim = 0;
    MlpSpec head;  // window_m -> head_hidden -> 2*hidden_dim
    ParamSet params;
};

inline constexpr double kWindowPad = 0.5;  // mid-range of normalized data

inline ArchSpec state_recognizer_arch(int layers, const MlpSpec& head) {
    ArchSpec arch;
    for (int l = 1; l <= layers - 1; ++l)
        arch.entries.push_back(ArchEntry::make_mlp("srec" + std::to_string(l), head));
    return arch;
}

inline StateRecognizer make_state_recognizer(int layers, int window_m, int hidden_dim,
                                             int head_hidden, std::uint64_t seed) {
    if (window_m < 1) throw std::invalid_argument("state recognizer window must be >= 1");
    StateRecognizer rec;
    rec.layers = layers;
    rec.window_m = window_m;
    rec.hidden_dim = hidden_dim;
    rec.head = MlpSpec{window_m, head_hidden, 2 * hidden_dim};
    rec.params = init_params(state_recognizer_arch(layers, rec.head), seed);
    return rec;
}

// Left-pads short windows with 0.5 up to length m.
inline std::vector<double> pad_window(const std::vector<double>& window, int m) {
    if (window.empty()) throw std::invalid_argument("recognize_state: empty window");
    if (window.size() > static_cast<std::size_t>(m))
        throw std::invalid_argument("recognize_state: window longer than m=" + std::to_string(m));
    std::vector<double> padded(static_cast<std::size_t>(m) - window.size(), kWindowPad);
    padded.insert(padded.end(), window.begin(), window.end());
    return padded;
}

// Hidden head goes through tanh to respect the (-1, 1) state bound; the cell
// head is unconstrained.
inline StateStackV recognize_state(Tape& tape, const BoundParams& bound,
                                   const StateRecognizer& rec,
                                   const std::vector<double>& window) {
    Value x = tape.constant(Tensor::vec(pad_window(window, rec.window_m)));
    const auto hid = static_cast<std::size_t>(rec.hidden_dim);
    StateStackV out;
    out.reserve(rec.layers - 1);
    for (int l = 1; l <= rec.layers - 1; ++l) {
        Value raw = mlp_forward(tape, bound, "srec" + std::to_string(l), rec.head, x);
        Value hidden = tanh(slice(raw, 0, hid));
        Value cell = slice(raw, hid, hid);
        out.push_back(LayerStateV{hidden, cell});
    }
    return out;
}

inline StateStack recognize_state(const StateRecognizer& rec, const std::vector<double>& window) {
    Tape tape;
    BoundParams bound = bind_params(tape, rec.params);
    return lower(recognize_state(tape, bound, rec, window));
}

// Causal window v[max(0, t-m) .. t-1]; t must be >= 1.
inline std::vector<double> causal_window(const std::vector<double>& series, std::size_t t,
                                         int m) {
    if (t == 0) throw std::invalid_argument("causal_window: no values before t=0");
    const std::size_t lo = t > static_cast<std::size_t>(m) ? t - static_cast<std::size_t>(m) : 0;
    return std::vector<double>(series.begin() + lo, series.begin() + t);
}

}  // namespace tdlgm
