#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdlgm/autodiff.hpp"
#include "tdlgm/params.hpp"
#include "tdlgm/rng.hpp"
#include "tdlgm/tensor.hpp"

namespace tdlgm {

// Feed-forward network: tanh on hidden layers, identity at the output.
struct MlpSpec {
    std::vector<int> widths;

    MlpSpec() = default;
    MlpSpec(std::initializer_list<int> w) : widths(w) { validate(); }
    explicit MlpSpec(std::vector<int> w) : widths(std::move(w)) { validate(); }

    void validate() const {
        if (widths.size() < 2)
            throw std::invalid_argument("mlp spec needs at least input and output widths");
        for (int w : widths)
            if (w <= 0) throw std::invalid_argument("mlp widths must be positive");
    }

    int input_width() const { return widths.front(); }
    int output_width() const { return widths.back(); }
    std::size_t layer_count() const { return widths.size() - 1; }
};

struct LstmDims {
    int input_dim = 1;
    int hidden_dim = 1;
};

// Per-layer recurrent state s_{l,t}: (hidden, cell).
struct LayerState {
    Tensor hidden;
    Tensor cell;
};

struct LayerStateV {
    Value hidden;
    Value cell;
};

using StateStack = std::vector<LayerState>;
using StateStackV = std::vector<LayerStateV>;

inline LayerState zero_layer_state(int hidden_dim) {
    return LayerState{Tensor({static_cast<std::size_t>(hidden_dim)}),
                      Tensor({static_cast<std::size_t>(hidden_dim)})};
}

inline LayerStateV lift(Tape& tape, const LayerState& s) {
    return LayerStateV{tape.constant(s.hidden), tape.constant(s.cell)};
}

inline StateStackV lift(Tape& tape, const StateStack& ss) {
    StateStackV out;
    out.reserve(ss.size());
    for (const auto& s : ss) out.push_back(lift(tape, s));
    return out;
}

inline StateStack lower(const StateStackV& ss) {
    StateStack out;
    out.reserve(ss.size());
    for (const auto& s : ss) out.push_back(LayerState{s.hidden.tensor(), s.cell.tensor()});
    return out;
}

// ---------------------------------------------------------------------------
// initialization

namespace init {

inline Tensor xavier(Rng& rng, std::size_t rows, std::size_t cols_fan) {
    // fan_in = cols, fan_out = rows for a (rows x cols) weight applied to a column
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols_fan));
    Tensor t({rows, cols_fan});
    for (double& v : t.data) v = (2.0 * rng.uniform() - 1.0) * bound;
    return t;
}

}  // namespace init

inline void add_mlp_params(ParamSet& ps, const std::string& prefix, const MlpSpec& spec,
                           Rng& rng) {
    for (std::size_t i = 0; i < spec.layer_count(); ++i) {
        const auto rows = static_cast<std::size_t>(spec.widths[i + 1]);
        const auto cols = static_cast<std::size_t>(spec.widths[i]);
        ps.add(prefix + ".W" + std::to_string(i), init::xavier(rng, rows, cols));
        ps.add(prefix + ".b" + std::to_string(i), Tensor({rows}));
    }
}

inline void add_lstm_params(ParamSet& ps, const std::string& prefix, const LstmDims& dims,
                            Rng& rng) {
    const auto in = static_cast<std::size_t>(dims.input_dim);
    const auto hid = static_cast<std::size_t>(dims.hidden_dim);
    const char* gates[4] = {"i", "f", "o", "c"};
    for (const char* g : gates) {
        ps.add(prefix + ".Wx" + g, init::xavier(rng, hid, in));
        ps.add(prefix + ".Wh" + g, init::xavier(rng, hid, hid));
        Tensor b({hid});
        if (g[0] == 'f') std::fill(b.data.begin(), b.data.end(), 1.0);  // forget bias
        ps.add(prefix + ".b" + g, std::move(b));
    }
}

// Architecture description for init_params: a flat list of components.
struct ArchEntry {
    enum class Kind { Mlp, Lstm, Matrix } kind;
    std::string prefix;
    MlpSpec mlp;
    LstmDims lstm;
    std::size_t rows = 0, cols = 0;

    static ArchEntry make_mlp(std::string prefix, MlpSpec spec) {
        ArchEntry e;
        e.kind = Kind::Mlp;
        e.prefix = std::move(prefix);
        e.mlp = std::move(spec);
        return e;
    }
    static ArchEntry make_lstm(std::string prefix, LstmDims dims) {
        ArchEntry e;
        e.kind = Kind::Lstm;
        e.prefix = std::move(prefix);
        e.lstm = dims;
        return e;
    }
    static ArchEntry make_matrix(std::string name, std::size_t rows, std::size_t cols) {
        ArchEntry e;
        e.kind = Kind::Matrix;
        e.prefix = std::move(name);
        e.rows = rows;
        e.cols = cols;
        return e;
    }
};

struct ArchSpec {
    std::vector<ArchEntry> entries;
};

// Xavier-uniform weights, zero biases except the LSTM forget-gate bias (1.0).
// Draw order follows entry order, so equal seeds give bit-identical sets.
inline ParamSet init_params(const ArchSpec& arch, std::uint64_t seed) {
    Rng rng(seed);
    ParamSet ps;
    for (const ArchEntry& e : arch.entries) {
        switch (e.kind) {
            case ArchEntry::Kind::Mlp:
                add_mlp_params(ps, e.prefix, e.mlp, rng);
                break;
            case ArchEntry::Kind::Lstm:
                add_lstm_params(ps, e.prefix, e.lstm, rng);
                break;
            case ArchEntry::Kind::Matrix:
                ps.add(e.prefix, init::xavier(rng, e.rows, e.cols));
                break;
        }
    }
    return ps;
}

// ---------------------------------------------------------------------------
// forward passes

inline Value mlp_forward(Tape& tape, const BoundParams& bound, const std::string& prefix,
                         const MlpSpec& spec, Value x) {
    if (x.tensor().shape.size() != 1 ||
        x.tensor().numel() != static_cast<std::size_t>(spec.input_width()))
        throw std::invalid_argument("mlp '" + prefix + "': input width " +
                                    std::to_string(x.tensor().numel()) + ", spec expects " +
                                    std::to_string(spec.input_width()));
    Value h = x;
    for (std::size_t i = 0; i < spec.layer_count(); ++i) {
        Value w = bound.at(prefix + ".W" + std::to_string(i));
        Value b = bound.at(prefix + ".b" + std::to_string(i));
        h = add(matmul(w, h), b);
        if (i + 1 < spec.layer_count()) h = tanh(h);
    }
    return h;
}

inline Tensor mlp_forward(const ParamSet& ps, const std::string& prefix, const MlpSpec& spec,
                          const Tensor& x) {
    Tape tape;
    BoundParams bound = bind_params(tape, ps);
    return mlp_forward(tape, bound, prefix, spec, tape.constant(x)).tensor();
}

// Standard LSTM update. Gate order i, f, o, c; the returned state holds the
// new hidden and cell vectors.
inline LayerStateV lstm_step(Tape& tape, const BoundParams& bound, const std::string& prefix,
                             const LstmDims& dims, Value x, const LayerStateV& state) {
    if (x.tensor().numel() != static_cast<std::size_t>(dims.input_dim))
        throw std::invalid_argument("lstm '" + prefix + "': input width " +
                                    std::to_string(x.tensor().numel()) + ", expects " +
                                    std::to_string(dims.input_dim));
    if (state.hidden.tensor().numel() != static_cast<std::size_t>(dims.hidden_dim) ||
        state.cell.tensor().numel() != static_cast<std::size_t>(dims.hidden_dim))
        throw std::invalid_argument("lstm '" + prefix + "': state dims do not match hidden_dim " +
                                    std::to_string(dims.hidden_dim));

    auto gate = [&](const char* g) {
        Value wx = bound.at(prefix + ".Wx" + g);
        Value wh = bound.at(prefix + ".Wh" + g);
        Value b = bound.at(prefix + ".b" + g);
        return add(add(matmul(wx, x), matmul(wh, state.hidden)), b);
    };

    Value gi = sigmoid(gate("i"));
    Value gf = sigmoid(gate("f"));
    Value go = sigmoid(gate("o"));
    Value gc = tanh(gate("c"));

    Value new_cell = add(mul(gf, state.cell), mul(gi, gc));
    Value new_hidden = mul(go, tanh(new_cell));
    return LayerStateV{new_hidden, new_cell};
}

inline LayerState lstm_step(const ParamSet& ps, const std::string& prefix, const LstmDims& dims,
                            const Tensor& x, const LayerState& state) {
    Tape tape;
    BoundParams bound = bind_params(tape, ps);
    LayerStateV out = lstm_step(tape, bound, prefix, dims, tape.constant(x), lift(tape, state));
    return LayerState{out.hidden.tensor(), out.cell.tensor()};
}

}  // namespace tdlgm
