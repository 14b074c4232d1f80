#pragma once

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "tdlgm/baselines.hpp"
#include "tdlgm/data.hpp"
#include "tdlgm/generator.hpp"
#include "tdlgm/loss.hpp"
#include "tdlgm/rng.hpp"

namespace tdlgm {

enum class ModelKind { Tdlgm, Dlgm, Rnn };

inline std::string model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::Tdlgm: return "tdlgm";
        case ModelKind::Dlgm: return "dlgm";
        case ModelKind::Rnn: return "rnn";
    }
    return "?";
}

inline ModelKind model_kind_from(const std::string& s) {
    if (s == "tdlgm") return ModelKind::Tdlgm;
    if (s == "dlgm") return ModelKind::Dlgm;
    if (s == "rnn") return ModelKind::Rnn;
    throw std::invalid_argument("unknown model kind '" + s + "'");
}

struct TrainConfig {
    // optimization
    int epochs = 30;
    int segment_len = 32;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    // loss
    double alpha = 0.1;
    double kappa = 1e-4;
    double sigma_out = 0.05;
    // noise protocol
    double noise_prob = 0.0;
    double noise_var = 0.0;
    // architecture
    int layers = 3;
    int hidden = 32;
    int latent = 4;
    int window_m = 8;
    int history_w = 8;
    int srec_hidden = 32;
    int out_hidden = 32;

    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
        if (segment_len < window_m + 2)
            throw std::invalid_argument("config: segment length must be >= m+2");
        if (noise_prob < 0.0 || noise_prob > 1.0)
            throw std::invalid_argument("config: noise probability must be in [0, 1]");
        if (noise_var < 0.0) throw std::invalid_argument("config: noise variance must be >= 0");
        if (alpha < 0.0 || kappa < 0.0)
            throw std::invalid_argument("config: alpha and kappa must be >= 0");
        if (sigma_out <= 0.0) throw std::invalid_argument("config: sigma_out must be > 0");
        if (lr <= 0.0) throw std::invalid_argument("config: learning rate must be > 0");
    }

    TdlgmArch tdlgm_arch() const {
        return TdlgmArch{layers, latent, hidden, window_m, srec_hidden, out_hidden, sigma_out};
    }
    DlgmArch dlgm_arch() const {
        return DlgmArch{layers, latent, hidden, history_w, out_hidden, sigma_out};
    }
    RnnArch rnn_arch() const { return RnnArch{hidden}; }
};

// ---------------------------------------------------------------------------
// noise injection: each point independently gets an additive N(0, variance)
// draw with probability p_noise; results clamp to [0, 1].

inline SeriesFrame inject_noise(const SeriesFrame& series, double p_noise, double variance,
                                Rng& rng) {
    if (p_noise < 0.0 || p_noise > 1.0)
        throw std::invalid_argument("inject_noise: probability must be in [0, 1]");
    if (variance < 0.0) throw std::invalid_argument("inject_noise: variance must be >= 0");
    SeriesFrame out = series;
    const double sd = std::sqrt(variance);
    for (double& v : out.values) {
        if (rng.uniform() < p_noise) v = clamp01(v + rng.normal(0.0, sd));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Adam with bias correction

struct AdamState {
    std::int64_t t = 0;
    std::unordered_map<std::string, std::pair<Tensor, Tensor>> moments;  // name -> (m, v)
};

inline void adam_step(std::vector<ParamSet*> sets, const GradientMap& grads, AdamState& state,
                      const TrainConfig& cfg) {
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (ParamSet* ps : sets) {
        for (auto& [name, p] : ps->entries()) {
            if (!grads.has(name))
                throw std::invalid_argument("optimizer_step: missing gradient for '" + name + "'");
            const Tensor& g = grads.at(name);
            if (!g.same_shape(p))
                throw std::invalid_argument("optimizer_step: gradient shape mismatch for '" +
                                            name + "'");
            auto it = state.moments.try_emplace(name, Tensor(p.shape), Tensor(p.shape)).first;
            Tensor& m = it->second.first;
            Tensor& v = it->second.second;
            for (std::size_t i = 0; i < p.numel(); ++i) {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                const double m_hat = m[i] / bc1;
                const double v_hat = v[i] / bc2;
                p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps_adam);
            }
        }
    }
}

inline void optimizer_step(ParamSet& params, const GradientMap& grads, AdamState& state,
                           const TrainConfig& cfg) {
    adam_step({&params}, grads, state, cfg);
}

// ---------------------------------------------------------------------------
// per-kind segment losses (the DLGM variant drops the state terms, the
// recurrent baseline is plain next-step MSE)

inline SegmentLoss dlgm_segment_loss(Tape& tape, const BoundParams& bound,
                                     const DlgmInstance& inst, std::span<const double> segment,
                                     double kappa, Rng& rng) {
    if (segment.size() < 2) throw std::invalid_argument("dlgm loss: segment too short");
    const std::vector<double> seg(segment.begin(), segment.end());
    const int w = inst.gen.history_w;

    Value kl_sum = tape.constant_scalar(0.0);
    Value nll_sum = tape.constant_scalar(0.0);
    std::size_t steps = 0;
    for (std::size_t t = 0; t < seg.size(); ++t) {
        std::vector<double> history;
        if (w > 0) {
            if (t == 0)
                history.assign(static_cast<std::size_t>(w), kWindowPad);
            else
                history = pad_window(causal_window(seg, t, w), w);
        }
        std::vector<GaussianSpecV> specs = latent_recognize(tape, bound, inst.q, seg[t]);
        std::vector<Value> xi;
        Value kl_t = tape.constant_scalar(0.0);
        for (const GaussianSpecV& spec : specs) {
            xi.push_back(reparam_sample(tape, spec, rng));
            kl_t = add(kl_t, kl_gaussian_standard(tape, spec));
        }
        Value v_mean = dlgm_generate(tape, bound, inst.gen, xi, history);
        Value nll_t = reconstruction_nll(tape, seg[t], v_mean, inst.gen.sigma_out);
        kl_sum = add(kl_sum, kl_t);
        nll_sum = add(nll_sum, nll_t);
        ++steps;
    }

    const double inv = 1.0 / static_cast<double>(steps);
    Value kl_avg = scale(kl_sum, inv);
    Value nll_avg = scale(nll_sum, inv);
    Value prior = weight_prior(tape, bound, {&inst.gen.params, &inst.q.params});
    Value total = add(add(kl_avg, nll_avg), scale(prior, kappa));

    LossBreakdown b;
    b.kl_latent = kl_avg.scalar();
    b.state_mse = 0.0;
    b.nll_recon = nll_avg.scalar();
    b.weight_prior = prior.scalar();
    b.total = total.scalar();
    return SegmentLoss{total, b};
}

inline SegmentLoss rnn_segment_loss(Tape& tape, const BoundParams& bound,
                                    const RnnPredictor& model, std::span<const double> segment) {
    if (segment.size() < 2) throw std::invalid_argument("rnn loss: segment too short");
    LayerStateV state = lift(tape, zero_layer_state(model.hidden_dim));
    Value se_sum = tape.constant_scalar(0.0);
    std::size_t steps = 0;
    for (std::size_t t = 0; t + 1 < segment.size(); ++t) {
        RnnStepOut out =
            rnn_predict_step(tape, bound, model, tape.constant(Tensor::vec({segment[t]})), state);
        Value err = sub(out.prediction, tape.constant_scalar(segment[t + 1]));
        se_sum = add(se_sum, sum(square(err)));
        state = out.state;
        ++steps;
    }
    Value mse = scale(se_sum, 1.0 / static_cast<double>(steps));

    LossBreakdown b;
    b.nll_recon = mse.scalar();
    b.total = b.nll_recon;
    return SegmentLoss{mse, b};
}

// ---------------------------------------------------------------------------
// checkpoints: a versioned structured text document, exact round trip

struct Checkpoint {
    int version = 1;
    ModelKind kind = ModelKind::Tdlgm;
    TrainConfig config;
    ParamSet params;  // flat union of the instance's parameter sets
    LossBreakdown final_loss;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline std::string checkpoint_to_text(const Checkpoint& cp) {
    std::ostringstream out;
    out << "tdlgm-checkpoint v" << cp.version << "\n";
    out << "kind " << model_kind_name(cp.kind) << "\n";
    const TrainConfig& c = cp.config;
    out << "config epochs " << c.epochs << "\n"
        << "config segment_len " << c.segment_len << "\n"
        << "config lr " << detail::fmt_double(c.lr) << "\n"
        << "config beta1 " << detail::fmt_double(c.beta1) << "\n"
        << "config beta2 " << detail::fmt_double(c.beta2) << "\n"
        << "config eps_adam " << detail::fmt_double(c.eps_adam) << "\n"
        << "config alpha " << detail::fmt_double(c.alpha) << "\n"
        << "config kappa " << detail::fmt_double(c.kappa) << "\n"
        << "config sigma_out " << detail::fmt_double(c.sigma_out) << "\n"
        << "config noise_prob " << detail::fmt_double(c.noise_prob) << "\n"
        << "config noise_var " << detail::fmt_double(c.noise_var) << "\n"
        << "config layers " << c.layers << "\n"
        << "config hidden " << c.hidden << "\n"
        << "config latent " << c.latent << "\n"
        << "config window_m " << c.window_m << "\n"
        << "config history_w " << c.history_w << "\n"
        << "config srec_hidden " << c.srec_hidden << "\n"
        << "config out_hidden " << c.out_hidden << "\n"
        << "config seed " << c.seed << "\n";
    out << "loss " << detail::fmt_double(cp.final_loss.kl_latent) << " "
        << detail::fmt_double(cp.final_loss.state_mse) << " "
        << detail::fmt_double(cp.final_loss.nll_recon) << " "
        << detail::fmt_double(cp.final_loss.weight_prior) << " "
        << detail::fmt_double(cp.final_loss.total) << "\n";
    out << "params " << cp.params.size() << "\n";
    for (const auto& [name, t] : cp.params.entries()) {
        out << "param " << name << " " << t.shape.size();
        for (std::size_t d : t.shape) out << " " << d;
        out << "\n";
        for (std::size_t i = 0; i < t.numel(); ++i) {
            if (i) out << " ";
            out << detail::fmt_double(t[i]);
        }
        out << "\n";
    }
    out << "end\n";
    return out.str();
}

inline void atomic_write_text(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
        out << content;
        if (!out) throw std::runtime_error("short write to '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename '" + tmp + "' to '" + path + "'");
}

inline void save_checkpoint(const Checkpoint& cp, const std::string& path) {
    atomic_write_text(path, checkpoint_to_text(cp));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");

    auto corrupt = [&](const std::string& why) {
        return std::runtime_error("corrupt checkpoint '" + path + "': " + why);
    };

    std::string line;
    if (!std::getline(in, line)) throw corrupt("empty file");
    if (line.rfind("tdlgm-checkpoint v", 0) != 0) throw corrupt("bad magic line");
    const std::string ver = line.substr(18);
    if (ver != "1")
        throw std::runtime_error("unsupported checkpoint version '" + ver + "' in '" + path +
                                 "'");

    Checkpoint cp;
    cp.version = 1;
    bool saw_end = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "kind") {
            std::string k;
            ls >> k;
            cp.kind = model_kind_from(k);
        } else if (tag == "config") {
            std::string key;
            ls >> key;
            TrainConfig& c = cp.config;
            if (key == "epochs") ls >> c.epochs;
            else if (key == "segment_len") ls >> c.segment_len;
            else if (key == "lr") ls >> c.lr;
            else if (key == "beta1") ls >> c.beta1;
            else if (key == "beta2") ls >> c.beta2;
            else if (key == "eps_adam") ls >> c.eps_adam;
            else if (key == "alpha") ls >> c.alpha;
            else if (key == "kappa") ls >> c.kappa;
            else if (key == "sigma_out") ls >> c.sigma_out;
            else if (key == "noise_prob") ls >> c.noise_prob;
            else if (key == "noise_var") ls >> c.noise_var;
            else if (key == "layers") ls >> c.layers;
            else if (key == "hidden") ls >> c.hidden;
            else if (key == "latent") ls >> c.latent;
            else if (key == "window_m") ls >> c.window_m;
            else if (key == "history_w") ls >> c.history_w;
            else if (key == "srec_hidden") ls >> c.srec_hidden;
            else if (key == "out_hidden") ls >> c.out_hidden;
            else if (key == "seed") ls >> c.seed;
            else throw corrupt("unknown config key '" + key + "'");
            if (!ls) throw corrupt("bad config value for '" + key + "'");
        } else if (tag == "loss") {
            ls >> cp.final_loss.kl_latent >> cp.final_loss.state_mse >>
                cp.final_loss.nll_recon >> cp.final_loss.weight_prior >> cp.final_loss.total;
            if (!ls) throw corrupt("bad loss line");
        } else if (tag == "params") {
            std::size_t count = 0;
            ls >> count;
            if (!ls) throw corrupt("bad params count");
            for (std::size_t p = 0; p < count; ++p) {
                if (!std::getline(in, line)) throw corrupt("truncated param header");
                std::istringstream ph(line);
                std::string pt, name;
                std::size_t rank;
                ph >> pt >> name >> rank;
                if (!ph || pt != "param") throw corrupt("bad param header");
                std::vector<std::size_t> shape(rank);
                for (std::size_t d = 0; d < rank; ++d) ph >> shape[d];
                if (!ph) throw corrupt("bad param shape for '" + name + "'");
                Tensor t(shape);
                if (!std::getline(in, line)) throw corrupt("truncated data for '" + name + "'");
                std::istringstream ds(line);
                for (std::size_t i = 0; i < t.numel(); ++i) ds >> t[i];
                if (!ds) throw corrupt("bad data for '" + name + "'");
                cp.params.add(name, std::move(t));
            }
        } else if (tag == "end") {
            saw_end = true;
            break;
        } else if (!tag.empty()) {
            throw corrupt("unknown line '" + tag + "'");
        }
    }
    if (!saw_end) throw corrupt("missing end marker");
    return cp;
}

// ---------------------------------------------------------------------------
// materializing instances from checkpoints

namespace detail {

inline void fill_from(ParamSet& dst, const ParamSet& flat) {
    for (auto& [name, t] : dst.entries()) {
        const Tensor& src = flat.at(name);
        if (!src.same_shape(t))
            throw std::runtime_error("checkpoint param '" + name + "' has shape " +
                                     src.shape_str() + ", model expects " + t.shape_str());
        t = src;
    }
}

}  // namespace detail

inline TdlgmInstance tdlgm_from_checkpoint(const Checkpoint& cp) {
    if (cp.kind != ModelKind::Tdlgm)
        throw std::runtime_error("checkpoint holds a " + model_kind_name(cp.kind) + " model");
    TdlgmInstance inst = make_tdlgm(cp.config.tdlgm_arch(), cp.config.seed);
    detail::fill_from(inst.gen.params, cp.params);
    detail::fill_from(inst.q.params, cp.params);
    detail::fill_from(inst.srec.params, cp.params);
    return inst;
}

inline DlgmInstance dlgm_from_checkpoint(const Checkpoint& cp) {
    if (cp.kind != ModelKind::Dlgm)
        throw std::runtime_error("checkpoint holds a " + model_kind_name(cp.kind) + " model");
    DlgmInstance inst = make_dlgm(cp.config.dlgm_arch(), cp.config.seed);
    detail::fill_from(inst.gen.params, cp.params);
    detail::fill_from(inst.q.params, cp.params);
    return inst;
}

inline RnnPredictor rnn_from_checkpoint(const Checkpoint& cp) {
    if (cp.kind != ModelKind::Rnn)
        throw std::runtime_error("checkpoint holds a " + model_kind_name(cp.kind) + " model");
    RnnPredictor m = make_rnn(cp.config.rnn_arch(), cp.config.seed);
    detail::fill_from(m.params, cp.params);
    return m;
}

// ---------------------------------------------------------------------------
// training loop: sequential non-overlapping segments, order shuffled per epoch

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<LossBreakdown> trace;  // one averaged breakdown per epoch
};

inline TrainResult train_model(ModelKind kind, const SeriesFrame& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.values.size() < 4 * static_cast<std::size_t>(cfg.segment_len))
        throw std::invalid_argument("train_model: need at least 4 segments of data, got " +
                                    std::to_string(data.values.size()) + " points");

    // models; parameter names are disjoint across the sets
    TdlgmInstance tdlgm_inst;
    DlgmInstance dlgm_inst;
    RnnPredictor rnn_inst;
    std::vector<ParamSet*> sets;
    switch (kind) {
        case ModelKind::Tdlgm:
            tdlgm_inst = make_tdlgm(cfg.tdlgm_arch(), cfg.seed);
            sets = {&tdlgm_inst.gen.params, &tdlgm_inst.q.params, &tdlgm_inst.srec.params};
            break;
        case ModelKind::Dlgm:
            dlgm_inst = make_dlgm(cfg.dlgm_arch(), cfg.seed);
            sets = {&dlgm_inst.gen.params, &dlgm_inst.q.params};
            break;
        case ModelKind::Rnn:
            rnn_inst = make_rnn(cfg.rnn_arch(), cfg.seed);
            sets = {&rnn_inst.params};
            break;
    }

    // the noise protocol corrupts the training series once, up front
    Rng noise_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    const SeriesFrame noisy = inject_noise(data, cfg.noise_prob, cfg.noise_var, noise_rng);

    const std::size_t seg_len = static_cast<std::size_t>(cfg.segment_len);
    const std::size_t n_segments = noisy.values.size() / seg_len;
    std::vector<std::size_t> order(n_segments);
    for (std::size_t i = 0; i < n_segments; ++i) order[i] = i;

    Rng train_rng(cfg.seed + 1);
    AdamState adam;
    std::vector<LossBreakdown> trace;
    trace.reserve(cfg.epochs);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(order, train_rng);
        LossBreakdown epoch_avg;
        for (std::size_t si : order) {
            std::span<const double> segment(noisy.values.data() + si * seg_len, seg_len);
            Tape tape;
            SegmentLoss loss{};
            GradientMap grads;
            switch (kind) {
                case ModelKind::Tdlgm: {
                    BoundParams bound = bind_params(tape, {sets[0], sets[1], sets[2]});
                    loss = total_loss(tape, bound, tdlgm_inst, segment, cfg.alpha, cfg.kappa,
                                      train_rng);
                    grads = tape.backward(loss.total, {sets[0], sets[1], sets[2]});
                    break;
                }
                case ModelKind::Dlgm: {
                    BoundParams bound = bind_params(tape, {sets[0], sets[1]});
                    loss = dlgm_segment_loss(tape, bound, dlgm_inst, segment, cfg.kappa,
                                             train_rng);
                    grads = tape.backward(loss.total, {sets[0], sets[1]});
                    break;
                }
                case ModelKind::Rnn: {
                    BoundParams bound = bind_params(tape, *sets[0]);
                    loss = rnn_segment_loss(tape, bound, rnn_inst, segment);
                    grads = tape.backward(loss.total, {sets[0]});
                    break;
                }
            }
            adam_step(sets, grads, adam, cfg);
            epoch_avg.kl_latent += loss.breakdown.kl_latent;
            epoch_avg.state_mse += loss.breakdown.state_mse;
            epoch_avg.nll_recon += loss.breakdown.nll_recon;
            epoch_avg.weight_prior += loss.breakdown.weight_prior;
            epoch_avg.total += loss.breakdown.total;
        }
        const double inv = 1.0 / static_cast<double>(n_segments);
        epoch_avg.kl_latent *= inv;
        epoch_avg.state_mse *= inv;
        epoch_avg.nll_recon *= inv;
        epoch_avg.weight_prior *= inv;
        epoch_avg.total *= inv;
        trace.push_back(epoch_avg);
    }

    TrainResult result;
    result.checkpoint.kind = kind;
    result.checkpoint.config = cfg;
    switch (kind) {
        case ModelKind::Tdlgm:
            result.checkpoint.params = merge_params(
                {&tdlgm_inst.gen.params, &tdlgm_inst.q.params, &tdlgm_inst.srec.params});
            break;
        case ModelKind::Dlgm:
            result.checkpoint.params =
                merge_params({&dlgm_inst.gen.params, &dlgm_inst.q.params});
            break;
        case ModelKind::Rnn:
            result.checkpoint.params = merge_params({&rnn_inst.params});
            break;
    }
    if (!trace.empty()) result.checkpoint.final_loss = trace.back();
    result.trace = std::move(trace);
    return result;
}

}  // namespace tdlgm
