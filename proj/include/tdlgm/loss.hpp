#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "tdlgm/autodiff.hpp"
#include "tdlgm/generator.hpp"
#include "tdlgm/recognition.hpp"
#include "tdlgm/rng.hpp"

namespace tdlgm {

inline constexpr double kHalfLog2Pi = 0.9189385332046727;  // log(2*pi)/2

// Per-term view of the surrogate loss. The identity
//   total = kl_latent + alpha*state_mse + nll_recon + kappa*weight_prior
// holds exactly, with the terms combined in that order.
struct LossBreakdown {
    double kl_latent = 0.0;
    double state_mse = 0.0;
    double nll_recon = 0.0;
    double weight_prior = 0.0;
    double total = 0.0;
};

inline double recombine_total(const LossBreakdown& b, double alpha, double kappa) {
    return ((b.kl_latent + alpha * b.state_mse) + b.nll_recon) + kappa * b.weight_prior;
}

// ---------------------------------------------------------------------------
// KL(N(mu, diag C) || N(0, I)) = 1/2 (||mu||^2 + tr C - log|C| - d)

inline double kl_gaussian_standard(const GaussianSpec& spec) {
    if (!spec.mu.same_shape(spec.diag_cov))
        throw std::invalid_argument("kl_gaussian_standard: mu/diag_cov shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < spec.mu.numel(); ++i) {
        const double c = spec.diag_cov[i];
        if (c <= 0.0)
            throw std::invalid_argument("kl_gaussian_standard: non-positive covariance entry");
        acc += spec.mu[i] * spec.mu[i] + c - std::log(c) - 1.0;
    }
    return 0.5 * acc;
}

inline Value kl_gaussian_standard(Tape& tape, const GaussianSpecV& spec) {
    const double d = static_cast<double>(spec.mu.tensor().numel());
    Value sq = sum(square(spec.mu));
    Value tr = sum(spec.diag_cov);
    Value lg = sum(log(spec.diag_cov));
    Value inner = sub(sub(add(sq, tr), lg), tape.constant_scalar(d));
    return scale(inner, 0.5);
}

// ---------------------------------------------------------------------------
// state regularizer: alpha * MSE over all state coordinates (hidden + cell)

inline Value state_mse(Tape& tape, const StateStackV& a, const StateStackV& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("state_mse: stack depth mismatch");
    Value acc = tape.constant_scalar(0.0);
    std::size_t coords = 0;
    for (std::size_t l = 0; l < a.size(); ++l) {
        if (!a[l].hidden.tensor().same_shape(b[l].hidden.tensor()) ||
            !a[l].cell.tensor().same_shape(b[l].cell.tensor()))
            throw std::invalid_argument("state_mse: layer state shape mismatch");
        acc = add(acc, sum(square(sub(a[l].hidden, b[l].hidden))));
        acc = add(acc, sum(square(sub(a[l].cell, b[l].cell))));
        coords += a[l].hidden.tensor().numel() + a[l].cell.tensor().numel();
    }
    return scale(acc, 1.0 / static_cast<double>(coords));
}

inline double state_regularizer(const StateStack& approx_next, const StateStack& generated_next,
                                double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("state_regularizer: alpha must be >= 0");
    Tape tape;
    Value mse = state_mse(tape, lift(tape, approx_next), lift(tape, generated_next));
    return alpha * mse.scalar();
}

// ---------------------------------------------------------------------------
// Gaussian reconstruction term: -log N(v_true | v_mean, sigma_out^2)

inline double reconstruction_nll(double v_true, double v_mean, double sigma_out) {
    if (sigma_out <= 0.0) throw std::invalid_argument("reconstruction_nll: sigma must be > 0");
    const double z = (v_true - v_mean) / sigma_out;
    return 0.5 * z * z + std::log(sigma_out) + kHalfLog2Pi;
}

inline Value reconstruction_nll(Tape& tape, double v_true, Value v_mean, double sigma_out) {
    if (sigma_out <= 0.0) throw std::invalid_argument("reconstruction_nll: sigma must be > 0");
    Value resid = sub(tape.constant_scalar(v_true), v_mean);
    Value quad = scale(square(resid), 0.5 / (sigma_out * sigma_out));
    return add(quad, tape.constant_scalar(std::log(sigma_out) + kHalfLog2Pi));
}

// ---------------------------------------------------------------------------
// isotropic Gaussian parameter prior -> L2 penalty 1/2 ||theta||^2

inline Value weight_prior(Tape& tape, const BoundParams& bound,
                          const std::vector<const ParamSet*>& sets) {
    Value acc = tape.constant_scalar(0.0);
    for (const ParamSet* s : sets)
        for (const auto& [name, t] : s->entries()) acc = add(acc, sum(square(bound.at(name))));
    return scale(acc, 0.5);
}

// ---------------------------------------------------------------------------
// full surrogate loss over one segment
//
// For each step t: states are recognized from the strictly causal window,
// one reparameterized xi draw per layer feeds the generator, and the produced
// next state is pulled toward the recognized state at t+1. Per-step terms are
// averaged over the segment.

struct SegmentLoss {
    Value total;
    LossBreakdown breakdown;
};

inline SegmentLoss total_loss(Tape& tape, const BoundParams& bound, const TdlgmInstance& inst,
                              std::span<const double> segment, double alpha, double kappa,
                              Rng& rng) {
    const int m = inst.srec.window_m;
    if (segment.size() < static_cast<std::size_t>(m + 2))
        throw std::invalid_argument("total_loss: segment shorter than m+2");

    const std::vector<double> seg(segment.begin(), segment.end());
    Value kl_sum = tape.constant_scalar(0.0);
    Value mse_sum = tape.constant_scalar(0.0);
    Value nll_sum = tape.constant_scalar(0.0);
    std::size_t steps = 0;

    for (std::size_t t = 1; t + 1 < seg.size(); ++t) {
        StateStackV states = recognize_state(tape, bound, inst.srec, causal_window(seg, t, m));

        std::vector<GaussianSpecV> specs = latent_recognize(tape, bound, inst.q, seg[t]);
        std::vector<Value> xi;
        xi.reserve(specs.size());
        Value kl_t = tape.constant_scalar(0.0);
        for (const GaussianSpecV& spec : specs) {
            xi.push_back(reparam_sample(tape, spec, rng));
            kl_t = add(kl_t, kl_gaussian_standard(tape, spec));
        }

        GenStepOut gen = generate_step(tape, bound, inst.gen, states, xi);
        Value nll_t = reconstruction_nll(tape, seg[t], gen.v_mean, inst.gen.sigma_out);

        StateStackV approx_next =
            recognize_state(tape, bound, inst.srec, causal_window(seg, t + 1, m));
        Value mse_t = state_mse(tape, approx_next, gen.states);

        kl_sum = add(kl_sum, kl_t);
        nll_sum = add(nll_sum, nll_t);
        mse_sum = add(mse_sum, mse_t);
        ++steps;
    }

    const double inv = 1.0 / static_cast<double>(steps);
    Value kl_avg = scale(kl_sum, inv);
    Value mse_avg = scale(mse_sum, inv);
    Value nll_avg = scale(nll_sum, inv);
    Value prior = weight_prior(tape, bound, {&inst.gen.params, &inst.q.params, &inst.srec.params});

    Value total =
        add(add(add(kl_avg, scale(mse_avg, alpha)), nll_avg), scale(prior, kappa));

    LossBreakdown b;
    b.kl_latent = kl_avg.scalar();
    b.state_mse = mse_avg.scalar();
    b.nll_recon = nll_avg.scalar();
    b.weight_prior = prior.scalar();
    b.total = total.scalar();
    return SegmentLoss{total, b};
}

inline LossBreakdown total_loss(const TdlgmInstance& inst, std::span<const double> segment,
                                double alpha, double kappa, Rng& rng) {
    Tape tape;
    BoundParams bound =
        bind_params(tape, {&inst.gen.params, &inst.q.params, &inst.srec.params});
    return total_loss(tape, bound, inst, segment, alpha, kappa, rng).breakdown;
}

}  // namespace tdlgm
