#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "tdlgm/baselines.hpp"
#include "tdlgm/data.hpp"
#include "tdlgm/generator.hpp"
#include "tdlgm/recognition.hpp"
#include "tdlgm/train.hpp"

namespace tdlgm {

// ---------------------------------------------------------------------------
// bucket-overlap scoring of generated futures
//
// Values in [0,1] are grouped into B uniform buckets; transition counts at
// lag s form a matrix per series. The generated matrix is scaled by |T|/|G|
// and the overlap sum(min(GM, TM)/TM) over nonzero TM cells, normalized by
// the nonzero-cell count, gives a score in [0, 100]. The normalization makes
// a series score exactly 100 against itself.

inline std::vector<int> bucketize(const std::vector<double>& series, int buckets) {
    if (buckets < 2) throw std::invalid_argument("bucketize: need at least 2 buckets");
    std::vector<int> out;
    out.reserve(series.size());
    for (double v : series) {
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("bucketize: value " + std::to_string(v) +
                                        " outside [0, 1]");
        const int idx = std::min(static_cast<int>(std::floor(v * buckets)), buckets - 1);
        out.push_back(idx);
    }
    return out;
}

struct TransitionMatrix {
    int buckets = 0;
    int step = 1;
    std::vector<double> counts;  // row-major B x B

    double& at(int i, int j) { return counts[static_cast<std::size_t>(i) * buckets + j]; }
    double at(int i, int j) const { return counts[static_cast<std::size_t>(i) * buckets + j]; }

    double total() const {
        double acc = 0.0;
        for (double c : counts) acc += c;
        return acc;
    }
};

inline TransitionMatrix transition_matrix(const std::vector<int>& symbols, int s, int buckets) {
    if (s < 1) throw std::invalid_argument("transition_matrix: step must be >= 1");
    if (symbols.size() <= static_cast<std::size_t>(s))
        throw std::invalid_argument("transition_matrix: sequence of length " +
                                    std::to_string(symbols.size()) +
                                    " too short for step " + std::to_string(s));
    TransitionMatrix tm;
    tm.buckets = buckets;
    tm.step = s;
    tm.counts.assign(static_cast<std::size_t>(buckets) * buckets, 0.0);
    for (std::size_t i = 0; i + static_cast<std::size_t>(s) < symbols.size(); ++i)
        tm.at(symbols[i], symbols[i + s]) += 1.0;
    return tm;
}

namespace detail {

inline double overlap_score(const TransitionMatrix& tm, const TransitionMatrix& gm,
                            double scale_gm) {
    double raw = 0.0;
    std::size_t nonzero = 0;
    for (int i = 0; i < tm.buckets; ++i)
        for (int j = 0; j < tm.buckets; ++j) {
            const double t = tm.at(i, j);
            if (t == 0.0) continue;
            ++nonzero;
            raw += std::min(gm.at(i, j) * scale_gm, t) / t;
        }
    if (nonzero == 0) return 0.0;
    return 100.0 * raw / static_cast<double>(nonzero);
}

}  // namespace detail

inline double future_score(const std::vector<double>& true_series,
                           const std::vector<double>& gen_series, int s, int buckets) {
    const TransitionMatrix tm = transition_matrix(bucketize(true_series, buckets), s, buckets);
    const TransitionMatrix gm = transition_matrix(bucketize(gen_series, buckets), s, buckets);
    const double scale_gm =
        static_cast<double>(true_series.size()) / static_cast<double>(gen_series.size());
    return detail::overlap_score(tm, gm, scale_gm);
}

// Multi-rollout variant: transitions are counted within each generated
// sequence, never across rollout boundaries. |G| is the total generated
// point count.
inline double future_score(const std::vector<double>& true_series,
                           const std::vector<std::vector<double>>& rollouts, int s, int buckets) {
    if (rollouts.empty()) throw std::invalid_argument("future_score: no generated sequences");
    const TransitionMatrix tm = transition_matrix(bucketize(true_series, buckets), s, buckets);
    TransitionMatrix gm;
    gm.buckets = buckets;
    gm.step = s;
    gm.counts.assign(static_cast<std::size_t>(buckets) * buckets, 0.0);
    std::size_t total_points = 0;
    for (const auto& roll : rollouts) {
        total_points += roll.size();
        if (roll.size() <= static_cast<std::size_t>(s)) continue;
        const std::vector<int> sym = bucketize(roll, buckets);
        for (std::size_t i = 0; i + static_cast<std::size_t>(s) < sym.size(); ++i)
            gm.at(sym[i], sym[i + s]) += 1.0;
    }
    if (total_points == 0) throw std::invalid_argument("future_score: empty generated data");
    const double scale_gm =
        static_cast<double>(true_series.size()) / static_cast<double>(total_points);
    return detail::overlap_score(tm, gm, scale_gm);
}

// ---------------------------------------------------------------------------
// reconstruction statistics (signed error mean/variance, MSE)

struct ReconStats {
    double mean_err = 0.0;
    double var_err = 0.0;  // population variance
    double mse = 0.0;
};

inline ReconStats reconstruction_stats(const std::vector<double>& true_series,
                                       const std::vector<double>& recon_series) {
    if (true_series.size() != recon_series.size())
        throw std::invalid_argument("reconstruction_stats: length mismatch " +
                                    std::to_string(true_series.size()) + " vs " +
                                    std::to_string(recon_series.size()));
    if (true_series.empty()) throw std::invalid_argument("reconstruction_stats: empty series");
    const double n = static_cast<double>(true_series.size());
    ReconStats st;
    for (std::size_t i = 0; i < true_series.size(); ++i) {
        const double e = recon_series[i] - true_series[i];
        st.mean_err += e;
        st.mse += e * e;
    }
    st.mean_err /= n;
    st.mse /= n;
    for (std::size_t i = 0; i < true_series.size(); ++i) {
        const double d = (recon_series[i] - true_series[i]) - st.mean_err;
        st.var_err += d * d;
    }
    st.var_err /= n;
    return st;
}

// ---------------------------------------------------------------------------
// Welch's two-sided t-test, used to filter trained instances whose noisy
// reconstructions are indistinguishable from clean ones.

struct TTestResult {
    double p_value = 1.0;
    bool excluded = false;
};

inline TTestResult welch_t_filter(const std::vector<double>& group_a,
                                  const std::vector<double>& group_b,
                                  double p_threshold = 0.7) {
    if (group_a.size() < 2 || group_b.size() < 2)
        throw std::invalid_argument("welch_t_filter: each group needs at least 2 values");

    auto mean_var = [](const std::vector<double>& g) {
        const double n = static_cast<double>(g.size());
        double m = 0.0;
        for (double v : g) m += v;
        m /= n;
        double s2 = 0.0;
        for (double v : g) s2 += (v - m) * (v - m);
        s2 /= (n - 1.0);  // sample variance
        return std::pair<double, double>{m, s2};
    };

    const auto [ma, va] = mean_var(group_a);
    const auto [mb, vb] = mean_var(group_b);
    const double na = static_cast<double>(group_a.size());
    const double nb = static_cast<double>(group_b.size());
    const double sa = va / na;
    const double sb = vb / nb;

    TTestResult r;
    if (sa + sb == 0.0) {
        // both groups degenerate: identical means are indistinguishable
        r.p_value = (ma == mb) ? 1.0 : 0.0;
        r.excluded = r.p_value > p_threshold;
        return r;
    }

    const double t = (ma - mb) / std::sqrt(sa + sb);
    const double df =
        (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    boost::math::students_t_distribution<double> dist(df);
    r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
    r.excluded = r.p_value > p_threshold;
    return r;
}

// ---------------------------------------------------------------------------
// reconstruction pipelines (deterministic, one pass)
//
// TDLGM: states come from the corrupted causal window, the latent path takes
// the posterior mean at the current value, and the generator mean is emitted.
// Position 0 has no causal window and passes the observation through.

inline std::vector<double> reconstruct_series(const TdlgmInstance& inst,
                                              const std::vector<double>& observed) {
    if (observed.size() < 2)
        throw std::invalid_argument("reconstruct_series: need at least 2 points");
    std::vector<double> recon;
    recon.reserve(observed.size());
    recon.push_back(clamp01(observed[0]));

    const int m = inst.srec.window_m;
    constexpr std::size_t kChunk = 256;  // bounds tape growth on long series
    for (std::size_t t = 1; t < observed.size();) {
        Tape tape;
        BoundParams bound =
            bind_params(tape, {&inst.gen.params, &inst.q.params, &inst.srec.params});
        const std::size_t chunk_end = std::min(observed.size(), t + kChunk);
        for (; t < chunk_end; ++t) {
            StateStackV states =
                recognize_state(tape, bound, inst.srec, causal_window(observed, t, m));
            std::vector<GaussianSpecV> specs =
                latent_recognize(tape, bound, inst.q, observed[t]);
            std::vector<Value> xi;
            xi.reserve(specs.size());
            for (const GaussianSpecV& s : specs) xi.push_back(s.mu);
            GenStepOut out = generate_step(tape, bound, inst.gen, states, xi);
            recon.push_back(clamp01(out.v_mean.scalar()));
        }
    }
    return recon;
}

inline std::vector<double> reconstruct_series(const DlgmInstance& inst,
                                              const std::vector<double>& observed) {
    const int w = inst.gen.history_w;
    std::vector<double> recon;
    recon.reserve(observed.size());
    for (std::size_t t = 0; t < observed.size(); ++t) {
        std::vector<double> window;
        if (w > 0) {
            if (t == 0)
                window.assign(static_cast<std::size_t>(w), kWindowPad);
            else
                window = pad_window(causal_window(observed, t, w), w);
        }
        recon.push_back(dlgm_reconstruct(inst, window, observed[t]));
    }
    return recon;
}

// One-step-ahead prediction with the state threaded along the observed series.
inline std::vector<double> reconstruct_series(const RnnPredictor& model,
                                              const std::vector<double>& observed) {
    if (observed.size() < 2)
        throw std::invalid_argument("reconstruct_series: need at least 2 points");
    std::vector<double> recon;
    recon.reserve(observed.size());
    recon.push_back(clamp01(observed[0]));

    LayerState carry = zero_layer_state(model.hidden_dim);
    constexpr std::size_t kChunk = 256;
    for (std::size_t t = 0; t + 1 < observed.size();) {
        Tape tape;
        BoundParams bound = bind_params(tape, model.params);
        LayerStateV state = lift(tape, carry);
        const std::size_t chunk_end = std::min(observed.size() - 1, t + kChunk);
        for (; t < chunk_end; ++t) {
            RnnStepOut out = rnn_predict_step(tape, bound, model,
                                              tape.constant(Tensor::vec({observed[t]})), state);
            recon.push_back(clamp01(out.prediction.scalar()));
            state = out.state;
        }
        carry = LayerState{state.hidden.tensor(), state.cell.tensor()};
    }
    return recon;
}

// ---------------------------------------------------------------------------
// robustness sweep: full-corruption noise at each variance, then reconstruct

inline std::vector<std::pair<double, ReconStats>> robustness_sweep(
    const TdlgmInstance& inst, const SeriesFrame& test, const std::vector<double>& variances,
    Rng& rng) {
    std::vector<std::pair<double, ReconStats>> rows;
    rows.reserve(variances.size());
    for (double var : variances) {
        if (var < 0.0) throw std::invalid_argument("robustness_sweep: variance must be >= 0");
        const SeriesFrame corrupted = inject_noise(test, 1.0, var, rng);
        const std::vector<double> recon = reconstruct_series(inst, corrupted.values);
        rows.emplace_back(var, reconstruction_stats(test.values, recon));
    }
    return rows;
}

}  // namespace tdlgm
