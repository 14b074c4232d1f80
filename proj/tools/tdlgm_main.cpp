// Batch CLI for training and evaluating the time-series latent Gaussian
// models: synth, train, reconstruct, generate, robustness.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "tdlgm/data.hpp"
#include "tdlgm/eval.hpp"
#include "tdlgm/manifest.hpp"
#include "tdlgm/train.hpp"
#include "tdlgm/version.hpp"

namespace {

using namespace tdlgm;

std::string fmt(double v) { return detail::fmt_double(v); }

std::string resolve_data_path(const std::string& path) {
    namespace fs = std::filesystem;
    if (path.empty() || fs::path(path).is_absolute()) return path;
    if (const char* dir = std::getenv("TDLGM_DATA_DIR")) {
        const fs::path joined = fs::path(dir) / path;
        if (fs::exists(joined)) return joined.string();
    }
    return path;
}

struct DataOptions {
    std::string data_path;
    std::string column = "GPU_MILLI";
    double train_frac = 0.8;
};

void add_data_flags(CLI::App* cmd, DataOptions& opt) {
    cmd->add_option("--data", opt.data_path, "input CSV path")->required();
    cmd->add_option("--column", opt.column, "CSV column to read");
    cmd->add_option("--train-frac", opt.train_frac, "chronological train fraction");
}

// Scaling always comes from the train split; the test split reuses it.
struct SplitData {
    SeriesFrame train;
    SeriesFrame test;
};

SplitData load_split(const DataOptions& opt) {
    const std::string path = resolve_data_path(opt.data_path);
    CsvColumn col = load_csv(path, opt.column);
    if (opt.train_frac <= 0.0 || opt.train_frac >= 1.0)
        throw std::invalid_argument("--train-frac must be in (0, 1)");
    const std::size_t n = col.values.size();
    const auto n_train = static_cast<std::size_t>(std::floor(opt.train_frac * n));
    if (n_train < 10 || n - n_train < 10)
        throw std::invalid_argument("split leaves fewer than 10 points on one side");
    std::vector<double> train_raw(col.values.begin(), col.values.begin() + n_train);
    std::vector<double> test_raw(col.values.begin() + n_train, col.values.end());
    SplitData out;
    out.train = normalize(train_raw, path + "[train]");
    out.test = normalize_with(test_raw, out.train.raw_min, out.train.raw_max, path + "[test]");
    return out;
}

void write_file(const std::string& path, const std::string& content) {
    atomic_write_text(path, content);
}

void finish_manifest(RunManifest& m, const std::chrono::steady_clock::time_point& t0,
                     const std::string& out_base) {
    m.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(m, out_base + ".manifest.txt");
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
    std::string kind = "regime_switch";
    std::size_t length = 2048;
    std::uint64_t seed = 0;
    double noise_sd = 0.02;
    std::string column = "GPU_MILLI";
    std::string out;
};

int run_synth(const SynthOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    SeriesFrame frame = synth_series(synth_kind_from(opt.kind), opt.length, opt.seed,
                                     opt.noise_sd);
    std::ostringstream csv;
    csv << opt.column << "\n";
    for (double v : frame.values) csv << fmt(v) << "\n";
    write_file(opt.out, csv.str());

    RunManifest m;
    m.command = "synth";
    m.seed = opt.seed;
    m.argv = {"synth",          "--kind", opt.kind,          "--length",
              std::to_string(opt.length), "--seed",          std::to_string(opt.seed),
              "--noise-sd",     fmt(opt.noise_sd),           "--column",
              opt.column,       "--out",  opt.out};
    m.config = {{"kind", opt.kind},
                {"length", std::to_string(opt.length)},
                {"noise_sd", fmt(opt.noise_sd)},
                {"column", opt.column}};
    m.outputs = {opt.out};
    finish_manifest(m, t0, opt.out);
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
    std::string model = "tdlgm";
    DataOptions data;
    TrainConfig cfg;
    std::string out;
};

std::vector<std::string> train_argv(const TrainOptions& opt) {
    const TrainConfig& c = opt.cfg;
    return {"train",
            "--model", opt.model,
            "--data", opt.data.data_path,
            "--column", opt.data.column,
            "--train-frac", fmt(opt.data.train_frac),
            "--epochs", std::to_string(c.epochs),
            "--segment", std::to_string(c.segment_len),
            "--lr", fmt(c.lr),
            "--alpha", fmt(c.alpha),
            "--kappa", fmt(c.kappa),
            "--sigma-out", fmt(c.sigma_out),
            "--noise-prob", fmt(c.noise_prob),
            "--noise-var", fmt(c.noise_var),
            "--layers", std::to_string(c.layers),
            "--hidden", std::to_string(c.hidden),
            "--latent", std::to_string(c.latent),
            "--window-m", std::to_string(c.window_m),
            "--history-w", std::to_string(c.history_w),
            "--seed", std::to_string(c.seed),
            "--out", opt.out};
}

int run_train(const TrainOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    SplitData data = load_split(opt.data);
    TrainResult result = train_model(model_kind_from(opt.model), data.train, opt.cfg);
    save_checkpoint(result.checkpoint, opt.out);

    std::ostringstream trace;
    trace << "epoch,kl_latent,state_mse,nll_recon,weight_prior,total\n";
    for (std::size_t e = 0; e < result.trace.size(); ++e) {
        const LossBreakdown& b = result.trace[e];
        trace << e << "," << fmt(b.kl_latent) << "," << fmt(b.state_mse) << ","
              << fmt(b.nll_recon) << "," << fmt(b.weight_prior) << "," << fmt(b.total) << "\n";
    }
    write_file(opt.out + ".trace.csv", trace.str());

    RunManifest m;
    m.command = "train";
    m.seed = opt.cfg.seed;
    m.argv = train_argv(opt);
    m.config = {{"model", opt.model},
                {"train_points", std::to_string(data.train.values.size())},
                {"test_points", std::to_string(data.test.values.size())},
                {"scaler_min", fmt(data.train.raw_min)},
                {"scaler_max", fmt(data.train.raw_max)}};
    m.inputs = {resolve_data_path(opt.data.data_path)};
    m.outputs = {opt.out, opt.out + ".trace.csv"};
    finish_manifest(m, t0, opt.out);
    return 0;
}

// ---------------------------------------------------------------------------
// reconstruct

struct ReconOptions {
    std::string ckpt;
    DataOptions data;
    double noise_prob = 0.0;
    double noise_var = 0.0;
    std::uint64_t seed = 1;
    std::string out;
};

std::vector<double> reconstruct_for(const Checkpoint& cp, const std::vector<double>& observed) {
    switch (cp.kind) {
        case ModelKind::Tdlgm: return reconstruct_series(tdlgm_from_checkpoint(cp), observed);
        case ModelKind::Dlgm: return reconstruct_series(dlgm_from_checkpoint(cp), observed);
        case ModelKind::Rnn: return reconstruct_series(rnn_from_checkpoint(cp), observed);
    }
    throw std::runtime_error("bad model kind");
}

int run_reconstruct(const ReconOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    Checkpoint cp = load_checkpoint(opt.ckpt);
    SplitData data = load_split(opt.data);

    Rng rng(opt.seed);
    const SeriesFrame noisy = inject_noise(data.test, opt.noise_prob, opt.noise_var, rng);
    const std::vector<double> recon = reconstruct_for(cp, noisy.values);
    const ReconStats stats = reconstruction_stats(data.test.values, recon);

    std::ostringstream csv;
    csv << "t,true,noisy_input,recon\n";
    for (std::size_t t = 0; t < recon.size(); ++t)
        csv << t << "," << fmt(data.test.values[t]) << "," << fmt(noisy.values[t]) << ","
            << fmt(recon[t]) << "\n";
    write_file(opt.out, csv.str());

    std::ostringstream st;
    st << "probability,variance,model,mean,variance\n";
    st << fmt(opt.noise_prob) << "," << fmt(opt.noise_var) << "," << model_kind_name(cp.kind)
       << "," << fmt(stats.mean_err) << "," << fmt(stats.var_err) << "\n";
    write_file(opt.out + ".stats.csv", st.str());

    RunManifest m;
    m.command = "reconstruct";
    m.seed = opt.seed;
    m.argv = {"reconstruct", "--ckpt", opt.ckpt, "--data", opt.data.data_path,
              "--column", opt.data.column, "--train-frac", fmt(opt.data.train_frac),
              "--noise-prob", fmt(opt.noise_prob), "--noise-var", fmt(opt.noise_var),
              "--seed", std::to_string(opt.seed), "--out", opt.out};
    m.config = {{"model", model_kind_name(cp.kind)},
                {"mse", fmt(stats.mse)},
                {"mean", fmt(stats.mean_err)},
                {"variance", fmt(stats.var_err)}};
    m.inputs = {opt.ckpt, resolve_data_path(opt.data.data_path)};
    m.outputs = {opt.out, opt.out + ".stats.csv"};
    finish_manifest(m, t0, opt.out);
    return 0;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
    std::string ckpt;
    DataOptions data;
    std::vector<int> steps = {2, 5, 8, 10, 15, 20, 25, 30};
    std::string mode = "sampled";
    int buckets = 20;
    int score_step = 1;
    std::uint64_t seed = 1;
    std::string out;
};

// Future continuations seeded from anchors spread over the test split.
std::vector<std::vector<double>> collect_rollouts(const Checkpoint& cp,
                                                  const std::vector<double>& test, int horizon,
                                                  int anchor_window, GenMode mode, Rng& rng) {
    std::vector<std::vector<double>> rollouts;
    const auto m = static_cast<std::size_t>(anchor_window);
    if (test.size() < m + static_cast<std::size_t>(horizon))
        throw std::invalid_argument("generate: steps " + std::to_string(horizon) +
                                    " exceed the test span");

    if (cp.kind == ModelKind::Tdlgm) {
        TdlgmInstance inst = tdlgm_from_checkpoint(cp);
        for (std::size_t p = m; p + horizon <= test.size(); p += horizon) {
            std::vector<double> window(test.begin() + (p - m), test.begin() + p);
            StateStack states = recognize_state(inst.srec, window);
            rollouts.push_back(rollout(inst.gen, states, horizon, rng, mode));
        }
    } else if (cp.kind == ModelKind::Rnn) {
        RnnPredictor model = rnn_from_checkpoint(cp);
        for (std::size_t p = m; p + horizon <= test.size(); p += horizon) {
            LayerState state = zero_layer_state(model.hidden_dim);
            double v = test[p - m];
            for (std::size_t i = p - m; i < p; ++i)
                std::tie(v, state) = rnn_predict_step(model, test[i], state);
            std::vector<double> roll;
            roll.reserve(horizon);
            double cur = clamp01(v);
            roll.push_back(cur);
            for (int i = 1; i < horizon; ++i) {
                std::tie(cur, state) = rnn_predict_step(model, cur, state);
                cur = clamp01(cur);
                roll.push_back(cur);
            }
            rollouts.push_back(std::move(roll));
        }
    } else {
        DlgmInstance inst = dlgm_from_checkpoint(cp);
        const int w = inst.gen.history_w;
        for (std::size_t p = m; p + horizon <= test.size(); p += horizon) {
            std::vector<double> history(test.begin() + (p - m), test.begin() + p);
            std::vector<double> roll;
            roll.reserve(horizon);
            for (int i = 0; i < horizon; ++i) {
                std::vector<double> win;
                if (w > 0) {
                    win.assign(history.end() - std::min<std::size_t>(w, history.size()),
                               history.end());
                    win = pad_window(win, w);
                }
                std::vector<Tensor> xi;
                if (mode == GenMode::Sampled) {
                    xi = sample_latent_dlgm(inst.gen, rng);
                } else {
                    for (int l = 0; l < inst.gen.layers; ++l)
                        xi.push_back(Tensor({static_cast<std::size_t>(inst.gen.latent_dim)}));
                }
                double v = clamp01(dlgm_generate(inst.gen, xi, win));
                if (mode == GenMode::Sampled) v = clamp01(v + inst.gen.sigma_out * rng.normal());
                roll.push_back(v);
                history.push_back(v);
            }
            rollouts.push_back(std::move(roll));
        }
    }
    return rollouts;
}

int run_generate(const GenerateOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    Checkpoint cp = load_checkpoint(opt.ckpt);
    SplitData data = load_split(opt.data);
    const GenMode mode = opt.mode == "mean" ? GenMode::Mean : GenMode::Sampled;
    if (opt.mode != "mean" && opt.mode != "sampled")
        throw std::invalid_argument("--mode must be 'sampled' or 'mean'");

    std::ostringstream roll_csv, score_csv;
    roll_csv << "steps,anchor,offset,value\n";
    score_csv << "steps,score\n";

    Rng rng(opt.seed);
    for (int horizon : opt.steps) {
        if (horizon < 1) throw std::invalid_argument("--steps entries must be >= 1");
        std::vector<std::vector<double>> rollouts =
            collect_rollouts(cp, data.test.values, horizon, cp.config.window_m, mode, rng);
        const double score =
            future_score(data.test.values, rollouts, opt.score_step, opt.buckets);
        score_csv << horizon << "," << fmt(score) << "\n";
        for (std::size_t a = 0; a < rollouts.size(); ++a)
            for (std::size_t i = 0; i < rollouts[a].size(); ++i)
                roll_csv << horizon << "," << a << "," << i << "," << fmt(rollouts[a][i])
                         << "\n";
    }
    write_file(opt.out, roll_csv.str());
    write_file(opt.out + ".scores.csv", score_csv.str());

    std::string steps_joined;
    for (std::size_t i = 0; i < opt.steps.size(); ++i) {
        if (i) steps_joined += ",";
        steps_joined += std::to_string(opt.steps[i]);
    }

    RunManifest m;
    m.command = "generate";
    m.seed = opt.seed;
    m.argv = {"generate", "--ckpt", opt.ckpt, "--data", opt.data.data_path,
              "--column", opt.data.column, "--train-frac", fmt(opt.data.train_frac),
              "--steps", steps_joined, "--mode", opt.mode,
              "--buckets", std::to_string(opt.buckets),
              "--score-step", std::to_string(opt.score_step),
              "--seed", std::to_string(opt.seed), "--out", opt.out};
    m.config = {{"model", model_kind_name(cp.kind)},
                {"steps", steps_joined},
                {"buckets", std::to_string(opt.buckets)},
                {"score_step", std::to_string(opt.score_step)},
                {"mode", opt.mode}};
    m.inputs = {opt.ckpt, resolve_data_path(opt.data.data_path)};
    m.outputs = {opt.out, opt.out + ".scores.csv"};
    finish_manifest(m, t0, opt.out);
    return 0;
}

// ---------------------------------------------------------------------------
// robustness

struct RobustnessOptions {
    std::string ckpt;
    DataOptions data;
    std::vector<double> variances = {0.0053, 0.0059, 0.0067, 0.0077, 0.0091,
                                     0.0111, 0.0143, 0.0200, 0.0333, 0.100};
    bool include_clean = false;
    std::uint64_t seed = 1;
    std::string out;
};

int run_robustness(const RobustnessOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    Checkpoint cp = load_checkpoint(opt.ckpt);
    if (cp.kind != ModelKind::Tdlgm)
        throw std::invalid_argument("robustness expects a tdlgm checkpoint");
    if (cp.config.noise_prob != 0.0)
        throw std::invalid_argument(
            "robustness expects a checkpoint trained with --noise-prob 0");
    SplitData data = load_split(opt.data);
    TdlgmInstance inst = tdlgm_from_checkpoint(cp);

    std::vector<double> variances = opt.variances;
    if (opt.include_clean) variances.insert(variances.begin(), 0.0);

    Rng rng(opt.seed);
    const auto rows = robustness_sweep(inst, data.test, variances, rng);

    std::ostringstream csv;
    csv << "sigma2,mean,variance\n";
    for (const auto& [var, stats] : rows)
        csv << fmt(var) << "," << fmt(stats.mean_err) << "," << fmt(stats.var_err) << "\n";
    write_file(opt.out, csv.str());

    std::string var_joined;
    for (std::size_t i = 0; i < opt.variances.size(); ++i) {
        if (i) var_joined += ",";
        var_joined += fmt(opt.variances[i]);
    }

    RunManifest m;
    m.command = "robustness";
    m.seed = opt.seed;
    m.argv = {"robustness", "--ckpt", opt.ckpt, "--data", opt.data.data_path,
              "--column", opt.data.column, "--train-frac", fmt(opt.data.train_frac),
              "--variances", var_joined, "--seed", std::to_string(opt.seed), "--out", opt.out};
    if (opt.include_clean) m.argv.insert(m.argv.end() - 2, "--include-clean");
    m.config = {{"variances", var_joined},
                {"include_clean", opt.include_clean ? "true" : "false"}};
    m.inputs = {opt.ckpt, resolve_data_path(opt.data.data_path)};
    m.outputs = {opt.out};
    finish_manifest(m, t0, opt.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-series deep latent Gaussian model toolkit"};
    app.set_version_flag("--version", TDLGM_VERSION);
    app.require_subcommand(1);

    SynthOptions synth_opt;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic series CSV");
    synth->add_option("--kind", synth_opt.kind, "sine or regime_switch");
    synth->add_option("--length", synth_opt.length, "series length");
    synth->add_option("--seed", synth_opt.seed, "rng seed");
    synth->add_option("--noise-sd", synth_opt.noise_sd, "additive noise std dev");
    synth->add_option("--column", synth_opt.column, "CSV column name");
    synth->add_option("--out", synth_opt.out, "output CSV path")->required();

    TrainOptions train_opt;
    CLI::App* train = app.add_subcommand("train", "train a model and write a checkpoint");
    train->add_option("--model", train_opt.model, "tdlgm, dlgm or rnn")
        ->check(CLI::IsMember({"tdlgm", "dlgm", "rnn"}));
    add_data_flags(train, train_opt.data);
    train->add_option("--epochs", train_opt.cfg.epochs, "training epochs");
    train->add_option("--segment", train_opt.cfg.segment_len, "segment length");
    train->add_option("--lr", train_opt.cfg.lr, "Adam learning rate");
    train->add_option("--alpha", train_opt.cfg.alpha, "state regularizer weight");
    train->add_option("--kappa", train_opt.cfg.kappa, "parameter prior weight");
    train->add_option("--sigma-out", train_opt.cfg.sigma_out, "output noise scale");
    train->add_option("--noise-prob", train_opt.cfg.noise_prob, "training noise probability");
    train->add_option("--noise-var", train_opt.cfg.noise_var, "training noise variance");
    train->add_option("--layers", train_opt.cfg.layers, "latent layer count");
    train->add_option("--hidden", train_opt.cfg.hidden, "hidden width");
    train->add_option("--latent", train_opt.cfg.latent, "latent dim per layer");
    train->add_option("--window-m", train_opt.cfg.window_m, "state recognition window");
    train->add_option("--history-w", train_opt.cfg.history_w, "dlgm history window");
    train->add_option("--seed", train_opt.cfg.seed, "rng seed");
    train->add_option("--out", train_opt.out, "checkpoint path")->required();

    ReconOptions recon_opt;
    CLI::App* recon = app.add_subcommand("reconstruct", "reconstruct noisy test data");
    recon->add_option("--ckpt", recon_opt.ckpt, "checkpoint path")->required();
    add_data_flags(recon, recon_opt.data);
    recon->add_option("--noise-prob", recon_opt.noise_prob, "corruption probability");
    recon->add_option("--noise-var", recon_opt.noise_var, "corruption variance");
    recon->add_option("--seed", recon_opt.seed, "rng seed");
    recon->add_option("--out", recon_opt.out, "output CSV path")->required();

    GenerateOptions gen_opt;
    CLI::App* gen = app.add_subcommand("generate", "rollout futures and score them");
    gen->add_option("--ckpt", gen_opt.ckpt, "checkpoint path")->required();
    add_data_flags(gen, gen_opt.data);
    gen->add_option("--steps", gen_opt.steps, "horizon list")->delimiter(',');
    gen->add_option("--mode", gen_opt.mode, "sampled or mean")
        ->check(CLI::IsMember({"sampled", "mean"}));
    gen->add_option("--buckets", gen_opt.buckets, "score bucket count");
    gen->add_option("--score-step", gen_opt.score_step, "transition lag for scoring");
    gen->add_option("--seed", gen_opt.seed, "rng seed");
    gen->add_option("--out", gen_opt.out, "output CSV path")->required();

    RobustnessOptions rob_opt;
    CLI::App* rob = app.add_subcommand("robustness", "noise sweep on a clean-trained model");
    rob->add_option("--ckpt", rob_opt.ckpt, "checkpoint path")->required();
    add_data_flags(rob, rob_opt.data);
    rob->add_option("--variances", rob_opt.variances, "noise variance list")->delimiter(',');
    rob->add_flag("--include-clean", rob_opt.include_clean, "prepend a zero-noise row");
    rob->add_option("--seed", rob_opt.seed, "rng seed");
    rob->add_option("--out", rob_opt.out, "output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) return run_synth(synth_opt);
        if (*train) return run_train(train_opt);
        if (*recon) return run_reconstruct(recon_opt);
        if (*gen) return run_generate(gen_opt);
        if (*rob) return run_robustness(rob_opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
