#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "tdlgm/eval.hpp"
#include "tdlgm/train.hpp"

using namespace tdlgm;

namespace {

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.segment_len = 16;
    cfg.layers = 2;
    cfg.hidden = 4;
    cfg.latent = 2;
    cfg.window_m = 4;
    cfg.history_w = 4;
    cfg.srec_hidden = 4;
    cfg.out_hidden = 4;
    return cfg;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("inject_noise honors probability and variance zero") {
    SeriesFrame f = synth_series(SynthKind::Sine, 128, 3);
    Rng r1(1), r2(1);
    SeriesFrame a = inject_noise(f, 0.0, 0.5, r1);
    CHECK(a.values == f.values);
    SeriesFrame b = inject_noise(f, 1.0, 0.0, r2);
    CHECK(b.values == f.values);
}

TEST_CASE("inject_noise clamps into the unit interval") {
    SeriesFrame f;
    f.values.assign(200, 0.99);
    Rng rng(9);
    SeriesFrame noisy = inject_noise(f, 1.0, 0.1, rng);
    for (double v : noisy.values) {
        CHECK(v <= 1.0);
        CHECK(v >= 0.0);
    }
}

TEST_CASE("inject_noise changes only flagged points") {
    SeriesFrame f = synth_series(SynthKind::Sine, 256, 4);
    Rng rng(11);
    SeriesFrame noisy = inject_noise(f, 0.3, 0.01, rng);
    // replay the same draw sequence to find the flagged indices
    Rng replay(11);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < f.values.size(); ++i) {
        const bool flagged = replay.uniform() < 0.3;
        if (flagged) {
            replay.normal();
            ++changed;
        } else {
            CHECK(noisy.values[i] == f.values[i]);
        }
    }
    CHECK(changed > 0);
}

TEST_CASE("adam leaves parameters unchanged for zero gradients") {
    ParamSet ps;
    ps.add("w", Tensor({3}, {0.5, -0.5, 1.0}));
    GradientMap g;
    g.add("w", Tensor({3}));
    AdamState state;
    TrainConfig cfg;
    ParamSet before = ps;
    optimizer_step(ps, g, state, cfg);
    CHECK(ps.at("w").data == before.at("w").data);
    CHECK(state.t == 1);
}

TEST_CASE("adam drives a scalar quadratic down monotonically") {
    ParamSet ps;
    ps.add("x", Tensor::scalar(1.0));
    AdamState state;
    TrainConfig cfg;
    cfg.lr = 0.1;
    double prev = 0.5;  // 1/2 x^2 at x=1
    for (int step = 0; step < 50; ++step) {
        GradientMap g;
        g.add("x", Tensor::scalar(ps.at("x")[0]));  // d/dx of 1/2 x^2
        optimizer_step(ps, g, state, cfg);
        const double x = ps.at("x")[0];
        const double loss = 0.5 * x * x;
        CHECK(loss < prev);
        prev = loss;
    }
}

TEST_CASE("adam is deterministic and rejects missing gradients") {
    auto run = [] {
        ParamSet ps;
        ps.add("w", Tensor({2}, {1.0, -1.0}));
        GradientMap g;
        g.add("w", Tensor({2}, {0.3, 0.7}));
        AdamState state;
        TrainConfig cfg;
        for (int i = 0; i < 5; ++i) optimizer_step(ps, g, state, cfg);
        return ps.at("w").data;
    };
    CHECK(run() == run());

    ParamSet ps;
    ps.add("w", Tensor({2}));
    GradientMap empty;
    AdamState state;
    TrainConfig cfg;
    CHECK_THROWS_AS(optimizer_step(ps, empty, state, cfg), std::invalid_argument);
}

TEST_CASE("zero epochs returns the initialization") {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 0;
    SeriesFrame data = synth_series(SynthKind::Sine, 256, 5);
    TrainResult r = train_model(ModelKind::Tdlgm, data, cfg);
    TdlgmInstance fresh = make_tdlgm(cfg.tdlgm_arch(), cfg.seed);
    ParamSet expected =
        merge_params({&fresh.gen.params, &fresh.q.params, &fresh.srec.params});
    REQUIRE(r.checkpoint.params.size() == expected.size());
    for (const auto& [name, t] : expected.entries()) {
        const Tensor& got = r.checkpoint.params.at(name);
        for (std::size_t i = 0; i < t.numel(); ++i) CHECK(got[i] == t[i]);
    }
    CHECK(r.trace.empty());
}

TEST_CASE("training is bit-deterministic in the seed") {
    TrainConfig cfg = tiny_config();
    cfg.noise_prob = 0.3;
    cfg.noise_var = 0.01;
    SeriesFrame data = synth_series(SynthKind::RegimeSwitch, 256, 6);
    TrainResult a = train_model(ModelKind::Tdlgm, data, cfg);
    TrainResult b = train_model(ModelKind::Tdlgm, data, cfg);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t e = 0; e < a.trace.size(); ++e) CHECK(a.trace[e].total == b.trace[e].total);
    for (const auto& [name, t] : a.checkpoint.params.entries()) {
        const Tensor& other = b.checkpoint.params.at(name);
        for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == other[i]);
    }
}

TEST_CASE("insufficient data is rejected") {
    TrainConfig cfg = tiny_config();
    SeriesFrame small;
    small.values.assign(40, 0.5);  // < 4 segments of 16
    CHECK_THROWS_AS(train_model(ModelKind::Rnn, small, cfg), std::invalid_argument);
}

TEST_CASE("one optimizer step decreases each model's frozen-noise loss") {
    SeriesFrame data = synth_series(SynthKind::RegimeSwitch, 256, 8);
    TrainConfig cfg = tiny_config();
    cfg.lr = 1e-4;
    const std::vector<double> segment(data.values.begin(), data.values.begin() + 16);

    SUBCASE("tdlgm") {
        TdlgmInstance inst = make_tdlgm(cfg.tdlgm_arch(), 1);
        auto eval_loss = [&]() {
            Rng rng(7);
            return total_loss(inst, segment, cfg.alpha, cfg.kappa, rng).total;
        };
        const double before = eval_loss();
        Tape tape;
        BoundParams bound =
            bind_params(tape, {&inst.gen.params, &inst.q.params, &inst.srec.params});
        Rng rng(7);
        SegmentLoss loss = total_loss(tape, bound, inst, segment, cfg.alpha, cfg.kappa, rng);
        GradientMap grads =
            tape.backward(loss.total, {&inst.gen.params, &inst.q.params, &inst.srec.params});
        AdamState adam;
        adam_step({&inst.gen.params, &inst.q.params, &inst.srec.params}, grads, adam, cfg);
        CHECK(eval_loss() < before);
    }

    SUBCASE("dlgm") {
        DlgmInstance inst = make_dlgm(cfg.dlgm_arch(), 1);
        auto eval_loss = [&]() {
            Tape tape;
            BoundParams bound = bind_params(tape, {&inst.gen.params, &inst.q.params});
            Rng rng(7);
            return dlgm_segment_loss(tape, bound, inst, segment, cfg.kappa, rng).breakdown.total;
        };
        const double before = eval_loss();
        Tape tape;
        BoundParams bound = bind_params(tape, {&inst.gen.params, &inst.q.params});
        Rng rng(7);
        SegmentLoss loss = dlgm_segment_loss(tape, bound, inst, segment, cfg.kappa, rng);
        GradientMap grads = tape.backward(loss.total, {&inst.gen.params, &inst.q.params});
        AdamState adam;
        adam_step({&inst.gen.params, &inst.q.params}, grads, adam, cfg);
        CHECK(eval_loss() < before);
    }

    SUBCASE("rnn") {
        RnnPredictor model = make_rnn(cfg.rnn_arch(), 1);
        auto eval_loss = [&]() {
            Tape tape;
            BoundParams bound = bind_params(tape, model.params);
            return rnn_segment_loss(tape, bound, model, segment).breakdown.total;
        };
        const double before = eval_loss();
        Tape tape;
        BoundParams bound = bind_params(tape, model.params);
        SegmentLoss loss = rnn_segment_loss(tape, bound, model, segment);
        GradientMap grads = tape.backward(loss.total, {&model.params});
        AdamState adam;
        adam_step({&model.params}, grads, adam, cfg);
        CHECK(eval_loss() < before);
    }
}

TEST_CASE("every model kind trains below its initial loss on sine data") {
    SeriesFrame data = synth_series(SynthKind::Sine, 512, 12);
    TrainConfig cfg = tiny_config();
    cfg.epochs = 8;
    for (ModelKind kind : {ModelKind::Tdlgm, ModelKind::Dlgm, ModelKind::Rnn}) {
        TrainResult r = train_model(kind, data, cfg);
        INFO(model_kind_name(kind));
        REQUIRE(r.trace.size() == 8);
        CHECK(r.trace.back().total < r.trace.front().total);
    }
}

TEST_CASE("checkpoint round trip is bit-exact") {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 1;
    SeriesFrame data = synth_series(SynthKind::Sine, 256, 2);
    TrainResult r = train_model(ModelKind::Tdlgm, data, cfg);

    const std::string path = temp_path("tdlgm_roundtrip.ckpt");
    save_checkpoint(r.checkpoint, path);
    Checkpoint loaded = load_checkpoint(path);
    std::remove(path.c_str());

    CHECK(loaded.kind == ModelKind::Tdlgm);
    CHECK(loaded.config.seed == cfg.seed);
    CHECK(loaded.config.segment_len == cfg.segment_len);
    CHECK(loaded.final_loss.total == r.checkpoint.final_loss.total);
    REQUIRE(loaded.params.size() == r.checkpoint.params.size());
    for (const auto& [name, t] : r.checkpoint.params.entries()) {
        const Tensor& got = loaded.params.at(name);
        REQUIRE(got.shape == t.shape);
        for (std::size_t i = 0; i < t.numel(); ++i) CHECK(got[i] == t[i]);
    }
}

TEST_CASE("truncated checkpoints are rejected") {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 0;
    SeriesFrame data = synth_series(SynthKind::Sine, 256, 2);
    TrainResult r = train_model(ModelKind::Rnn, data, cfg);
    const std::string text = checkpoint_to_text(r.checkpoint);

    const std::string path = temp_path("tdlgm_truncated.ckpt");
    {
        std::ofstream out(path);
        out << text.substr(0, text.size() / 2);
    }
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("unknown checkpoint versions are rejected") {
    const std::string path = temp_path("tdlgm_badver.ckpt");
    {
        std::ofstream out(path);
        out << "tdlgm-checkpoint v2\nkind rnn\nend\n";
    }
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("checkpoints rebuild working instances") {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 1;
    SeriesFrame data = synth_series(SynthKind::RegimeSwitch, 256, 3);

    TrainResult t = train_model(ModelKind::Tdlgm, data, cfg);
    TdlgmInstance inst = tdlgm_from_checkpoint(t.checkpoint);
    auto recon = reconstruct_series(inst, data.values);
    CHECK(recon.size() == data.values.size());

    TrainResult d = train_model(ModelKind::Dlgm, data, cfg);
    CHECK_THROWS_AS(tdlgm_from_checkpoint(d.checkpoint), std::runtime_error);
    DlgmInstance dinst = dlgm_from_checkpoint(d.checkpoint);
    CHECK(dinst.gen.history_w == cfg.history_w);
}

TEST_CASE("history helps the dlgm baseline denoise regime data") {
    SeriesFrame data = synth_series(SynthKind::RegimeSwitch, 1024, 20);
    auto [train, test] = split(data, 0.8);

    TrainConfig cfg = tiny_config();
    cfg.epochs = 12;
    cfg.segment_len = 32;
    cfg.sigma_out = 0.2;  // keeps the latent bottleneck binding
    cfg.noise_prob = 0.5;
    cfg.noise_var = 0.01;
    cfg.seed = 1;

    auto noisy_mse = [&](int history_w) {
        TrainConfig c = cfg;
        c.history_w = history_w;
        TrainResult r = train_model(ModelKind::Dlgm, train, c);
        DlgmInstance inst = dlgm_from_checkpoint(r.checkpoint);
        Rng rng(99);
        SeriesFrame noisy = inject_noise(test, 1.0, 0.01, rng);
        return reconstruction_stats(test.values, reconstruct_series(inst, noisy.values)).mse;
    };

    const double with_history = noisy_mse(8);
    const double without = noisy_mse(0);
    INFO("mse w=8: " << with_history << ", w=0: " << without);
    CHECK(with_history < without);
}

}  // TEST_SUITE
