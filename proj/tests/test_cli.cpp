// End-to-end checks of the command-line tool. The binary path comes from the
// TDLGM_CLI environment variable (set by ctest); without it the suite only
// emits a warning so the library tests stay runnable standalone.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "tdlgm/manifest.hpp"

namespace fs = std::filesystem;

namespace {

const char* cli_path() { return std::getenv("TDLGM_CLI"); }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(cli_path()) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("tdlgm_cli_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("full pipeline produces the expected artifacts") {
    if (!cli_path()) {
        MESSAGE("TDLGM_CLI not set; skipping CLI integration tests");
        return;
    }
    TempDir dir;
    const std::string data = dir.file("data.csv");
    const std::string ckpt = dir.file("model.ckpt");

    REQUIRE(run_cli("synth --kind regime_switch --length 512 --seed 3 --out " + data) == 0);
    REQUIRE(fs::exists(data));
    REQUIRE(fs::exists(data + ".manifest.txt"));

    REQUIRE(run_cli("train --model tdlgm --data " + data +
                    " --epochs 2 --segment 16 --layers 2 --hidden 4 --latent 2"
                    " --window-m 4 --seed 0 --out " + ckpt) == 0);
    REQUIRE(fs::exists(ckpt));
    REQUIRE(fs::exists(ckpt + ".trace.csv"));

    // trace has one row per epoch plus the header
    {
        std::ifstream trace(ckpt + ".trace.csv");
        std::string line;
        int rows = 0;
        std::getline(trace, line);
        CHECK(line == "epoch,kl_latent,state_mse,nll_recon,weight_prior,total");
        while (std::getline(trace, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 2);
    }

    const std::string recon = dir.file("recon.csv");
    REQUIRE(run_cli("reconstruct --ckpt " + ckpt + " --data " + data +
                    " --noise-prob 0.4 --noise-var 0.01 --seed 1 --out " + recon) == 0);
    REQUIRE(fs::exists(recon));
    REQUIRE(fs::exists(recon + ".stats.csv"));
    {
        std::ifstream stats(recon + ".stats.csv");
        std::string header;
        std::getline(stats, header);
        CHECK(header == "probability,variance,model,mean,variance");
    }

    const std::string gen = dir.file("gen.csv");
    REQUIRE(run_cli("generate --ckpt " + ckpt + " --data " + data +
                    " --steps 2,5 --seed 1 --out " + gen) == 0);
    REQUIRE(fs::exists(gen + ".scores.csv"));
    {
        std::ifstream scores(gen + ".scores.csv");
        std::string line;
        std::getline(scores, line);
        CHECK(line == "steps,score");
        int rows = 0;
        while (std::getline(scores, line)) {
            if (line.empty()) continue;
            ++rows;
            const double score = std::stod(line.substr(line.find(',') + 1));
            CHECK(score >= 0.0);
            CHECK(score <= 100.0);
        }
        CHECK(rows == 2);
    }

    const std::string rob = dir.file("rob.csv");
    REQUIRE(run_cli("robustness --ckpt " + ckpt + " --data " + data +
                    " --variances 0.005,0.033 --seed 1 --out " + rob) == 0);
    {
        std::ifstream out(rob);
        std::string line;
        std::getline(out, line);
        CHECK(line == "sigma2,mean,variance");
    }
}

TEST_CASE("reconstruction with zero noise echoes the true column") {
    if (!cli_path()) return;
    TempDir dir;
    const std::string data = dir.file("data.csv");
    const std::string ckpt = dir.file("model.ckpt");
    REQUIRE(run_cli("synth --kind sine --length 400 --seed 5 --out " + data) == 0);
    REQUIRE(run_cli("train --model rnn --data " + data +
                    " --epochs 1 --segment 16 --hidden 4 --seed 0 --out " + ckpt) == 0);
    const std::string recon = dir.file("recon.csv");
    REQUIRE(run_cli("reconstruct --ckpt " + ckpt + " --data " + data +
                    " --noise-prob 0 --noise-var 0 --seed 1 --out " + recon) == 0);
    std::ifstream in(recon);
    std::string line;
    std::getline(in, line);  // header
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rows;
        std::stringstream ss(line);
        std::string t, truth, noisy, rec;
        std::getline(ss, t, ',');
        std::getline(ss, truth, ',');
        std::getline(ss, noisy, ',');
        std::getline(ss, rec, ',');
        CHECK(truth == noisy);
    }
    CHECK(rows == 80);  // test split of 400 at the default 0.8 fraction
}

TEST_CASE("usage errors exit with 2 and runtime errors with 1") {
    if (!cli_path()) return;
    TempDir dir;
    CHECK(run_cli("train --model tdlgm --out x.ckpt") == 2);  // --data missing
    CHECK(run_cli("nonsense") == 2);
    CHECK(run_cli("train --model tdlgm --data /nonexistent.csv --out " +
                  dir.file("x.ckpt")) == 1);
}

TEST_CASE("re-running from the manifest reproduces outputs byte for byte") {
    if (!cli_path()) return;
    TempDir dir;
    const std::string data = dir.file("data.csv");
    REQUIRE(run_cli("synth --kind regime_switch --length 400 --seed 9 --out " + data) == 0);

    const std::string ckpt1 = dir.file("a.ckpt");
    REQUIRE(run_cli("train --model tdlgm --data " + data +
                    " --epochs 2 --segment 16 --layers 2 --hidden 4 --latent 2 --window-m 4"
                    " --seed 7 --out " + ckpt1) == 0);

    // replay the argv recorded in the manifest, into a different output path
    std::vector<std::string> argv = tdlgm::manifest_argv(ckpt1 + ".manifest.txt");
    const std::string ckpt2 = dir.file("b.ckpt");
    for (auto& a : argv)
        if (a == ckpt1) a = ckpt2;
    std::string cmd;
    for (const auto& a : argv) cmd += a + " ";
    REQUIRE(run_cli(cmd) == 0);

    CHECK(slurp(ckpt1) == slurp(ckpt2));
    CHECK(slurp(ckpt1 + ".trace.csv") == slurp(ckpt2 + ".trace.csv"));
}

}  // TEST_SUITE
