#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "tdlgm/data.hpp"

using namespace tdlgm;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content) {
        path = (std::filesystem::temp_directory_path() / name).string();
        std::ofstream out(path);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_SUITE("data") {

TEST_CASE("load_csv reads the named column in order") {
    TempFile f("tdlgm_basic.csv", "JOB,GPU_MILLI,CPU\njob1,100,8\njob2,250,4\njob3,0,2\n");
    CsvColumn col = load_csv(f.path, "GPU_MILLI");
    CHECK(col.values == std::vector<double>{100.0, 250.0, 0.0});
    CHECK(col.skipped == 0);
}

TEST_CASE("missing column error names the available ones") {
    TempFile f("tdlgm_cols.csv", "A,B\n1,2\n");
    try {
        load_csv(f.path, "GPU_MILLI");
        FAIL("expected a throw");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("GPU_MILLI") != std::string::npos);
        CHECK(msg.find("A") != std::string::npos);
        CHECK(msg.find("B") != std::string::npos);
    }
}

TEST_CASE("malformed cells are skipped and counted") {
    std::string body = "V\n";
    for (int i = 0; i < 5; ++i) body += std::to_string(i) + "\n";
    body += "oops\n";
    for (int i = 5; i < 9; ++i) body += std::to_string(i) + "\n";
    TempFile f("tdlgm_bad.csv", body);
    CsvColumn col = load_csv(f.path, "V");
    CHECK(col.values.size() == 9);
    CHECK(col.skipped == 1);
}

TEST_CASE("missing file and empty column raise errors") {
    CHECK_THROWS_AS(load_csv("/nonexistent/tdlgm.csv", "X"), std::runtime_error);
    TempFile f("tdlgm_empty.csv", "X\nnope\n-\n");
    CHECK_THROWS_AS(load_csv(f.path, "X"), std::runtime_error);
}

TEST_CASE("normalize maps min to 0 and max to 1") {
    SeriesFrame f = normalize({0.0, 500.0, 1000.0});
    CHECK(f.values == std::vector<double>{0.0, 0.5, 1.0});
    CHECK_FALSE(f.degenerate);
    CHECK(f.raw_min == 0.0);
    CHECK(f.raw_max == 1000.0);
}

TEST_CASE("constant series normalizes to 0.5 with a degenerate flag") {
    SeriesFrame f = normalize({7.0, 7.0, 7.0});
    CHECK(f.degenerate);
    for (double v : f.values) CHECK(v == 0.5);
}

TEST_CASE("denormalize inverts normalize") {
    std::vector<double> raw{3.0, -2.0, 11.5, 0.25, 8.0};
    SeriesFrame f = normalize(raw);
    for (std::size_t i = 0; i < raw.size(); ++i)
        CHECK(denormalize(f, f.values[i]) == doctest::Approx(raw[i]).epsilon(1e-12));
}

TEST_CASE("normalize is monotone") {
    Rng rng(6);
    std::vector<double> raw(50);
    for (double& v : raw) v = rng.normal(0.0, 10.0);
    SeriesFrame f = normalize(raw);
    for (std::size_t i = 0; i < raw.size(); ++i)
        for (std::size_t j = 0; j < raw.size(); ++j)
            if (raw[i] < raw[j]) CHECK(f.values[i] <= f.values[j]);
}

TEST_CASE("split fractions and concatenation") {
    SeriesFrame f;
    f.values.resize(100);
    for (std::size_t i = 0; i < 100; ++i) f.values[i] = static_cast<double>(i) / 99.0;
    auto [train, test] = split(f, 0.8);
    CHECK(train.values.size() == 80);
    CHECK(test.values.size() == 20);

    std::vector<double> rejoined = train.values;
    rejoined.insert(rejoined.end(), test.values.begin(), test.values.end());
    CHECK(rejoined == f.values);

    SeriesFrame odd;
    odd.values.assign(101, 0.3);
    auto [t2, s2] = split(odd, 0.5);
    CHECK(t2.values.size() == 50);
    CHECK(s2.values.size() == 51);
}

TEST_CASE("split rejects sides that are too short") {
    SeriesFrame f;
    f.values.assign(30, 0.5);
    CHECK_THROWS_AS(split(f, 0.95), std::invalid_argument);
    CHECK_THROWS_AS(split(f, 1.2), std::invalid_argument);
}

TEST_CASE("synthetic series are reproducible and in range") {
    SeriesFrame a = synth_series(SynthKind::RegimeSwitch, 256, 42);
    SeriesFrame b = synth_series(SynthKind::RegimeSwitch, 256, 42);
    CHECK(a.values == b.values);
    for (double v : a.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    SeriesFrame c = synth_series(SynthKind::Sine, 256, 42);
    for (double v : c.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("noise-free sine peaks at 0.9 on step 8") {
    SeriesFrame f = synth_series(SynthKind::Sine, 64, 0, 0.0);
    CHECK(f.values[8] == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(f.values[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(f.values[24] == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("regime series visits both levels") {
    SeriesFrame f = synth_series(SynthKind::RegimeSwitch, 2048, 0, 0.0);
    bool low = false, high = false;
    for (double v : f.values) {
        if (v < 0.3) low = true;
        if (v > 0.7) high = true;
    }
    CHECK(low);
    CHECK(high);
}

}  // TEST_SUITE
