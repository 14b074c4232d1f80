#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdlgm/rng.hpp"

namespace tdlgm {

// Normalized scalar time series plus the scaler that produced it.
struct SeriesFrame {
    std::vector<double> values;  // all in [0, 1]
    double raw_min = 0.0;
    double raw_max = 1.0;
    bool degenerate = false;  // constant raw input
    std::string source;
};

struct CsvColumn {
    std::vector<double> values;
    std::size_t skipped = 0;  // rows with empty or non-numeric cells
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace detail

// Reads one named column from a comma-separated file with a header row.
// Rows whose cell is empty or non-numeric are skipped and counted.
inline CsvColumn load_csv(const std::string& path, const std::string& column_name) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("'" + path + "' is empty");
    std::vector<std::string> header = detail::split_csv_line(line);

    std::size_t col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == column_name) {
            col = i;
            break;
        }
    if (col == header.size()) {
        std::string available;
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) available += ", ";
            available += header[i];
        }
        throw std::runtime_error("column '" + column_name + "' not found in '" + path +
                                 "'; available: " + available);
    }

    CsvColumn out;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        std::vector<std::string> cells = detail::split_csv_line(line);
        double v;
        if (col < cells.size() && detail::parse_double(cells[col], v))
            out.values.push_back(v);
        else
            ++out.skipped;
    }
    if (out.values.empty())
        throw std::runtime_error("no usable rows for column '" + column_name + "' in '" + path +
                                 "'");
    return out;
}

// Min-max scaling to [0, 1]. A constant series maps to all-0.5 and is flagged.
inline SeriesFrame normalize(const std::vector<double>& raw, std::string source = "") {
    if (raw.empty()) throw std::invalid_argument("normalize: empty input");
    SeriesFrame f;
    f.source = std::move(source);
    const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
    f.raw_min = *lo_it;
    f.raw_max = *hi_it;
    if (f.raw_min == f.raw_max) {
        f.degenerate = true;
        f.values.assign(raw.size(), 0.5);
        return f;
    }
    const double span = f.raw_max - f.raw_min;
    f.values.reserve(raw.size());
    for (double v : raw) f.values.push_back((v - f.raw_min) / span);
    return f;
}

// Applies an existing scaler (e.g. the train split's) to new raw data.
// Values outside the scaler's range are clamped into [0, 1].
inline SeriesFrame normalize_with(const std::vector<double>& raw, double raw_min, double raw_max,
                                  std::string source = "") {
    if (raw.empty()) throw std::invalid_argument("normalize_with: empty input");
    SeriesFrame f;
    f.source = std::move(source);
    f.raw_min = raw_min;
    f.raw_max = raw_max;
    if (raw_min == raw_max) {
        f.degenerate = true;
        f.values.assign(raw.size(), 0.5);
        return f;
    }
    const double span = raw_max - raw_min;
    f.values.reserve(raw.size());
    for (double v : raw)
        f.values.push_back(std::min(1.0, std::max(0.0, (v - raw_min) / span)));
    return f;
}

inline double denormalize(const SeriesFrame& f, double v) {
    if (f.degenerate) return f.raw_min;
    return f.raw_min + v * (f.raw_max - f.raw_min);
}

// Contiguous chronological split; the train side gets floor(fraction * n).
inline std::pair<SeriesFrame, SeriesFrame> split(const SeriesFrame& frame, double train_fraction,
                                                 std::size_t min_len = 10) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw std::invalid_argument("split: fraction must be in (0, 1)");
    const std::size_t n = frame.values.size();
    const std::size_t n_train = static_cast<std::size_t>(std::floor(train_fraction * n));
    if (n_train < min_len || n - n_train < min_len)
        throw std::invalid_argument("split: a side would have fewer than " +
                                    std::to_string(min_len) + " points");
    SeriesFrame train = frame, test = frame;
    train.values.assign(frame.values.begin(), frame.values.begin() + n_train);
    test.values.assign(frame.values.begin() + n_train, frame.values.end());
    train.source = frame.source + "[train]";
    test.source = frame.source + "[test]";
    return {train, test};
}

// ---------------------------------------------------------------------------
// synthetic desk-scale series

enum class SynthKind { Sine, RegimeSwitch };

inline SynthKind synth_kind_from(const std::string& s) {
    if (s == "sine") return SynthKind::Sine;
    if (s == "regime_switch") return SynthKind::RegimeSwitch;
    throw std::invalid_argument("unknown synthetic kind '" + s + "'");
}

// sine: 0.5 + 0.4 sin(2 pi t / 32) + N(0, noise_sd^2), clamped.
// regime_switch: mean level alternates between 0.2 and 0.8 with geometric
// dwell (mean 16 steps), same additive noise.
inline SeriesFrame synth_series(SynthKind kind, std::size_t length, std::uint64_t seed,
                                double noise_sd = 0.02) {
    if (length < 64) throw std::invalid_argument("synth_series: length must be >= 64");
    Rng rng(seed);
    SeriesFrame f;
    f.raw_min = 0.0;
    f.raw_max = 1.0;
    f.values.reserve(length);

    double level = 0.2;
    for (std::size_t t = 0; t < length; ++t) {
        double v;
        switch (kind) {
            case SynthKind::Sine:
                v = 0.5 + 0.4 * std::sin(2.0 * M_PI * static_cast<double>(t) / 32.0);
                f.source = "synth:sine";
                break;
            case SynthKind::RegimeSwitch:
                if (t > 0 && rng.uniform() < 1.0 / 16.0) level = (level < 0.5) ? 0.8 : 0.2;
                v = level;
                f.source = "synth:regime_switch";
                break;
            default:
                throw std::invalid_argument("synth_series: bad kind");
        }
        if (noise_sd > 0.0) v += rng.normal(0.0, noise_sd);
        f.values.push_back(std::min(1.0, std::max(0.0, v)));
    }
    return f;
}

}  // namespace tdlgm
