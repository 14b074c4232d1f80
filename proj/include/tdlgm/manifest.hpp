#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tdlgm/train.hpp"
#include "tdlgm/version.hpp"

namespace tdlgm {

// Emitted alongside every command's outputs. The argv line is sufficient to
// re-run the command and reproduce the outputs byte for byte.
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;  // full flag list, program name excluded
    std::string tool_version = TDLGM_VERSION;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> config;  // resolved settings
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    double duration_seconds = 0.0;
};

inline std::string manifest_to_text(const RunManifest& m) {
    std::ostringstream out;
    out << "tdlgm-manifest v1\n";
    out << "version " << m.tool_version << "\n";
    out << "command " << m.command << "\n";
    out << "argv";
    for (const std::string& a : m.argv) out << " " << a;
    out << "\n";
    out << "seed " << m.seed << "\n";
    for (const auto& [k, v] : m.config) out << "config " << k << " " << v << "\n";
    for (const std::string& p : m.inputs) out << "input " << p << "\n";
    for (const std::string& p : m.outputs) out << "output " << p << "\n";
    out << "duration_seconds " << detail::fmt_double(m.duration_seconds) << "\n";
    return out.str();
}

inline void write_manifest(const RunManifest& m, const std::string& path) {
    atomic_write_text(path, manifest_to_text(m));
}

// Pulls the re-runnable argv back out of a manifest file.
inline std::vector<std::string> manifest_argv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest '" + path + "'");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("argv", 0) == 0) {
            std::istringstream ls(line.substr(4));
            std::vector<std::string> args;
            std::string a;
            while (ls >> a) args.push_back(a);
            return args;
        }
    }
    throw std::runtime_error("manifest '" + path + "' has no argv line");
}

}  // namespace tdlgm
