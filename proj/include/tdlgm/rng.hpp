#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace tdlgm {

// Seeded random source. Gaussian draws go through Box-Muller on top of the
// raw engine bits so that streams are identical across standard-library
// implementations (std::normal_distribution's algorithm is unspecified,
// which would break bit-exact checkpoint reproduction).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // standard normal
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // index in [0, n)
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace tdlgm
