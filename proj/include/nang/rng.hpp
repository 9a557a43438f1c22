#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "nang/errors.hpp"

namespace nang {

// Deterministic pseudo-random stream. splitmix64 core with explicit
// distribution code so draw sequences are identical across platforms and
// standard-library versions. Identical seeds produce identical sequences;
// derive() yields statistically independent child streams.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // Warm up so nearby seeds decorrelate immediately.
        next_u64();
        next_u64();
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (second value discarded; no hidden state).
    double gaussian() {
        double u1 = 1.0 - uniform(); // (0, 1], keeps log finite
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Unbiased index in [0, n).
    std::size_t uniform_index(std::size_t n) {
        if (n == 0) throw InvalidArgument("uniform_index: n must be positive");
        // Rejection sampling over the top multiple of n.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return static_cast<std::size_t>(x % n);
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        if (items.size() < 2) return;
        for (std::size_t i = items.size() - 1; i > 0; --i) {
            std::size_t j = uniform_index(i + 1);
            std::swap(items[i], items[j]);
        }
    }

    // Independent child stream keyed by a label; deriving with the same label
    // from the same parent state always yields the same stream.
    Rng derive(std::uint64_t label) const {
        std::uint64_t z = state_ ^ (0x9e3779b97f4a7c15ULL * (label + 0x632be59bd9b4e019ULL));
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return Rng(z ^ (z >> 31));
    }

private:
    std::uint64_t state_;
};

} // namespace nang
