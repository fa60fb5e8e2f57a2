#pragma once

#include <cstdint>
#include <random>

#include "sdlab/vec.hpp"

namespace sdlab {

// Deterministic random source. std::mt19937_64 has a standard-specified output
// sequence, and all derived draws below avoid the implementation-defined
// std:: distributions, so a seed reproduces the same stream on any platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Box-Muller, cosine branch only; two uniforms per draw.
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    Vec normal_vec(int d) {
        Vec v(static_cast<size_t>(d));
        for (auto& x : v) x = normal();
        return v;
    }

    // Inclusive range, rejection sampled (no modulo bias).
    int uniform_int(int lo, int hi) {
        if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
        uint64_t n = static_cast<uint64_t>(hi - lo) + 1;
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return lo + static_cast<int>(x % n);
    }

private:
    std::mt19937_64 gen_;
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Derives an independent child seed for a named substream.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream + 0x517CC1B727220A95ull));
}

}  // namespace sdlab
