#pragma once

#include <cmath>
#include <cstdint>

namespace vdd {

// Counter-based generator: draw i of a stream with seed s is a pure function
// of (s, i), so identical seeds give bit-identical streams on any platform.
//
//   word(s, i)    = splitmix64_finalize(s + (i+1) * 0x9E3779B97F4A7C15)
//   uniform(s, i) = ((word(s, i) >> 11) + 1) * 2^-53          in (0, 1]
//   normal(s, j)  = sqrt(-2 ln uniform(s, 2j)) * cos(2 pi uniform(s, 2j+1))
//
// The full recipe (constants included) is documented in docs/formats.md.
inline uint64_t splitmix64_finalize(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline uint64_t counter_word(uint64_t seed, uint64_t index) {
    return splitmix64_finalize(seed + (index + 1) * 0x9E3779B97F4A7C15ull);
}

class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed) {}

    uint64_t next_u64() { return counter_word(seed_, counter_++); }

    // Uniform in (0, 1]; never returns 0 so log() below is safe.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    // Box-Muller, cosine branch only; consumes exactly two uniforms per draw.
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Uniform integer in [lo, hi] via modulo reduction (bias is negligible for
    // the ranges used here and the reduction is trivially reproducible).
    int uniform_int(int lo, int hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }

    // Derive an independent stream, e.g. one sub-seed per training step.
    uint64_t derive(uint64_t tag) { return splitmix64_finalize(seed_ ^ counter_word(tag, 0)); }

private:
    uint64_t seed_;
    uint64_t counter_ = 0;
};

}  // namespace vdd
