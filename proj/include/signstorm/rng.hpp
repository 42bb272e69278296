#pragma once

#include <cstdint>
#include <vector>

namespace signstorm {

// SplitMix64. Used for every random draw in the project (weight init,
// dataset shuffles, attack random starts, differential evolution) so that
// results are reproducible across platforms; the standard <random>
// distributions are implementation-defined and would break that.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform double in [lo, hi).
    double next_double(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Uniform integer in [0, n). Modulo bias is irrelevant at our range
    // sizes (n far below 2^32) and keeps the draw count fixed.
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

// Stable per-task seed derivation, so that work items keep their seeds no
// matter how they are scheduled.
inline uint64_t derive_seed(uint64_t base, uint64_t index) {
    SplitMix64 rng(base ^ (index * 0xD1B54A32D192ED03ULL + 0x8BB84B93962EACC9ULL));
    return rng.next_u64();
}

} // namespace signstorm
