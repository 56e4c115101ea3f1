#pragma once

#include <cstdint>

namespace seqmargin {

// Counter-based generator: the value at counter t is a pure function of
// (seed, t), so schedules and resampled datasets are reproducible no matter
// how much state was consumed in between.
struct SplitMix64 {
    uint64_t state;

    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next() {
        uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_double() { return (next() >> 11) * 0x1.0p-53; }

    // uniform in [0, n)
    uint64_t next_below(uint64_t n) { return next() % n; }

    // uniform in [lo, hi)
    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }
};

inline uint64_t hash_counter(uint64_t seed, uint64_t counter) {
    SplitMix64 g(seed ^ (0xD1B54A32D192ED03ULL * (counter + 1)));
    return g.next();
}

} // namespace seqmargin
