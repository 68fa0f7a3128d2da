#pragma once

#include <cstdint>

namespace demark {

// SplitMix64 with hand-rolled distributions. std::mt19937 +
// std::uniform_*_distribution are implementation-defined, which would break
// the cross-platform byte-reproducibility contract of dataset generation.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [lo, hi] inclusive, lo <= hi. Fixed-point rejection keeps the stream
    // identical everywhere.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<int64_t>(next_u64()); // full 64-bit span
        uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return lo + static_cast<int64_t>(v % range);
    }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

    // Stable child-seed derivation; (seed, index) -> independent stream.
    static uint64_t derive(uint64_t seed, uint64_t index) {
        Rng r(seed ^ (0x9E3779B97F4A7C15ULL * (index + 0x632BE59BD9B4E019ULL)));
        return r.next_u64();
    }

private:
    uint64_t state_;
};

} // namespace demark
