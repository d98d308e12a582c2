#pragma once

#include <cmath>
#include <cstdint>

namespace qkdco {

// SplitMix64 finalizer. Used both as the per-pulse key schedule and as the
// per-draw output function, so any (seed, pulse, counter) triple can be
// evaluated independently; that is what makes sharded simulation order-free.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Counter-based stream owned by one pulse. Draw order within a pulse is part
// of the simulation contract; merging shards never consumes from it.
class PulseRng {
  public:
    PulseRng(std::uint64_t seed, std::uint64_t pulse)
        : key_(mix64(seed + mix64(pulse))) {}

    std::uint64_t next() { return mix64(key_ + counter_++); }

    // Value at a fixed counter without advancing; lets the merge pass
    // re-derive the state draws (counters 0 and 1) for any period.
    std::uint64_t at(std::uint64_t counter) const { return mix64(key_ + counter); }

    double next_unit() { return to_unit(next()); }

    static double to_unit(std::uint64_t u) {
        return static_cast<double>(u >> 11) * 0x1.0p-53;
    }

    // Box-Muller from two raw draws; u1 shifted into (0,1] to keep log finite.
    static double to_gauss(std::uint64_t a, std::uint64_t b) {
        double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;
        double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Probability as a 64-bit acceptance threshold: P(next() < threshold) = p
// up to 2^-64. Saturates at the ends so p=0 never fires and p=1 always does.
inline std::uint64_t prob_threshold_u64(double p) {
    if (p <= 0.0) return 0;
    if (p >= 1.0) return ~0ull;
    long double scaled = static_cast<long double>(p) * 18446744073709551616.0L;
    if (scaled >= 18446744073709551615.0L) return ~0ull;
    return static_cast<std::uint64_t>(scaled);
}

inline std::uint32_t prob_threshold_u32(double p) {
    if (p <= 0.0) return 0;
    if (p >= 1.0) return 0xffffffffu;
    double scaled = p * 4294967296.0;
    if (scaled >= 4294967295.0) return 0xffffffffu;
    return static_cast<std::uint32_t>(scaled);
}

}  // namespace qkdco
