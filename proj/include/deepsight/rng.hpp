#pragma once

#include <cmath>
#include <cstdint>

namespace deepsight {

// 64-bit mix (splitmix64 finalizer). Used both as the step function of the
// sequential generator and as a pure hash for counter-based streams, so any
// value derived from (seed, counters) is reproducible across runs and
// independent of evaluation order.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derive a child seed from a root seed and up to three stream indices.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = mix64(root ^ 0x8f1bbcdcbfa53e0bULL);
    s = mix64(s ^ mix64(a));
    s = mix64(s ^ mix64(b ^ 0xd6e8feb86659fd93ULL));
    s = mix64(s ^ mix64(c ^ 0xa5a5a5a5a5a5a5a5ULL));
    return s;
}

// Sequential splitmix64 generator. Small state, trivially copyable, and the
// output stream depends only on the seed, not on platform or library version.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1), 53 random bits.
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; consumes two uniforms per call so the
    // stream position does not depend on hidden cache state.
    double next_normal() {
        double u1 = 1.0 - next_double();  // (0, 1]
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586477 * u2);
    }

    // Uniform integer in [0, n) via 128-bit multiply-shift.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

private:
    std::uint64_t state_;
};

// Pure counter-based uniform in [0, 1): a function of (seed, m, j) only.
// Feature extraction draws its random model inputs through this, so the
// values are identical no matter how the work is split across threads.
inline double counter_u01(std::uint64_t seed, std::uint64_t m, std::uint64_t j) {
    std::uint64_t h = mix64(seed ^ mix64(m ^ 0x632be59bd9b4e019ULL));
    h = mix64(h ^ mix64(j ^ 0x9e6c63d0876a9a47ULL));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace deepsight
