#pragma once

#include <cstdint>
#include <iosfwd>

namespace deepsight {

// Randomized invariant suites for the scale-stability guarantees the filter
// relies on. Each returns the number of failing trials (0 = pass) and logs a
// line per failure when a stream is given.

// NEUP vectors are unchanged when an update is scaled by any lambda != 0
// (lambda drawn from {+-10^k, k in [-6, 6]}); tolerance 1e-9 per entry.
int check_neup_scale_invariance(std::uint64_t seed, int trials, std::ostream* log = nullptr);

// Threshold Exceedings counts are exactly equal under the same scaling.
int check_te_scale_invariance(std::uint64_t seed, int trials, std::ostream* log = nullptr);

// Cosine distances: d(lambda*u, v) == d(u, v) for lambda > 0 within 1e-12,
// and d(-u, v) == 2 - d(u, v).
int check_cosine_scale_stability(std::uint64_t seed, int trials, std::ostream* log = nullptr);

// TE is nonincreasing in the threshold factor over
// {0.001, 0.005, 0.01, 0.02, 0.05, 0.1}, and the max(0.01, 1/P) branch flips
// exactly at P = 100.
int check_tf_monotonicity(std::uint64_t seed, int vectors, std::ostream* log = nullptr);

}  // namespace deepsight
