#pragma once

// Counter-based splittable random stream. The i-th output is a pure
// function of (key, i), so a stream can be replayed from its seed and
// child streams derived with split(label) depend only on (seed, label),
// never on how much of the parent stream was consumed. This is what
// makes per-client randomness independent of client execution order.

#include <cstdint>
#include <vector>

#include "fedkd/matrix.hpp"

namespace fedkd {

class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    // Child stream keyed by (this stream's key, label). Counter-independent.
    SeededRng split(std::uint64_t label) const;

    std::uint64_t next_u64();

    // Uniform in [0, 1), 53-bit resolution.
    double next_uniform();

    // Box-Muller; stddev == 0 yields exactly `mean`.
    double next_normal(double mean = 0.0, double stddev = 1.0);

    // Uniform in [0, n), n >= 1. Multiply-shift reduction; the bias is
    // below n / 2^64, irrelevant at simulation scale.
    std::uint64_t next_below(std::uint64_t n);

    // Fisher-Yates permutation of {0, ..., n-1}.
    std::vector<int> permutation(int n);

private:
    SeededRng(std::uint64_t key, std::uint64_t seed, int);

    std::uint64_t key_;
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

// i.i.d. normal entries, row-major draw order. Deterministic given the
// stream state.
Matrix rng_normal(SeededRng& rng, Index rows, Index cols, double mean, double stddev);

}  // namespace fedkd
