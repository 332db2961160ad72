#include "fedkd/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "fedkd/errors.hpp"

namespace fedkd {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kSplitTag = 0xD1B54A32D192ED03ULL;

// SplitMix64 finalizer; full-avalanche 64-bit mix.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) : key_(mix64(seed + kGolden)), seed_(seed) {}

SeededRng::SeededRng(std::uint64_t key, std::uint64_t seed, int) : key_(key), seed_(seed) {}

SeededRng SeededRng::split(std::uint64_t label) const {
    const std::uint64_t child = mix64(key_ ^ mix64(label * kGolden + kSplitTag));
    return SeededRng(child, seed_, 0);
}

std::uint64_t SeededRng::next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

double SeededRng::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::next_normal(double mean, double stddev) {
    double u1 = next_uniform();
    const double u2 = next_uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;  // keep log(u1) finite
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * (r * std::cos(2.0 * std::numbers::pi * u2));
}

std::uint64_t SeededRng::next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

std::vector<int> SeededRng::permutation(int n) {
    std::vector<int> p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) {
        const auto j = static_cast<int>(next_below(static_cast<std::uint64_t>(i) + 1));
        std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
    }
    return p;
}

Matrix rng_normal(SeededRng& rng, Index rows, Index cols, double mean, double stddev) {
    if (stddev < 0.0) {
        throw DomainError("rng_normal: stddev must be >= 0");
    }
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            m(i, j) = rng.next_normal(mean, stddev);
        }
    }
    return m;
}

}  // namespace fedkd
