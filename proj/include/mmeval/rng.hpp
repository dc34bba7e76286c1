#pragma once

#include <cstdint>
#include <vector>

namespace mmeval {

/**
 * Deterministic 64-bit generator (splitmix64).
 *
 * Every random draw in the project flows through this class instead of the
 * <random> distributions, whose output is implementation-defined. Identical
 * seeds therefore give byte-identical batches, prompts and reports on any
 * platform or compiler.
 */
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return scramble(state_);
    }

    /// Unbiased integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound) {
        // rejection sampling on the top of the range
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t v = next();
        while (v >= limit) v = next();
        return v % bound;
    }

    /// Integer in [lo, hi], inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    /// Double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform01() < p; }

    template <class T>
    const T& pick(const std::vector<T>& v) {
        return v[below(v.size())];
    }

    /// Derive an independent stream seed from a base seed and a stream id.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        return scramble(scramble(seed + 0x9E3779B97F4A7C15ULL) ^ scramble(stream + 0xD1B54A32D192ED03ULL));
    }

  private:
    static std::uint64_t scramble(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

}  // namespace mmeval
