#pragma once

#include <cstddef>
#include <cstdint>

namespace trl3d {

/// Counter-based generator: draw k is splitmix64(seed + k * golden).
/// The stream depends only on the seed, so it is identical on every
/// platform and compiler.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi);
    /// Standard normal (Box-Muller, one value per call).
    double normal();
    /// Uniform integer in [0, n); n must be positive.
    std::size_t below(std::size_t n);

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Derives an independent seed for a sub-stream (sample index, module id, ...).
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index);

}  // namespace trl3d
