#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace reldetr {

/// Deterministic generator with named child streams.
///
/// Every consumer of randomness asks for `split("<purpose>")`, so adding or
/// resizing one consumer never shifts the numbers another one sees.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    Rng split(std::string_view name) const;
    Rng split(std::uint64_t index) const;

    std::uint64_t seed() const { return seed_; }

    double uniform(double lo = 0.0, double hi = 1.0);
    double normal(double mean = 0.0, double stddev = 1.0);
    /// Uniform integer in [lo, hi].
    std::int64_t integer(std::int64_t lo, std::int64_t hi);

    std::mt19937_64& engine() { return engine_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view text);

}  // namespace reldetr
