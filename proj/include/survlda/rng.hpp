#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace survlda {

// Counter-based generator: SplitMix64 applied to a (key, counter) pair.
//
//   key      = mix64(seed ^ mix64(stream + 0x9E3779B97F4A7C15))
//   output_n = mix64(key + n * 0x9E3779B97F4A7C15),  n = 0, 1, 2, ...
//   mix64(z) = z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//              z ^= z >> 27; z *= 0x94D049BB133111EB; z ^ (z >> 31)
//
// Every derived distribution below is implemented here (not via <random>
// distributions, whose algorithms are implementation-defined), so a given
// (seed, stream) reproduces the same draws on any platform.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();

    // Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform();
    // Standard normal via Box-Muller (cosine branch only, no caching).
    double normal();
    // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 draws Gamma(shape + 1) * U^(1/shape).
    double gamma(double shape);
    std::vector<double> dirichlet(std::span<const double> alpha);
    // Index drawn with probability proportional to weights (inverse CDF).
    std::size_t categorical(std::span<const double> weights);
    // Poisson by sequential inversion; mean must be <= 700.
    std::uint64_t poisson(double mean);
    std::uint64_t uniform_index(std::uint64_t n);

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t z);

// Stable 64-bit FNV-1a hash, used to derive per-feature streams from ids.
std::uint64_t hash_string(std::string_view s);

} // namespace survlda
