#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cdrf {

/// 64-bit FNV-1a over a byte string. Used for config hashing and for
/// deriving per-stage child seeds from a master seed.
std::uint64_t fnv1a(std::string_view bytes,
                    std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Child seed for a named stage. Every source of randomness in the library
/// draws from a stream seeded this way; there is no global RNG state.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage);
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage,
                          std::uint64_t index);

/// Seeded random stream with hand-rolled distribution transforms.
///
/// The mt19937_64 bit stream is pinned by the C++ standard, but the
/// std::*_distribution adaptors are implementation-defined, so uniform,
/// normal (Box-Muller), gamma (Marsaglia-Tsang) and beta (gamma ratio)
/// are implemented here. Identical seeds give identical draw sequences on
/// any conforming platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0,1), 53-bit resolution.
    double uniform();

    /// Uniform on (0,1); never returns 0 (safe under log).
    double uniform_open();

    /// Standard normal via Box-Muller; consumes two uniforms per call.
    double normal();

    /// Gamma(shape, 1) via Marsaglia-Tsang squeeze, boosted for shape < 1.
    double gamma(double shape);

    /// Beta(alpha, beta) as a ratio of two gamma draws.
    double beta(double alpha, double beta);

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);

    /// Fisher-Yates permutation of 0..n-1.
    std::vector<std::size_t> shuffled_indices(std::size_t n);

  private:
    std::mt19937_64 engine_;
};

}  // namespace cdrf
