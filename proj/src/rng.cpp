#include "cdrf/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cdrf {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

// splitmix64 finalizer; decorrelates related inputs.
std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view stage) {
    return mix(master ^ fnv1a(stage));
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view stage,
                          std::uint64_t index) {
    return mix(derive_seed(master, stage) + 0x632be59bd9b4e019ULL * (index + 1));
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open() {
    double u = uniform();
    while (u == 0.0) u = uniform();
    return u;
}

double Rng::normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be > 0");
    if (shape < 1.0) {
        // Boost: G(a) = G(a+1) * U^{1/a}.
        const double u = uniform_open();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        const double u = uniform_open();
        if (u < 1.0 - 0.0331 * (x * x) * (x * x)) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

double Rng::beta(double alpha, double beta) {
    const double g1 = gamma(alpha);
    const double g2 = gamma(beta);
    return g1 / (g1 + g2);
}

std::size_t Rng::index(std::size_t n) {
    // Rejection-free enough at 64 bits; modulo bias is < 2^-53 for desk n.
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

std::vector<std::size_t> Rng::shuffled_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = index(i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

}  // namespace cdrf
