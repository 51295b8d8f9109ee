#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cdrf {

/// Reference measure mu on the exposure space [0,1]. Weights the squared
/// error risk and supplies the auxiliary exposure draws.
///
/// Shipped kinds: Uniform(0,1), Beta(alpha, beta). All are one-dimensional.
struct ReferenceMeasure {
    enum class Kind { uniform01, beta };

    Kind kind = Kind::uniform01;
    double alpha = 1.0;  // Beta shape parameters; ignored for uniform01
    double beta = 1.0;
    int dim = 1;

    static ReferenceMeasure uniform();
    static ReferenceMeasure make_beta(double alpha, double beta);

    /// Parses the config string forms: "uniform", "beta(5,5)", "beta(0.5,0.5)".
    static ReferenceMeasure parse(std::string_view text);
    std::string to_string() const;

    /// n i.i.d. seeded draws in [0,1]. Beta sampling goes through two gamma
    /// draws (ratio construction) for parameter-robust, portable determinism.
    std::vector<double> sample(std::size_t n, std::uint64_t seed) const;

    /// Lebesgue density at a in [0,1]. Beta densities with unbounded
    /// endpoints are evaluated at the point clamped into [1e-12, 1 - 1e-12],
    /// so the result is always finite.
    double density(double a) const;
};

}  // namespace cdrf
