#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "cdrf/dataset.hpp"
#include "cdrf/nuisance.hpp"
#include "cdrf/reference_measure.hpp"

namespace cdrf {

/// The three benchmark CDRF shapes. Each family pairs a target curve
/// theta0 with a misspecified curve that generates outcomes for
/// misaligned sources.
enum class CdrfFamily { gaussian, trigonometric, discontinuous };

std::string to_string(CdrfFamily family);
CdrfFamily parse_family(std::string_view text);

double true_cdrf(CdrfFamily family, double a);
double misspecified_cdrf(CdrfFamily family, double a);

/// Source label encoding (S_X, S_Y) in {0,1}^2 as s = 2 S_X + S_Y.
int source_label(bool sx, bool sy);

/// The benchmark fusion sets: S_X = {2,3}, S_Y = {1,3}, intersection {3}.
FusionConfig scenario_fusion();

/// Draws n records from the benchmark design:
///   S_X, S_Y ~ Bernoulli(1/2) independent;
///   X | S_X=1 ~ N((1,1,1)/3, 0.09 I),  X | S_X=0 ~ N((1,1,1)/6, Sigma1);
///   A | X ~ Beta(c, c) with c = 1 + 1/(1 + exp(<X,1>));
///   Y | X, A ~ N(theta(A) <X,1>, 0.1^2), theta = theta0 when S_Y=1 and the
///   misspecified curve otherwise.
Dataset generate(CdrfFamily family, std::size_t n, std::uint64_t seed);

/// Closed-form nuisance truth for the design above, as a NuisanceFit whose
/// evaluators call exact densities. tau0 is the Monte Carlo average of
/// m0(X, .) over mc_size draws of X | S_X = 1.
NuisanceFit oracle_nuisance(CdrfFamily family, const ReferenceMeasure& mu,
                            std::size_t mc_size, std::uint64_t seed,
                            EstimationMode mode = EstimationMode::fused);

}  // namespace cdrf
