#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cdrf/cross_validation.hpp"
#include "cdrf/dataset.hpp"
#include "cdrf/krr_estimator.hpp"
#include "cdrf/nuisance.hpp"
#include "cdrf/reference_measure.hpp"

namespace cdrf {

struct PipelineConfig {
    double split_fraction = 0.5;
    KernelSpec::Family kernel_family = KernelSpec::Family::laplace;
    double bandwidth = 0.0;  // 0 = median heuristic on fold-2 exposures

    /// Which points feed the median heuristic: the observed exposures of
    /// the target fold only (default), or pooled with the auxiliary draws.
    enum class BandwidthPool { a_only, a_and_b };
    BandwidthPool bandwidth_pool = BandwidthPool::a_only;

    CVConfig cv;
    RatioFitConfig ratio;
    OutcomeFitConfig outcome;
    NuisanceBounds bounds;
    bool clip_mean = false;
};

struct FitResult {
    FittedCDRF model;
    NuisanceFit nuisance;
    CVReport cv;
    EstimationMode mode = EstimationMode::fused;
    std::vector<std::pair<std::string, std::uint64_t>> seed_trace;
    std::size_t n_total = 0;  // input records
    std::size_t n_used = 0;   // after nonfused filtering
    double bandwidth = 0.0;   // resolved kernel bandwidth
};

/// End-to-end estimation: split, draw auxiliary exposures, fit nuisances on
/// fold 1, select lambda by cross-validation on fold 2, and fit the
/// closed-form estimator on fold 2. Nonfused mode restricts the dataset to
/// intersection sources before splitting. Deterministic given the seed;
/// all derived seeds are recorded in seed_trace.
FitResult fit_cdrf(const Dataset& data, const FusionConfig& fusion,
                   EstimationMode mode, const ReferenceMeasure& mu,
                   const PipelineConfig& config, std::uint64_t seed);

nlohmann::json fit_result_to_json(const FitResult& result);

}  // namespace cdrf
