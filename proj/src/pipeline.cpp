#include "cdrf/pipeline.hpp"

#include <nlohmann/json.hpp>

#include "cdrf/errors.hpp"
#include "cdrf/orthogonal_loss.hpp"
#include "cdrf/rng.hpp"

namespace cdrf {

namespace {

// Rethrows module errors with a stage label so CLI messages identify where
// a run broke down.
template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const DataError& e) {
        throw DataError(std::string(name) + ": " + e.what());
    } catch (const NumericError& e) {
        throw NumericError(std::string(name) + ": " + e.what());
    }
}

Dataset dataset_of(std::span<const ExtendedRecord> records, int r, int d) {
    Dataset ds;
    ds.covariate_dim = r;
    ds.exposure_dim = d;
    ds.records.reserve(records.size());
    for (const auto& rec : records) ds.records.push_back(rec.base);
    return ds;
}

}  // namespace

FitResult fit_cdrf(const Dataset& data, const FusionConfig& fusion,
                   EstimationMode mode, const ReferenceMeasure& mu,
                   const PipelineConfig& config, std::uint64_t seed) {
    fusion.validate(mode);
    data.validate();
    config.bounds.validate();

    FitResult result;
    result.mode = mode;
    result.n_total = data.size();

    Dataset working = data;
    if (mode == EstimationMode::nonfused) {
        Dataset filtered;
        filtered.covariate_dim = data.covariate_dim;
        filtered.exposure_dim = data.exposure_dim;
        for (const auto& rec : data.records)
            if (fusion.in_intersection(rec.s)) filtered.records.push_back(rec);
        if (filtered.records.empty())
            throw DataError("filter: no records from intersection sources");
        working = std::move(filtered);
    }
    result.n_used = working.size();

    auto trace = [&result](const char* name, std::uint64_t s) {
        result.seed_trace.emplace_back(name, s);
        return s;
    };

    const auto seed_split = trace("split", derive_seed(seed, "split"));
    const auto seed_mu1 = trace("mu_fold1", derive_seed(seed, "mu_fold1"));
    const auto seed_mu2 = trace("mu_fold2", derive_seed(seed, "mu_fold2"));
    const auto seed_nuisance = trace("nuisance", derive_seed(seed, "nuisance"));
    const auto seed_cv = trace("cv", derive_seed(seed, "cv"));

    const SplitPair split = stage("split", [&] {
        return split_sample(working, config.split_fraction, seed_split);
    });

    const auto fold1 = stage("mu_draws", [&] {
        return extend_with_mu_draws(split.part1, mu, seed_mu1);
    });
    const auto fold2 = stage("mu_draws", [&] {
        return extend_with_mu_draws(split.part2, mu, seed_mu2);
    });

    const int r = working.covariate_dim;
    const int d = working.exposure_dim;
    NuisanceFitter fitter = [&, r, d](std::span<const ExtendedRecord> records,
                                      std::uint64_t fit_seed) -> NuisanceFit {
        const Dataset ds = dataset_of(records, r, d);
        auto [xi, eta] = estimate_source_probs(ds, fusion, mode, config.bounds);
        auto [num, den] = build_ratio_training_sets(records, fusion, mode);
        RatioFitConfig ratio_cfg = config.ratio;
        ratio_cfg.seed = derive_seed(fit_seed, "ratio");
        RatioModel ratio = fit_density_ratio(num, den, ratio_cfg, config.bounds);
        ratio.mode = mode;
        OutcomeFitConfig outcome_cfg = config.outcome;
        outcome_cfg.seed = derive_seed(fit_seed, "outcome");
        RegressionModel outcome =
            fit_outcome_regression(ds, fusion, mode, outcome_cfg);
        TauModel tau = fit_tau(outcome, ds, fusion, mode);
        return assemble_nuisance(xi, eta, std::move(ratio), std::move(outcome),
                                 std::move(tau), mode, config.bounds,
                                 config.clip_mean);
    };

    result.nuisance =
        stage("nuisance", [&] { return fitter(fold1, seed_nuisance); });

    KernelSpec kernel{config.kernel_family, config.bandwidth};
    if (config.bandwidth <= 0.0) {
        kernel.bandwidth = stage("bandwidth", [&] {
            const Eigen::MatrixXd a_points = exposure_matrix(fold2, false);
            if (config.bandwidth_pool == PipelineConfig::BandwidthPool::a_only)
                return median_heuristic(a_points, config.kernel_family);
            const Eigen::MatrixXd b_points = exposure_matrix(fold2, true);
            Eigen::MatrixXd pooled(a_points.rows() + b_points.rows(),
                                   a_points.cols());
            pooled << a_points, b_points;
            return median_heuristic(pooled, config.kernel_family);
        });
    }
    result.bandwidth = kernel.bandwidth;

    CVConfig cv_cfg = config.cv;
    cv_cfg.seed = seed_cv;
    result.cv = stage("cv", [&] {
        return select_lambda(fold2, fusion, mode, kernel, cv_cfg, fitter, &mu);
    });

    result.model = stage("fit", [&] {
        const auto residuals = pseudo_residuals(result.nuisance, fold2, fusion, mode);
        const Eigen::MatrixXd a_points = exposure_matrix(fold2, false);
        const Eigen::MatrixXd b_points = exposure_matrix(fold2, true);
        const auto blocks = gram(kernel, a_points, b_points);
        return fit_closed_form(residuals, blocks, result.cv.chosen_lambda,
                               a_points, b_points, kernel);
    });
    return result;
}

nlohmann::json fit_result_to_json(const FitResult& result) {
    nlohmann::json doc;
    doc["model"] = result.model.to_json();
    doc["mode"] = to_string(result.mode);
    doc["bandwidth"] = result.bandwidth;
    doc["n_total"] = result.n_total;
    doc["n_used"] = result.n_used;
    doc["nuisance"] = {
        {"xi", result.nuisance.xi},
        {"eta", result.nuisance.eta},
        {"ratio_n_basis", result.nuisance.ratio.basis_centers.rows()},
        {"ratio_bandwidth", result.nuisance.ratio.basis_bandwidth},
        {"outcome_ridge", result.nuisance.outcome.ridge},
        {"outcome_bandwidth", result.nuisance.outcome.kernel.bandwidth},
        {"clip_mean", result.nuisance.clip_mean},
    };
    doc["cv"] = {
        {"chosen_lambda", result.cv.chosen_lambda},
        {"lambda_grid", result.cv.lambda_grid},
    };
    nlohmann::json trace = nlohmann::json::object();
    for (const auto& [name, value] : result.seed_trace) trace[name] = value;
    doc["seed_trace"] = trace;
    return doc;
}

}  // namespace cdrf
