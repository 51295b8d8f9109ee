#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdrf/krr_estimator.hpp"
#include "cdrf/nuisance.hpp"
#include "cdrf/pipeline.hpp"
#include "cdrf/reference_measure.hpp"
#include "cdrf/simulation.hpp"

namespace cdrf {

enum class Method { fusion, no_fusion };
std::string to_string(Method method);
Method parse_method(std::string_view text);

/// CSV-safe rendering of a reference measure ("uniform", "beta-5-5").
std::string measure_slug(const ReferenceMeasure& mu);
ReferenceMeasure parse_measure_slug(std::string_view slug);

struct RunRiskRow {
    CdrfFamily family = CdrfFamily::gaussian;
    std::string measure;  // slug
    std::size_t n = 0;
    int run = 0;
    Method method = Method::fusion;
    double risk = 0.0;
};

struct RiskCell {
    CdrfFamily family = CdrfFamily::gaussian;
    std::string measure;
    std::size_t n = 0;
    double fusion_median = 0.0;
    double nofusion_median = 0.0;
    int pct_reduction = 0;
};

struct RiskTable {
    std::vector<RiskCell> cells;
};

/// Mean squared error between the fitted and true CDRF over m_eval fresh
/// draws from mu.
double empirical_risk_vs_truth(const FittedCDRF& model, CdrfFamily family,
                               const ReferenceMeasure& mu, std::size_t m_eval,
                               std::uint64_t seed);

/// round-half-up of 100 (1 - fused/nonfused); negative when fusion loses.
int percent_reduction(double fused, double nonfused);

/// High-probability Lipschitz constant of the loss:
///   B(delta) = 4 (1+delta)^2 (1 + xi + C_{sigma,delta} eta w_sup),
///   C_{sigma,delta} = 1 + max{ sigma sqrt(2 log(8/delta)),
///                              2 L log(8/delta) }.
double lipschitz_constant(double delta, double sigma, double l_subexp,
                          double xi, double eta, double w_sup);

struct DiagnosticsInput {
    double delta = 0.5;
    double sigma = 1.0;
    double l_subexp = 1.0;
    double xi = 2.0, eta = 2.0, w_sup = 1.0;        // with fusion
    double xi_u = 4.0, eta_u = 4.0, w_sup_u = 1.0;  // without fusion
    double p = 0.5;      // eigenvalue-decay exponent, in (0,1)
    double alpha = 0.25; // source-condition exponent, in (0, 1/2)
};

/// Ratio of the fused to the non-fused excess-risk bound:
///   ((1 + xi + C eta w_sup) / (1 + xi_u + C eta_u w_sup_u))^e,
///   e = 2 (1+p)(1-2 alpha) / (p + 1 - 2 alpha).
double bound_ratio(const DiagnosticsInput& input);

/// M_lambda = (M_eta + M_w + 2) / M_w, derived from the nuisance bounds.
double m_lambda(const NuisanceBounds& bounds);

struct BenchmarkConfig {
    std::vector<CdrfFamily> families{CdrfFamily::gaussian};
    std::vector<ReferenceMeasure> measures{ReferenceMeasure::uniform()};
    std::vector<std::size_t> ns{400};
    int runs = 1;
    std::uint64_t master_seed = 0;
    PipelineConfig pipeline;
    std::size_t m_eval = 1000;
    int workers = 0;  // <= 0: hardware concurrency

    /// When set, completed (cell, run) results are appended here and reused
    /// on restart, so interrupted benchmarks resume where they stopped.
    std::filesystem::path results_path;
};

struct BenchmarkResult {
    std::vector<RunRiskRow> rows;  // sorted by (family, measure, n, run, method)
    RiskTable table;
    int failed_runs = 0;
    std::vector<std::string> failure_messages;
};

/// Monte Carlo benchmark over the scenario grid: per run, one dataset is
/// generated and both estimators are fit and scored against the true CDRF.
/// Runs execute on a worker pool; output is deterministic in the master
/// seed regardless of scheduling. Aborts when more than 5% of runs fail.
BenchmarkResult monte_carlo_benchmark(const BenchmarkConfig& config);

RiskTable tabulate(const std::vector<RunRiskRow>& rows);

void write_results_csv(const std::vector<RunRiskRow>& rows,
                       const std::filesystem::path& path);
std::vector<RunRiskRow> read_results_csv(const std::filesystem::path& path);
void write_table_csv(const RiskTable& table, const std::filesystem::path& path);

/// Plot-ready curve: a, theta0(a), theta_hat(a) on a 201-point uniform grid.
void write_curve_csv(const FittedCDRF& model, CdrfFamily family,
                     const std::filesystem::path& path);

}  // namespace cdrf
