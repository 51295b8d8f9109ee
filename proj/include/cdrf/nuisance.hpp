#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "cdrf/dataset.hpp"
#include "cdrf/kernel.hpp"

namespace cdrf {

/// Uniform nuisance bounds: density-ratio evaluations are clipped into
/// [1/m_w, m_w]; the inverse source probabilities are capped at m_xi, m_eta.
struct NuisanceBounds {
    double m_w = 50.0;
    double m_xi = 100.0;
    double m_eta = 100.0;

    void validate() const;
};

/// Pointwise evaluator over (x, a); analytic closed forms (used by the
/// simulation oracle and by perturbation tests) take precedence over the
/// fitted representation.
using AnalyticXA =
    std::function<double(const Eigen::VectorXd& x, const Eigen::VectorXd& a)>;
using AnalyticA = std::function<double(const Eigen::VectorXd& a)>;

/// Density-ratio model w(x, a), fit by unconstrained least-squares
/// importance fitting over a Gaussian basis. Coefficients are nonnegative
/// and evaluations are clipped into [clip_lo, clip_hi].
struct RatioModel {
    Eigen::MatrixXd basis_centers;  // n_basis x (r + d)
    double basis_bandwidth = 1.0;
    Eigen::VectorXd alpha;
    double clip_lo = 0.02;
    double clip_hi = 50.0;
    EstimationMode mode = EstimationMode::fused;
    AnalyticXA analytic;

    double eval(const Eigen::VectorXd& x, const Eigen::VectorXd& a) const;
    /// Rows of `features` are concatenated (x, a) vectors.
    Eigen::VectorXd eval_features(const Eigen::MatrixXd& features) const;
};

/// Kernel ridge regression of the outcome on the concatenated (x, a)
/// feature: dual coefficients against training anchors, (G + n*lambda*I)c = y.
struct RegressionModel {
    Eigen::MatrixXd anchors;  // n x (r + d)
    Eigen::VectorXd coef;
    KernelSpec kernel;
    double ridge = 0.0;
    EstimationMode mode = EstimationMode::fused;
    AnalyticXA analytic;

    double eval(const Eigen::VectorXd& x, const Eigen::VectorXd& a) const;
    Eigen::VectorXd eval_features(const Eigen::MatrixXd& features) const;
};

/// Plug-in CDRF tau(a): the mean of m(x_j, a) over the stored covariate
/// anchors. Because the kernel factorizes over the (x, a) blocks, the
/// average collapses to a single exposure-space expansion with reduced
/// coefficients, computed once at fit time.
struct TauModel {
    RegressionModel outcome;
    Eigen::MatrixXd x_anchors;  // qualifying fold-1 covariate rows
    Eigen::MatrixXd exposure_anchors;
    Eigen::VectorXd reduced_coef;
    EstimationMode mode = EstimationMode::fused;
    AnalyticA analytic;

    double eval(const Eigen::VectorXd& a) const;
    Eigen::VectorXd eval_points(const Eigen::MatrixXd& points) const;
};

/// The fitted nuisance tuple g = (xi, eta, w, m, tau).
struct NuisanceFit {
    double xi = 1.0;
    double eta = 1.0;
    RatioModel ratio;
    RegressionModel outcome;
    TauModel tau;
    EstimationMode mode = EstimationMode::fused;
    NuisanceBounds bounds;
    bool clip_mean = false;  // clamp m, tau into [-1, 1] when set

    double ratio_at(const Eigen::VectorXd& x, const Eigen::VectorXd& a) const;
    double outcome_at(const Eigen::VectorXd& x, const Eigen::VectorXd& a) const;
    double tau_at(const Eigen::VectorXd& a) const;
};

struct RatioFitConfig {
    int n_basis = 100;
    std::vector<double> lambda_grid{1e-3, 1e-2, 1e-1, 1.0};
    int cv_folds = 5;
    std::uint64_t seed = 0;
};

struct OutcomeFitConfig {
    KernelSpec::Family kernel_family = KernelSpec::Family::gaussian;
    double bandwidth = 0.0;  // 0 = median heuristic on the training features
    std::vector<double> ridge_grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0};
    int cv_folds = 5;
    std::uint64_t seed = 0;
};

/// Inverse empirical source probabilities (xi, eta), capped at the bounds.
/// Nonfused mode uses the intersection set for both.
std::pair<double, double> estimate_source_probs(const Dataset& data,
                                                const FusionConfig& fusion,
                                                EstimationMode mode,
                                                const NuisanceBounds& bounds);

/// Training sets for the density ratio: numerator rows are (x_i, b_i) for
/// s_i in S_X, denominator rows (x_i, a_i) for s_i in S_Y (both replaced by
/// the intersection in nonfused mode).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> build_ratio_training_sets(
    std::span<const ExtendedRecord> fold1, const FusionConfig& fusion,
    EstimationMode mode);

/// Solves (H + lambda I) alpha = h and truncates negative coefficients.
Eigen::VectorXd ulsif_solve(const Eigen::MatrixXd& h_matrix,
                            const Eigen::VectorXd& h_vector, double lambda);

RatioModel fit_density_ratio(const Eigen::MatrixXd& numerator,
                             const Eigen::MatrixXd& denominator,
                             const RatioFitConfig& config,
                             const NuisanceBounds& bounds);

RegressionModel fit_outcome_regression(const Dataset& fold1,
                                       const FusionConfig& fusion,
                                       EstimationMode mode,
                                       const OutcomeFitConfig& config);

TauModel fit_tau(const RegressionModel& outcome, const Dataset& fold1,
                 const FusionConfig& fusion, EstimationMode mode);

NuisanceFit assemble_nuisance(double xi, double eta, RatioModel ratio,
                              RegressionModel outcome, TauModel tau,
                              EstimationMode mode, const NuisanceBounds& bounds,
                              bool clip_mean = false);

/// Concatenated feature row (x, a) used by the ratio and outcome models.
Eigen::VectorXd feature_row(const Eigen::VectorXd& x, const Eigen::VectorXd& a);
Eigen::VectorXd to_vector(std::span<const double> values);

/// Stacks the observed exposures (use_b = false) or the auxiliary draws
/// (use_b = true) of a fold into an n x d matrix.
Eigen::MatrixXd exposure_matrix(std::span<const ExtendedRecord> records,
                                bool use_b);

}  // namespace cdrf
