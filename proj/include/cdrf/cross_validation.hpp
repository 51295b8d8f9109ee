#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cdrf/dataset.hpp"
#include "cdrf/krr_estimator.hpp"
#include "cdrf/nuisance.hpp"

namespace cdrf {

struct CVConfig {
    int folds = 5;
    // Default grid: 0.0001 to 0.0301 in steps of 0.0050.
    std::vector<double> lambda_grid{0.0001, 0.0051, 0.0101, 0.0151,
                                    0.0201, 0.0251, 0.0301};

    /// `paper` follows the literal K-fold recipe: the held-out part both
    /// fits theta and scores it, with the first-power RKHS penalty. That
    /// in-sample risk is monotone in lambda and degenerates to the grid
    /// minimum, so the default is `standard`: theta fit on the complement,
    /// scored out-of-fold, no penalty term.
    enum class Mode { paper, standard };
    Mode mode = Mode::standard;

    int penalty_power = 1;  // exponent on ||theta||_H in paper mode

    /// Standard mode, when the reference measure is supplied: the theta^2
    /// term of the held-out risk is averaged over this many fresh mu draws
    /// instead of the fold's own b draws. Same estimand, much lower
    /// variance when mu concentrates away from the exposure tails.
    std::size_t mu_sq_draws = 2000;

    /// Standard-mode class guard: a candidate fit whose sup-norm exceeds
    /// max(sup_guard_floor, sup_guard_factor * sup|tau|) is scored +inf.
    /// The loss's orthogonality remainder is only controlled on a bounded
    /// function class, and unbounded fits game the held-out cross terms.
    /// Set sup_guard_factor <= 0 to disable.
    double sup_guard_floor = 2.0;
    double sup_guard_factor = 5.0;

    std::uint64_t seed = 0;

    /// Normalizes the grid (ascending, deduplicated) and checks invariants.
    void validate();
};

struct CVReport {
    Eigen::MatrixXd risks;  // folds x |grid|
    std::vector<double> lambda_grid;
    double chosen_lambda = 0.0;
};

/// Refits the nuisance tuple on an arbitrary subset of extended records;
/// the seed argument keeps per-fold refits deterministic.
using NuisanceFitter = std::function<NuisanceFit(
    std::span<const ExtendedRecord> records, std::uint64_t seed)>;

/// K-fold selection of the ridge penalty. Ties in the cross-validated risk
/// break toward the smallest lambda. `mu`, when given, enables the
/// fresh-draw theta^2 average in standard mode.
CVReport select_lambda(std::span<const ExtendedRecord> fold2,
                       const FusionConfig& fusion, EstimationMode mode_est,
                       const KernelSpec& kernel, CVConfig config,
                       const NuisanceFitter& nuisance_fitter,
                       const ReferenceMeasure* mu = nullptr);

/// The per-fold risk
///   (1/m) sum_i [ theta(b_i)^2 + 2 v_i theta(b_i) + 2 u_i theta(a_i) ]
///   (+ lambda ||theta||_H^power when penalized)
/// for a model fit on the same records the gram blocks were built from.
double fold_risk(const FittedCDRF& theta, const PseudoResiduals& residuals,
                 const GramBlocks& gram, double lambda, bool penalized,
                 int penalty_power = 1);

/// Same risk from explicit evaluations theta(b_i), theta(a_i).
double fold_risk_from_values(const Eigen::VectorXd& theta_at_b,
                             const Eigen::VectorXd& theta_at_a,
                             const PseudoResiduals& residuals,
                             double penalty_term = 0.0);

/// Argmin of the column means of a folds x |grid| risk matrix; ties break
/// toward the smallest lambda (the grid is ascending).
double choose_lambda_from_risks(const Eigen::MatrixXd& risks,
                                const std::vector<double>& lambda_grid);

}  // namespace cdrf
