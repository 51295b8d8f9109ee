#include "cdrf/cross_validation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cdrf/errors.hpp"
#include "cdrf/rng.hpp"

namespace cdrf {

void CVConfig::validate() {
    if (folds < 2) throw DataError("cv: need at least 2 folds");
    if (lambda_grid.empty()) throw DataError("cv: empty lambda grid");
    for (double l : lambda_grid)
        if (!(l > 0.0) || !std::isfinite(l))
            throw DataError("cv: lambda grid entries must be positive");
    std::sort(lambda_grid.begin(), lambda_grid.end());
    lambda_grid.erase(std::unique(lambda_grid.begin(), lambda_grid.end()),
                      lambda_grid.end());
    if (penalty_power != 1 && penalty_power != 2)
        throw DataError("cv: penalty_power must be 1 or 2");
}

double fold_risk_from_values(const Eigen::VectorXd& theta_at_b,
                             const Eigen::VectorXd& theta_at_a,
                             const PseudoResiduals& residuals,
                             double penalty_term) {
    const Eigen::Index m = residuals.u.size();
    if (theta_at_b.size() != m || theta_at_a.size() != m ||
        residuals.v.size() != m)
        throw DataError("fold_risk: inconsistent dimensions");
    const double mean =
        (theta_at_b.array().square() +
         2.0 * residuals.v.array() * theta_at_b.array() +
         2.0 * residuals.u.array() * theta_at_a.array())
            .sum() /
        static_cast<double>(m);
    return mean + penalty_term;
}

double fold_risk(const FittedCDRF& theta, const PseudoResiduals& residuals,
                 const GramBlocks& gram, double lambda, bool penalized,
                 int penalty_power) {
    const Eigen::Index m = gram.n2();
    if (theta.n2() != m)
        throw DataError("fold_risk: model and gram sizes disagree");
    const double root_m = std::sqrt(static_cast<double>(m));
    // theta at the fold's own points, through the scaled gram blocks.
    const Eigen::VectorXd theta_b =
        root_m * (gram.k21 * theta.beta + gram.k22 * theta.gamma);
    const Eigen::VectorXd theta_a =
        root_m * (gram.k11 * theta.beta + gram.k12 * theta.gamma);
    double penalty = 0.0;
    if (penalized) {
        const double norm = rkhs_norm(theta, gram);
        penalty = lambda * (penalty_power == 2 ? norm * norm : norm);
    }
    return fold_risk_from_values(theta_b, theta_a, residuals, penalty);
}

namespace {

std::vector<std::vector<std::size_t>> make_folds(std::size_t n, int k,
                                                 std::uint64_t seed) {
    Rng rng(seed);
    auto order = rng.shuffled_indices(n);
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
    const std::size_t base = n / static_cast<std::size_t>(k);
    const std::size_t extra = n % static_cast<std::size_t>(k);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        folds[f].assign(order.begin() + pos, order.begin() + pos + size);
        std::sort(folds[f].begin(), folds[f].end());
        pos += size;
    }
    return folds;
}

std::vector<ExtendedRecord> gather(std::span<const ExtendedRecord> records,
                                   const std::vector<std::size_t>& idx) {
    std::vector<ExtendedRecord> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(records[i]);
    return out;
}

}  // namespace

CVReport select_lambda(std::span<const ExtendedRecord> fold2,
                       const FusionConfig& fusion, EstimationMode mode_est,
                       const KernelSpec& kernel, CVConfig config,
                       const NuisanceFitter& nuisance_fitter,
                       const ReferenceMeasure* mu) {
    config.validate();
    const std::size_t n = fold2.size();
    if (n < 2 * static_cast<std::size_t>(config.folds))
        throw DataError("cv: fold2 must hold at least 2K records");

    const auto folds = make_folds(n, config.folds, config.seed);
    const auto grid_size = config.lambda_grid.size();

    Eigen::MatrixXd mu_points;
    if (mu != nullptr && config.mode == CVConfig::Mode::standard &&
        config.mu_sq_draws > 0) {
        const auto draws =
            mu->sample(config.mu_sq_draws, derive_seed(config.seed, "cv_mu"));
        mu_points.resize(static_cast<Eigen::Index>(draws.size()), 1);
        for (std::size_t i = 0; i < draws.size(); ++i)
            mu_points(static_cast<Eigen::Index>(i), 0) = draws[i];
    }

    CVReport report;
    report.lambda_grid = config.lambda_grid;
    report.risks.resize(config.folds, static_cast<Eigen::Index>(grid_size));

    for (int k = 0; k < config.folds; ++k) {
        std::vector<std::size_t> complement_idx;
        for (int g = 0; g < config.folds; ++g)
            if (g != k)
                complement_idx.insert(complement_idx.end(),
                                      folds[static_cast<std::size_t>(g)].begin(),
                                      folds[static_cast<std::size_t>(g)].end());
        std::sort(complement_idx.begin(), complement_idx.end());

        const auto held_out = gather(fold2, folds[static_cast<std::size_t>(k)]);
        const auto complement = gather(fold2, complement_idx);

        const NuisanceFit nf = nuisance_fitter(
            complement, derive_seed(config.seed, "cv_fold",
                                    static_cast<std::uint64_t>(k)));

        if (config.mode == CVConfig::Mode::paper) {
            const auto res = pseudo_residuals(nf, held_out, fusion, mode_est);
            const auto blocks = gram(kernel, exposure_matrix(held_out, false),
                                     exposure_matrix(held_out, true));
            for (std::size_t l = 0; l < grid_size; ++l) {
                const double lambda = config.lambda_grid[l];
                const auto model = fit_closed_form(
                    res, blocks, lambda, exposure_matrix(held_out, false),
                    exposure_matrix(held_out, true), kernel);
                report.risks(k, static_cast<Eigen::Index>(l)) = fold_risk(
                    model, res, blocks, lambda, true, config.penalty_power);
            }
        } else {
            const auto res_fit = pseudo_residuals(nf, complement, fusion, mode_est);
            const auto blocks_fit =
                gram(kernel, exposure_matrix(complement, false),
                     exposure_matrix(complement, true));
            const auto res_test = pseudo_residuals(nf, held_out, fusion, mode_est);
            const Eigen::MatrixXd test_a = exposure_matrix(held_out, false);
            const Eigen::MatrixXd test_b = exposure_matrix(held_out, true);

            // Guard points: a uniform grid (1-d exposures) plus the fold's
            // own points; guard level from the plug-in tau scale.
            Eigen::MatrixXd guard_points;
            double guard_level = 0.0;
            if (config.sup_guard_factor > 0.0) {
                const Eigen::Index d = test_a.cols();
                const Eigen::Index grid_rows = d == 1 ? 201 : 0;
                guard_points.resize(grid_rows + test_a.rows() + test_b.rows(), d);
                for (Eigen::Index i = 0; i < grid_rows; ++i)
                    guard_points(i, 0) = static_cast<double>(i) / 200.0;
                guard_points.middleRows(grid_rows, test_a.rows()) = test_a;
                guard_points.bottomRows(test_b.rows()) = test_b;
                double tau_sup = 0.0;
                for (Eigen::Index i = 0; i < guard_points.rows(); ++i)
                    tau_sup = std::max(
                        tau_sup, std::abs(nf.tau_at(guard_points.row(i).transpose())));
                guard_level =
                    std::max(config.sup_guard_floor, config.sup_guard_factor * tau_sup);
            }

            for (std::size_t l = 0; l < grid_size; ++l) {
                const double lambda = config.lambda_grid[l];
                const auto model = fit_closed_form(
                    res_fit, blocks_fit, lambda, exposure_matrix(complement, false),
                    exposure_matrix(complement, true), kernel);
                if (guard_level > 0.0 &&
                    model.predict_points(guard_points).cwiseAbs().maxCoeff() >
                        guard_level) {
                    report.risks(k, static_cast<Eigen::Index>(l)) =
                        std::numeric_limits<double>::infinity();
                    continue;
                }
                const Eigen::VectorXd theta_b = model.predict_points(test_b);
                const Eigen::VectorXd theta_a = model.predict_points(test_a);
                double risk = fold_risk_from_values(theta_b, theta_a, res_test);
                if (mu_points.rows() > 0) {
                    // Swap the fold's theta(b)^2 average for the fresh-draw
                    // estimate of E_mu[theta^2]; the u/v cross terms keep
                    // their pairing with the fold's records.
                    risk += model.predict_points(mu_points).squaredNorm() /
                                static_cast<double>(mu_points.rows()) -
                            theta_b.squaredNorm() /
                                static_cast<double>(theta_b.size());
                }
                report.risks(k, static_cast<Eigen::Index>(l)) = risk;
            }
        }
    }

    report.chosen_lambda =
        choose_lambda_from_risks(report.risks, config.lambda_grid);
    return report;
}

double choose_lambda_from_risks(const Eigen::MatrixXd& risks,
                                const std::vector<double>& lambda_grid) {
    if (lambda_grid.empty() ||
        risks.cols() != static_cast<Eigen::Index>(lambda_grid.size()))
        throw DataError("choose_lambda: grid and risk matrix sizes disagree");
    // Strict comparison keeps the smallest lambda on ties (ascending grid).
    const Eigen::VectorXd means = risks.colwise().mean().transpose();
    Eigen::Index best = 0;
    for (Eigen::Index l = 1; l < means.size(); ++l)
        if (means(l) < means(best)) best = l;
    return lambda_grid[static_cast<std::size_t>(best)];
}

}  // namespace cdrf
