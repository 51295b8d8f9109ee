#include "cdrf/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cdrf/errors.hpp"
#include "cdrf/rng.hpp"

namespace cdrf {

void NuisanceBounds::validate() const {
    if (!(m_w >= 1.0) || !(m_xi >= 1.0) || !(m_eta >= 1.0))
        throw DataError("nuisance bounds must all be >= 1");
}

Eigen::VectorXd to_vector(std::span<const double> values) {
    return Eigen::Map<const Eigen::VectorXd>(values.data(),
                                             static_cast<Eigen::Index>(values.size()));
}

Eigen::VectorXd feature_row(const Eigen::VectorXd& x, const Eigen::VectorXd& a) {
    Eigen::VectorXd row(x.size() + a.size());
    row << x, a;
    return row;
}

Eigen::MatrixXd exposure_matrix(std::span<const ExtendedRecord> records,
                                bool use_b) {
    if (records.empty()) return {};
    const auto d = static_cast<Eigen::Index>(records[0].base.a.size());
    Eigen::MatrixXd out(static_cast<Eigen::Index>(records.size()), d);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const auto& src = use_b ? records[static_cast<std::size_t>(i)].b
                                : records[static_cast<std::size_t>(i)].base.a;
        for (Eigen::Index j = 0; j < d; ++j) out(i, j) = src[j];
    }
    return out;
}

namespace {

Eigen::MatrixXd feature_matrix(std::span<const ExtendedRecord> records,
                               bool use_b) {
    if (records.empty()) return {};
    const auto r = static_cast<Eigen::Index>(records[0].base.x.size());
    const auto d = static_cast<Eigen::Index>(records[0].base.a.size());
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(records.size()), r + d);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        const auto& rec = records[static_cast<std::size_t>(i)];
        const auto& exposure = use_b ? rec.b : rec.base.a;
        for (Eigen::Index j = 0; j < r; ++j) rows(i, j) = rec.base.x[j];
        for (Eigen::Index j = 0; j < d; ++j) rows(i, r + j) = exposure[j];
    }
    return rows;
}

bool qualifies(int s, const FusionConfig& fusion, EstimationMode mode,
               bool x_side) {
    if (mode == EstimationMode::nonfused) return fusion.in_intersection(s);
    return x_side ? fusion.in_x(s) : fusion.in_y(s);
}

Eigen::MatrixXd gaussian_basis(const Eigen::MatrixXd& features,
                               const Eigen::MatrixXd& centers,
                               double bandwidth) {
    KernelSpec basis{KernelSpec::Family::gaussian, bandwidth};
    return kernel_matrix(basis, features, centers);
}

std::vector<std::vector<Eigen::Index>> fold_assignment(Eigen::Index n,
                                                       int folds,
                                                       std::uint64_t seed) {
    const int k = std::max(2, std::min<int>(folds, static_cast<int>(n)));
    Rng rng(seed);
    auto order = rng.shuffled_indices(static_cast<std::size_t>(n));
    std::vector<std::vector<Eigen::Index>> assignment(k);
    const Eigen::Index base = n / k, extra = n % k;
    std::size_t pos = 0;
    for (int f = 0; f < k; ++f) {
        const Eigen::Index size = base + (f < extra ? 1 : 0);
        for (Eigen::Index i = 0; i < size; ++i)
            assignment[f].push_back(static_cast<Eigen::Index>(order[pos++]));
        std::sort(assignment[f].begin(), assignment[f].end());
    }
    return assignment;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m,
                          const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        out.row(i) = m.row(idx[static_cast<std::size_t>(i)]);
    return out;
}

}  // namespace

double RatioModel::eval(const Eigen::VectorXd& x, const Eigen::VectorXd& a) const {
    double value;
    if (analytic) {
        value = analytic(x, a);
    } else {
        const Eigen::VectorXd f = feature_row(x, a);
        KernelSpec basis{KernelSpec::Family::gaussian, basis_bandwidth};
        double acc = 0.0;
        for (Eigen::Index l = 0; l < basis_centers.rows(); ++l) {
            const Eigen::VectorXd c = basis_centers.row(l).transpose();
            acc += alpha(l) * basis(std::span(f.data(), static_cast<std::size_t>(f.size())),
                                    std::span(c.data(), static_cast<std::size_t>(c.size())));
        }
        value = acc;
    }
    return std::clamp(value, clip_lo, clip_hi);
}

Eigen::VectorXd RatioModel::eval_features(const Eigen::MatrixXd& features) const {
    if (analytic)
        throw NumericError(
            "RatioModel::eval_features is unavailable for analytic models");
    Eigen::VectorXd values =
        gaussian_basis(features, basis_centers, basis_bandwidth) * alpha;
    for (Eigen::Index i = 0; i < values.size(); ++i)
        values(i) = std::clamp(values(i), clip_lo, clip_hi);
    return values;
}

double RegressionModel::eval(const Eigen::VectorXd& x,
                             const Eigen::VectorXd& a) const {
    if (analytic) return analytic(x, a);
    const Eigen::VectorXd f = feature_row(x, a);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < anchors.rows(); ++j) {
        const Eigen::VectorXd t = anchors.row(j).transpose();
        acc += coef(j) * kernel(std::span(f.data(), static_cast<std::size_t>(f.size())),
                                std::span(t.data(), static_cast<std::size_t>(t.size())));
    }
    return acc;
}

Eigen::VectorXd RegressionModel::eval_features(const Eigen::MatrixXd& features) const {
    if (analytic)
        throw NumericError(
            "RegressionModel::eval_features is unavailable for analytic models");
    return kernel_matrix(kernel, features, anchors) * coef;
}

double TauModel::eval(const Eigen::VectorXd& a) const {
    if (analytic) return analytic(a);
    if (reduced_coef.size() == 0)
        throw NumericError("TauModel: no fitted representation");
    double acc = 0.0;
    for (Eigen::Index j = 0; j < exposure_anchors.rows(); ++j) {
        const Eigen::VectorXd t = exposure_anchors.row(j).transpose();
        acc += reduced_coef(j) *
               outcome.kernel(std::span(a.data(), static_cast<std::size_t>(a.size())),
                              std::span(t.data(), static_cast<std::size_t>(t.size())));
    }
    return acc;
}

Eigen::VectorXd TauModel::eval_points(const Eigen::MatrixXd& points) const {
    if (analytic) {
        Eigen::VectorXd values(points.rows());
        for (Eigen::Index i = 0; i < points.rows(); ++i)
            values(i) = analytic(points.row(i).transpose());
        return values;
    }
    return kernel_matrix(outcome.kernel, points, exposure_anchors) * reduced_coef;
}

double NuisanceFit::ratio_at(const Eigen::VectorXd& x,
                             const Eigen::VectorXd& a) const {
    return ratio.eval(x, a);
}

double NuisanceFit::outcome_at(const Eigen::VectorXd& x,
                               const Eigen::VectorXd& a) const {
    const double m = outcome.eval(x, a);
    return clip_mean ? std::clamp(m, -1.0, 1.0) : m;
}

double NuisanceFit::tau_at(const Eigen::VectorXd& a) const {
    const double t = tau.eval(a);
    return clip_mean ? std::clamp(t, -1.0, 1.0) : t;
}

std::pair<double, double> estimate_source_probs(const Dataset& data,
                                                const FusionConfig& fusion,
                                                EstimationMode mode,
                                                const NuisanceBounds& bounds) {
    bounds.validate();
    fusion.validate(mode);
    if (data.records.empty()) throw DataError("empty dataset");

    const auto n = static_cast<double>(data.size());
    std::size_t count_x = 0, count_y = 0, count_both = 0;
    for (const auto& rec : data.records) {
        if (fusion.in_x(rec.s)) ++count_x;
        if (fusion.in_y(rec.s)) ++count_y;
        if (fusion.in_intersection(rec.s)) ++count_both;
    }

    if (mode == EstimationMode::nonfused) {
        if (count_both == 0) throw DataError("empty source set");
        const double inv = n / static_cast<double>(count_both);
        return {std::min(inv, bounds.m_xi), std::min(inv, bounds.m_eta)};
    }
    if (count_x == 0 || count_y == 0) throw DataError("empty source set");
    return {std::min(n / static_cast<double>(count_x), bounds.m_xi),
            std::min(n / static_cast<double>(count_y), bounds.m_eta)};
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> build_ratio_training_sets(
    std::span<const ExtendedRecord> fold1, const FusionConfig& fusion,
    EstimationMode mode) {
    std::vector<ExtendedRecord> num, den;
    for (const auto& rec : fold1) {
        if (qualifies(rec.base.s, fusion, mode, /*x_side=*/true))
            num.push_back(rec);
        if (qualifies(rec.base.s, fusion, mode, /*x_side=*/false))
            den.push_back(rec);
    }
    if (num.empty() || den.empty())
        throw DataError("empty source set for density-ratio training");
    return {feature_matrix(num, /*use_b=*/true),
            feature_matrix(den, /*use_b=*/false)};
}

Eigen::VectorXd ulsif_solve(const Eigen::MatrixXd& h_matrix,
                            const Eigen::VectorXd& h_vector, double lambda) {
    Eigen::MatrixXd lhs = h_matrix;
    lhs.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(lhs);
    Eigen::VectorXd alpha;
    if (llt.info() == Eigen::Success) {
        alpha = llt.solve(h_vector);
    } else {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(lhs);
        if (ldlt.info() != Eigen::Success)
            throw NumericError("ulsif_solve: singular system");
        alpha = ldlt.solve(h_vector);
    }
    if (!alpha.allFinite()) throw NumericError("ulsif_solve: singular system");
    return alpha.cwiseMax(0.0);
}

RatioModel fit_density_ratio(const Eigen::MatrixXd& numerator,
                             const Eigen::MatrixXd& denominator,
                             const RatioFitConfig& config,
                             const NuisanceBounds& bounds) {
    bounds.validate();
    if (numerator.rows() == 0 || denominator.rows() == 0)
        throw DataError("density ratio: both sample sets must be nonempty");
    if (numerator.cols() != denominator.cols())
        throw DataError("density ratio: feature dimensions disagree");
    if (config.lambda_grid.empty())
        throw DataError("density ratio: empty lambda grid");

    const Eigen::Index n_num = numerator.rows();
    const Eigen::Index n_den = denominator.rows();
    const Eigen::Index n_basis =
        std::min<Eigen::Index>(std::max(config.n_basis, 1), n_num);

    // Centers: the numerator points themselves, subsampled when over budget.
    Eigen::MatrixXd centers;
    if (n_basis == n_num) {
        centers = numerator;
    } else {
        Rng rng(derive_seed(config.seed, "ulsif_centers"));
        auto order = rng.shuffled_indices(static_cast<std::size_t>(n_num));
        std::vector<Eigen::Index> pick(order.begin(), order.begin() + n_basis);
        std::sort(pick.begin(), pick.end());
        centers = take_rows(numerator, pick);
    }

    Eigen::MatrixXd pooled(n_num + n_den, numerator.cols());
    pooled << numerator, denominator;
    const double bandwidth =
        median_heuristic(pooled, KernelSpec::Family::gaussian);

    const Eigen::MatrixXd psi_num = gaussian_basis(numerator, centers, bandwidth);
    const Eigen::MatrixXd psi_den = gaussian_basis(denominator, centers, bandwidth);

    auto mean_outer = [](const Eigen::MatrixXd& psi) -> Eigen::MatrixXd {
        return psi.transpose() * psi / static_cast<double>(psi.rows());
    };
    auto mean_rows = [](const Eigen::MatrixXd& psi) -> Eigen::VectorXd {
        return psi.colwise().mean().transpose();
    };

    double chosen = config.lambda_grid.front();
    if (config.lambda_grid.size() > 1) {
        const auto num_folds = fold_assignment(
            n_num, config.cv_folds, derive_seed(config.seed, "ulsif_cv_num"));
        const auto den_folds = fold_assignment(
            n_den, config.cv_folds, derive_seed(config.seed, "ulsif_cv_den"));
        const std::size_t k = std::min(num_folds.size(), den_folds.size());

        std::vector<double> score(config.lambda_grid.size(), 0.0);
        std::size_t used = 0;
        for (std::size_t f = 0; f < k; ++f) {
            std::vector<Eigen::Index> num_tr, den_tr;
            for (std::size_t g = 0; g < k; ++g) {
                if (g == f) continue;
                num_tr.insert(num_tr.end(), num_folds[g].begin(), num_folds[g].end());
                den_tr.insert(den_tr.end(), den_folds[g].begin(), den_folds[g].end());
            }
            if (num_tr.empty() || den_tr.empty() || num_folds[f].empty() ||
                den_folds[f].empty())
                continue;
            auto h_tr = mean_outer(take_rows(psi_den, den_tr));
            Eigen::VectorXd hv_tr = mean_rows(take_rows(psi_num, num_tr));
            auto h_te = mean_outer(take_rows(psi_den, den_folds[f]));
            Eigen::VectorXd hv_te = mean_rows(take_rows(psi_num, num_folds[f]));
            bool any = false;
            for (std::size_t l = 0; l < config.lambda_grid.size(); ++l) {
                try {
                    Eigen::VectorXd alpha =
                        ulsif_solve(h_tr, hv_tr, config.lambda_grid[l]);
                    score[l] += 0.5 * alpha.dot(h_te * alpha) - hv_te.dot(alpha);
                    any = true;
                } catch (const NumericError&) {
                    score[l] += std::numeric_limits<double>::infinity();
                }
            }
            if (any) ++used;
        }
        if (used > 0) {
            std::size_t best = 0;
            for (std::size_t l = 1; l < score.size(); ++l)
                if (score[l] < score[best]) best = l;
            if (std::isfinite(score[best])) chosen = config.lambda_grid[best];
        }
    }

    const Eigen::MatrixXd h_hat = mean_outer(psi_den);
    const Eigen::VectorXd h_vec = mean_rows(psi_num);

    Eigen::VectorXd alpha;
    bool solved = false;
    std::size_t fallback = 0;
    double lambda = chosen;
    while (!solved) {
        try {
            alpha = ulsif_solve(h_hat, h_vec, lambda);
            solved = true;
        } catch (const NumericError&) {
            if (fallback >= config.lambda_grid.size())
                throw NumericError(
                    "density ratio: singular system for every lambda in grid");
            lambda = config.lambda_grid[fallback++];
        }
    }

    RatioModel model;
    model.basis_centers = std::move(centers);
    model.basis_bandwidth = bandwidth;
    model.alpha = std::move(alpha);
    model.clip_lo = 1.0 / bounds.m_w;
    model.clip_hi = bounds.m_w;
    return model;
}

RegressionModel fit_outcome_regression(const Dataset& fold1,
                                       const FusionConfig& fusion,
                                       EstimationMode mode,
                                       const OutcomeFitConfig& config) {
    fusion.validate(mode);
    if (config.ridge_grid.empty())
        throw DataError("outcome regression: empty ridge grid");

    std::vector<const SampleRecord*> train;
    for (const auto& rec : fold1.records)
        if (qualifies(rec.s, fusion, mode, /*x_side=*/false)) train.push_back(&rec);
    if (train.size() < 2)
        throw DataError("outcome regression: fewer than 2 qualifying records");

    const auto n = static_cast<Eigen::Index>(train.size());
    const Eigen::Index p = static_cast<Eigen::Index>(train[0]->x.size() +
                                                     train[0]->a.size());
    Eigen::MatrixXd features(n, p);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto* rec = train[static_cast<std::size_t>(i)];
        Eigen::Index c = 0;
        for (double v : rec->x) features(i, c++) = v;
        for (double v : rec->a) features(i, c++) = v;
        y(i) = rec->y;
    }

    KernelSpec kernel{config.kernel_family, config.bandwidth};
    if (config.bandwidth <= 0.0)
        kernel.bandwidth = median_heuristic(features, config.kernel_family);

    const Eigen::MatrixXd gram_full = kernel_matrix(kernel, features, features);
    auto solve_krr = [](const Eigen::MatrixXd& g, const Eigen::VectorXd& targets,
                        double lambda) -> Eigen::VectorXd {
        Eigen::MatrixXd lhs = g;
        lhs.diagonal().array() += static_cast<double>(g.rows()) * lambda;
        Eigen::LLT<Eigen::MatrixXd> llt(lhs);
        if (llt.info() != Eigen::Success)
            throw NumericError("outcome regression: factorization failed");
        return llt.solve(targets);
    };

    double chosen = config.ridge_grid.front();
    if (config.ridge_grid.size() > 1 && n >= 4) {
        const auto folds = fold_assignment(n, config.cv_folds,
                                           derive_seed(config.seed, "krr_cv"));
        std::vector<double> score(config.ridge_grid.size(), 0.0);
        for (const auto& test_idx : folds) {
            std::vector<Eigen::Index> train_idx;
            std::vector<bool> is_test(static_cast<std::size_t>(n), false);
            for (auto i : test_idx) is_test[static_cast<std::size_t>(i)] = true;
            for (Eigen::Index i = 0; i < n; ++i)
                if (!is_test[static_cast<std::size_t>(i)]) train_idx.push_back(i);
            if (train_idx.empty() || test_idx.empty()) continue;

            Eigen::MatrixXd g_tr(static_cast<Eigen::Index>(train_idx.size()),
                                 static_cast<Eigen::Index>(train_idx.size()));
            for (Eigen::Index i = 0; i < g_tr.rows(); ++i)
                for (Eigen::Index j = 0; j < g_tr.cols(); ++j)
                    g_tr(i, j) = gram_full(train_idx[static_cast<std::size_t>(i)],
                                           train_idx[static_cast<std::size_t>(j)]);
            Eigen::MatrixXd g_te(static_cast<Eigen::Index>(test_idx.size()),
                                 static_cast<Eigen::Index>(train_idx.size()));
            for (Eigen::Index i = 0; i < g_te.rows(); ++i)
                for (Eigen::Index j = 0; j < g_te.cols(); ++j)
                    g_te(i, j) = gram_full(test_idx[static_cast<std::size_t>(i)],
                                           train_idx[static_cast<std::size_t>(j)]);
            Eigen::VectorXd y_tr(g_tr.rows()), y_te(g_te.rows());
            for (Eigen::Index i = 0; i < y_tr.size(); ++i)
                y_tr(i) = y(train_idx[static_cast<std::size_t>(i)]);
            for (Eigen::Index i = 0; i < y_te.size(); ++i)
                y_te(i) = y(test_idx[static_cast<std::size_t>(i)]);

            for (std::size_t l = 0; l < config.ridge_grid.size(); ++l) {
                Eigen::VectorXd c = solve_krr(g_tr, y_tr, config.ridge_grid[l]);
                score[l] += (g_te * c - y_te).squaredNorm();
            }
        }
        std::size_t best = 0;
        for (std::size_t l = 1; l < score.size(); ++l)
            if (score[l] < score[best]) best = l;
        chosen = config.ridge_grid[best];
    }

    RegressionModel model;
    model.kernel = kernel;
    model.ridge = chosen;
    model.anchors = std::move(features);
    model.coef = solve_krr(gram_full, y, chosen);
    model.mode = mode;
    return model;
}

TauModel fit_tau(const RegressionModel& outcome, const Dataset& fold1,
                 const FusionConfig& fusion, EstimationMode mode) {
    std::vector<const SampleRecord*> rows;
    for (const auto& rec : fold1.records)
        if (qualifies(rec.s, fusion, mode, /*x_side=*/true)) rows.push_back(&rec);
    if (rows.empty()) throw DataError("empty source set for tau anchors");

    const auto j_count = static_cast<Eigen::Index>(rows.size());
    const auto r = static_cast<Eigen::Index>(rows[0]->x.size());
    Eigen::MatrixXd x_anchors(j_count, r);
    for (Eigen::Index i = 0; i < j_count; ++i)
        for (Eigen::Index c = 0; c < r; ++c)
            x_anchors(i, c) = rows[static_cast<std::size_t>(i)]->x[c];

    TauModel model;
    model.outcome = outcome;
    model.x_anchors = std::move(x_anchors);
    model.mode = mode;

    if (outcome.analytic) {
        // Analytic outcome models (oracles) keep the plain average.
        const RegressionModel m = outcome;
        const Eigen::MatrixXd anchors = model.x_anchors;
        model.analytic = [m, anchors](const Eigen::VectorXd& a) {
            double acc = 0.0;
            for (Eigen::Index j = 0; j < anchors.rows(); ++j)
                acc += m.eval(anchors.row(j).transpose(), a);
            return acc / static_cast<double>(anchors.rows());
        };
        return model;
    }

    // The kernel factorizes across the (x, a) blocks, so
    //   mean_j m(x_j, a) = sum_t [coef_t * mean_j Kx(x_j, x_t)] * Ka(a, a_t).
    const Eigen::Index p = outcome.anchors.cols();
    const Eigen::Index d = p - r;
    if (d < 1) throw DataError("fit_tau: outcome anchors narrower than x");
    const Eigen::MatrixXd anchor_x = outcome.anchors.leftCols(r);
    model.exposure_anchors = outcome.anchors.rightCols(d);
    const Eigen::MatrixXd kx =
        kernel_matrix(outcome.kernel, model.x_anchors, anchor_x);
    const Eigen::VectorXd x_weight = kx.colwise().mean().transpose();
    model.reduced_coef = outcome.coef.cwiseProduct(x_weight);
    return model;
}

NuisanceFit assemble_nuisance(double xi, double eta, RatioModel ratio,
                              RegressionModel outcome, TauModel tau,
                              EstimationMode mode, const NuisanceBounds& bounds,
                              bool clip_mean) {
    bounds.validate();
    if (ratio.mode != mode || outcome.mode != mode || tau.mode != mode)
        throw DataError("assemble_nuisance: parts were fit under different modes");
    if (!(xi >= 1.0) || !(eta >= 1.0))
        throw DataError("assemble_nuisance: xi and eta must be >= 1");
    NuisanceFit fit;
    fit.xi = xi;
    fit.eta = eta;
    fit.ratio = std::move(ratio);
    fit.outcome = std::move(outcome);
    fit.tau = std::move(tau);
    fit.mode = mode;
    fit.bounds = bounds;
    fit.clip_mean = clip_mean;
    fit.ratio.clip_lo = 1.0 / bounds.m_w;
    fit.ratio.clip_hi = bounds.m_w;
    return fit;
}

}  // namespace cdrf
