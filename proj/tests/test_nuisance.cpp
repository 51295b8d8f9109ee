#include <doctest.h>

#include <cmath>

#include "cdrf/errors.hpp"
#include "cdrf/nuisance.hpp"
#include "cdrf/rng.hpp"

using namespace cdrf;

namespace {

Dataset records_with_sources(std::initializer_list<int> sources) {
    Dataset data;
    data.covariate_dim = 1;
    data.exposure_dim = 1;
    double x = 0.0;
    for (int s : sources) data.records.push_back({{x += 0.1}, {0.5}, 0.0, s});
    return data;
}

std::vector<ExtendedRecord> extend_plain(const Dataset& data) {
    std::vector<ExtendedRecord> out;
    double b = 0.0;
    for (const auto& rec : data.records)
        out.push_back({rec, {b += 0.05}});
    return out;
}

}  // namespace

TEST_CASE("source probability estimates") {
    const FusionConfig fusion{{1, 2}, {2, 3}};
    NuisanceBounds bounds;

    auto data = records_with_sources({1, 1, 2, 3});
    auto [xi, eta] =
        estimate_source_probs(data, fusion, EstimationMode::fused, bounds);
    CHECK(xi == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(eta == doctest::Approx(2.0).epsilon(1e-15));

    // full alignment: every record in the intersection
    auto aligned = records_with_sources({2, 2, 2});
    auto [xi2, eta2] =
        estimate_source_probs(aligned, FusionConfig{{2}, {2}},
                              EstimationMode::fused, bounds);
    CHECK(xi2 == 1.0);
    CHECK(eta2 == 1.0);

    // nonfused: one of four records in the intersection -> 4, capped
    auto [xi3, eta3] =
        estimate_source_probs(data, fusion, EstimationMode::nonfused, bounds);
    CHECK(xi3 == 4.0);
    CHECK(eta3 == 4.0);
    NuisanceBounds tight{50.0, 3.0, 3.5};
    auto [xi4, eta4] =
        estimate_source_probs(data, fusion, EstimationMode::nonfused, tight);
    CHECK(xi4 == 3.0);
    CHECK(eta4 == 3.5);

    auto no_y = records_with_sources({1, 1});
    CHECK_THROWS_WITH_AS(
        estimate_source_probs(no_y, fusion, EstimationMode::fused, bounds),
        doctest::Contains("empty source set"), DataError);
}

TEST_CASE("ratio training sets") {
    const FusionConfig fusion{{1, 2}, {2, 3}};
    auto data = records_with_sources({1, 2, 3, 3});
    auto ext = extend_plain(data);

    auto [num, den] =
        build_ratio_training_sets(ext, fusion, EstimationMode::fused);
    CHECK(num.rows() == 2);  // s in {1,2}
    CHECK(den.rows() == 3);  // s in {2,3}
    // numerator rows are (x, b); denominator rows are (x, a)
    CHECK(num(0, 1) == ext[0].b[0]);
    CHECK(den(0, 1) == 0.5);

    // all sources aligned: fused and nonfused coincide
    auto aligned = extend_plain(records_with_sources({2, 2, 2}));
    auto fused = build_ratio_training_sets(aligned, fusion, EstimationMode::fused);
    auto plain =
        build_ratio_training_sets(aligned, fusion, EstimationMode::nonfused);
    CHECK(fused.first == plain.first);
    CHECK(fused.second == plain.second);

    auto disjoint = extend_plain(records_with_sources({1, 3}));
    CHECK_THROWS_AS(
        build_ratio_training_sets(disjoint, FusionConfig{{1}, {3}},
                                  EstimationMode::nonfused),
        DataError);
}

TEST_CASE("ulsif solve: constant-basis closed form and truncation") {
    Eigen::MatrixXd h_matrix(1, 1);
    h_matrix << 1.0;
    Eigen::VectorXd h_vec(1);
    h_vec << 1.0;
    const auto alpha = ulsif_solve(h_matrix, h_vec, 0.0);
    CHECK(alpha(0) == doctest::Approx(1.0).epsilon(1e-15));

    // A solve with a negative coordinate gets truncated to zero.
    Eigen::MatrixXd h2(2, 2);
    h2 << 1.0, 0.0, 0.0, 1.0;
    Eigen::VectorXd v2(2);
    v2 << 0.5, -0.5;
    const auto alpha2 = ulsif_solve(h2, v2, 0.0);
    CHECK(alpha2(0) == doctest::Approx(0.5));
    CHECK(alpha2(1) == 0.0);
}

TEST_CASE("density ratio: tiny instance matches a hand-assembled solve") {
    Eigen::MatrixXd num(3, 2), den(3, 2);
    num << 0.1, 0.2, 0.4, 0.5, 0.9, 0.3;
    den << 0.2, 0.1, 0.5, 0.6, 0.7, 0.8;
    RatioFitConfig config;
    config.n_basis = 2;
    config.lambda_grid = {0.1};
    config.seed = 9;
    NuisanceBounds bounds;
    const auto model = fit_density_ratio(num, den, config, bounds);
    REQUIRE(model.basis_centers.rows() == 2);
    REQUIRE(model.alpha.size() == 2);

    // Hand-assemble H-hat and h-hat from the model's centers and bandwidth.
    auto basis = [&](const Eigen::Vector2d& z, Eigen::Index l) {
        const double d2 =
            (z - model.basis_centers.row(l).transpose()).squaredNorm();
        return std::exp(-d2 / (2.0 * model.basis_bandwidth * model.basis_bandwidth));
    };
    Eigen::Matrix2d h_matrix = Eigen::Matrix2d::Zero();
    Eigen::Vector2d h_vec = Eigen::Vector2d::Zero();
    for (int i = 0; i < 3; ++i) {
        Eigen::Vector2d zd = den.row(i).transpose();
        Eigen::Vector2d psi(basis(zd, 0), basis(zd, 1));
        h_matrix += psi * psi.transpose() / 3.0;
        Eigen::Vector2d zn = num.row(i).transpose();
        h_vec += Eigen::Vector2d(basis(zn, 0), basis(zn, 1)) / 3.0;
    }
    Eigen::Vector2d alpha_hand =
        (h_matrix + 0.1 * Eigen::Matrix2d::Identity()).ldlt().solve(h_vec);
    alpha_hand = alpha_hand.cwiseMax(0.0);
    CHECK(model.alpha(0) == doctest::Approx(alpha_hand(0)).epsilon(1e-10));
    CHECK(model.alpha(1) == doctest::Approx(alpha_hand(1)).epsilon(1e-10));
}

TEST_CASE("density ratio: self-ratio sanity") {
    // Numerator and denominator drawn from the same law: the fitted ratio
    // should hover around one on held-out points.
    Rng rng(31);
    auto draw = [&](Eigen::Index n) {
        Eigen::MatrixXd m(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            m(i, 0) = rng.normal();
            m(i, 1) = rng.uniform();
        }
        return m;
    };
    const auto num = draw(2000);
    const auto den = draw(2000);
    const auto held_out = draw(500);
    RatioFitConfig config;
    config.seed = 13;
    NuisanceBounds bounds;
    const auto model = fit_density_ratio(num, den, config, bounds);
    const double mean_w = model.eval_features(held_out).mean();
    CHECK(mean_w >= 0.8);
    CHECK(mean_w <= 1.2);
}

TEST_CASE("density ratio: clipping to [1/m_w, m_w]") {
    RatioModel model;
    model.clip_lo = 1.0 / 50.0;
    model.clip_hi = 50.0;
    model.analytic = [](const Eigen::VectorXd&, const Eigen::VectorXd&) {
        return 1e6;
    };
    Eigen::VectorXd x(1), a(1);
    x << 0.0;
    a << 0.5;
    CHECK(model.eval(x, a) == 50.0);
    model.analytic = [](const Eigen::VectorXd&, const Eigen::VectorXd&) {
        return 1e-6;
    };
    CHECK(model.eval(x, a) == doctest::Approx(0.02).epsilon(1e-15));
}

TEST_CASE("outcome regression: constant target shrinkage and tiny solve") {
    const FusionConfig fusion{{1}, {1}};
    Dataset data;
    data.covariate_dim = 1;
    data.exposure_dim = 1;
    for (int i = 0; i < 8; ++i)
        data.records.push_back(
            {{0.1 * i}, {0.1 + 0.1 * i}, 2.5, 1});  // constant outcome

    OutcomeFitConfig config;
    config.ridge_grid = {1e-9};
    config.seed = 3;
    const auto model =
        fit_outcome_regression(data, fusion, EstimationMode::fused, config);
    Eigen::VectorXd x(1), a(1);
    x << 0.35;
    a << 0.45;
    CHECK(model.eval(x, a) == doctest::Approx(2.5).epsilon(1e-5));

    // Shrinkage identity at a fixed ridge: prediction = k' (G + n*l*I)^{-1} y.
    OutcomeFitConfig fixed;
    fixed.ridge_grid = {0.2};
    fixed.seed = 3;
    const auto shrunk =
        fit_outcome_regression(data, fusion, EstimationMode::fused, fixed);
    const Eigen::MatrixXd gram_full =
        kernel_matrix(shrunk.kernel, shrunk.anchors, shrunk.anchors);
    Eigen::MatrixXd lhs =
        gram_full + 8 * 0.2 * Eigen::MatrixXd::Identity(8, 8);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(8, 2.5);
    const Eigen::VectorXd coef_hand = lhs.ldlt().solve(y);
    Eigen::MatrixXd q(1, 2);
    q << 0.35, 0.45;
    const double pred_hand =
        (kernel_matrix(shrunk.kernel, q, shrunk.anchors) * coef_hand)(0);
    CHECK(shrunk.eval(x, a) == doctest::Approx(pred_hand).epsilon(1e-6));

    // n = 2: coefficients match the hand 2x2 solve.
    Dataset two;
    two.covariate_dim = 1;
    two.exposure_dim = 1;
    two.records = {{{0.0}, {0.2}, 1.0, 1}, {{1.0}, {0.8}, -1.0, 1}};
    OutcomeFitConfig cfg2;
    cfg2.ridge_grid = {0.1};
    cfg2.bandwidth = 0.5;
    const auto tiny =
        fit_outcome_regression(two, fusion, EstimationMode::fused, cfg2);
    Eigen::Matrix2d g;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            g(i, j) = kernel_matrix(tiny.kernel, tiny.anchors, tiny.anchors)(i, j);
    Eigen::Vector2d y2(1.0, -1.0);
    const Eigen::Vector2d c_hand =
        (g + 2 * 0.1 * Eigen::Matrix2d::Identity()).ldlt().solve(y2);
    CHECK(tiny.coef(0) == doctest::Approx(c_hand(0)).epsilon(1e-12));
    CHECK(tiny.coef(1) == doctest::Approx(c_hand(1)).epsilon(1e-12));

    Dataset single;
    single.covariate_dim = 1;
    single.exposure_dim = 1;
    single.records = {{{0.0}, {0.2}, 1.0, 1}};
    CHECK_THROWS_AS(
        fit_outcome_regression(single, fusion, EstimationMode::fused, config),
        DataError);
}

TEST_CASE("tau: anchor averaging") {
    const FusionConfig fusion{{1}, {1}};
    Dataset fold1;
    fold1.covariate_dim = 1;
    fold1.exposure_dim = 1;
    fold1.records = {{{1.0}, {0.3}, 0.0, 1}, {{2.0}, {0.7}, 0.0, 1}};

    RegressionModel outcome;
    outcome.mode = EstimationMode::fused;
    outcome.analytic = [](const Eigen::VectorXd& x, const Eigen::VectorXd& a) {
        return 0.2 * x(0) * (a(0) > -1 ? 1.0 : 0.0);  // m(x,a) = 0.2 x
    };
    const auto tau = fit_tau(outcome, fold1, fusion, EstimationMode::fused);
    Eigen::VectorXd a(1);
    a << 0.5;
    // anchors give m-hat values 0.2 and 0.4, mean 0.3
    CHECK(tau.eval(a) == doctest::Approx(0.3).epsilon(1e-15));

    Dataset one;
    one.covariate_dim = 1;
    one.exposure_dim = 1;
    one.records = {{{1.5}, {0.3}, 0.0, 1}};
    const auto tau_one = fit_tau(outcome, one, fusion, EstimationMode::fused);
    CHECK(tau_one.eval(a) == doctest::Approx(0.3).epsilon(1e-15));

    // m-hat independent of x collapses tau to m-hat.
    RegressionModel flat;
    flat.mode = EstimationMode::fused;
    flat.analytic = [](const Eigen::VectorXd&, const Eigen::VectorXd& aa) {
        return std::sin(aa(0));
    };
    const auto tau_flat = fit_tau(flat, fold1, fusion, EstimationMode::fused);
    CHECK(tau_flat.eval(a) == doctest::Approx(std::sin(0.5)).epsilon(1e-15));

    Dataset no_x;
    no_x.covariate_dim = 1;
    no_x.exposure_dim = 1;
    no_x.records = {{{1.0}, {0.3}, 0.0, 7}};
    CHECK_THROWS_AS(fit_tau(outcome, no_x, fusion, EstimationMode::fused),
                    DataError);
}

TEST_CASE("tau: factorized form equals the plain average of KRR predictions") {
    const FusionConfig fusion{{1}, {1}};
    Rng rng(21);
    Dataset fold1;
    fold1.covariate_dim = 2;
    fold1.exposure_dim = 1;
    for (int i = 0; i < 30; ++i)
        fold1.records.push_back({{rng.normal(), rng.normal()},
                                 {rng.uniform()},
                                 rng.normal(),
                                 1});
    OutcomeFitConfig config;
    config.seed = 4;
    const auto outcome =
        fit_outcome_regression(fold1, fusion, EstimationMode::fused, config);
    const auto tau = fit_tau(outcome, fold1, fusion, EstimationMode::fused);

    for (double a_val : {0.05, 0.37, 0.93}) {
        Eigen::VectorXd a(1);
        a << a_val;
        double direct = 0.0;
        for (const auto& rec : fold1.records)
            direct += outcome.eval(to_vector(rec.x), a);
        direct /= static_cast<double>(fold1.records.size());
        CHECK(tau.eval(a) == doctest::Approx(direct).epsilon(1e-10));
    }

    // tau is linear in m-hat: scaling the coefficients scales tau.
    auto scaled = outcome;
    scaled.coef *= 3.0;
    const auto tau3 = fit_tau(scaled, fold1, fusion, EstimationMode::fused);
    Eigen::VectorXd a(1);
    a << 0.41;
    CHECK(tau3.eval(a) == doctest::Approx(3.0 * tau.eval(a)).epsilon(1e-12));
}

TEST_CASE("assemble_nuisance: mode checks and clipping wiring") {
    RatioModel ratio;
    ratio.mode = EstimationMode::fused;
    ratio.analytic = [](const Eigen::VectorXd&, const Eigen::VectorXd&) {
        return 1e6;
    };
    RegressionModel outcome;
    outcome.mode = EstimationMode::fused;
    outcome.analytic = [](const Eigen::VectorXd&, const Eigen::VectorXd&) {
        return 0.0;
    };
    TauModel tau;
    tau.mode = EstimationMode::fused;
    tau.analytic = [](const Eigen::VectorXd&) { return 0.0; };

    NuisanceBounds bounds;
    auto fit = assemble_nuisance(1.5, 2.0, ratio, outcome, tau,
                                 EstimationMode::fused, bounds);
    CHECK(fit.mode == EstimationMode::fused);
    Eigen::VectorXd x(1), a(1);
    x << 0.0;
    a << 0.5;
    CHECK(fit.ratio_at(x, a) == 50.0);  // clipped into [1/m_w, m_w]

    RatioModel wrong = ratio;
    wrong.mode = EstimationMode::nonfused;
    CHECK_THROWS_AS(assemble_nuisance(1.5, 2.0, wrong, outcome, tau,
                                      EstimationMode::fused, bounds),
                    DataError);
}

TEST_CASE("clip_mean clamps m and tau when enabled") {
    RatioModel ratio;
    ratio.mode = EstimationMode::fused;
    ratio.analytic = [](const Eigen::VectorXd&, const Eigen::VectorXd&) {
        return 1.0;
    };
    RegressionModel outcome;
    outcome.mode = EstimationMode::fused;
    outcome.analytic = [](const Eigen::VectorXd&, const Eigen::VectorXd&) {
        return 3.7;
    };
    TauModel tau;
    tau.mode = EstimationMode::fused;
    tau.analytic = [](const Eigen::VectorXd&) { return -2.2; };

    auto fit = assemble_nuisance(1.0, 1.0, ratio, outcome, tau,
                                 EstimationMode::fused, NuisanceBounds{}, true);
    Eigen::VectorXd x(1), a(1);
    x << 0.0;
    a << 0.5;
    CHECK(fit.outcome_at(x, a) == 1.0);
    CHECK(fit.tau_at(a) == -1.0);
    fit.clip_mean = false;
    CHECK(fit.outcome_at(x, a) == 3.7);
}
