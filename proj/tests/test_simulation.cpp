#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cdrf/errors.hpp"
#include "cdrf/simulation.hpp"
#include "test_helpers.hpp"

using namespace cdrf;

TEST_CASE("true CDRF values") {
    const double phi_max = 1.0 / (0.25 * std::sqrt(2.0 * std::numbers::pi));
    CHECK(true_cdrf(CdrfFamily::gaussian, 0.5) ==
          doctest::Approx(phi_max - 1.0).epsilon(1e-12));
    CHECK(true_cdrf(CdrfFamily::gaussian, 0.5) ==
          doctest::Approx(0.5957691).epsilon(1e-6));
    CHECK(true_cdrf(CdrfFamily::trigonometric, 0.0) == 3.0);
    // boundary belongs to the right branch: 0.5 (0.5^4 + 1)
    CHECK(true_cdrf(CdrfFamily::discontinuous, 0.5) == doctest::Approx(0.53125));
    CHECK(true_cdrf(CdrfFamily::discontinuous, 0.49) ==
          doctest::Approx(std::sqrt(0.49) + 0.1).epsilon(1e-12));
    CHECK_THROWS_AS(true_cdrf(CdrfFamily::gaussian, 1.2), DataError);
}

TEST_CASE("misspecified CDRF values") {
    CHECK(misspecified_cdrf(CdrfFamily::gaussian, 1.0) ==
          doctest::Approx(0.2978845).epsilon(1e-6));
    CHECK(misspecified_cdrf(CdrfFamily::trigonometric, 0.0) == 0.5);
    CHECK(misspecified_cdrf(CdrfFamily::discontinuous, 0.3) ==
          doctest::Approx(0.1 * (std::cos(0.9) + 1.0)).epsilon(1e-12));
    CHECK(misspecified_cdrf(CdrfFamily::discontinuous, 0.3) ==
          doctest::Approx(0.1621610).epsilon(1e-6));
    CHECK(misspecified_cdrf(CdrfFamily::discontinuous, 0.29) ==
          doctest::Approx(std::sqrt(std::log1p(0.29))).epsilon(1e-12));
    CHECK_THROWS_AS(misspecified_cdrf(CdrfFamily::gaussian, -0.1), DataError);
}

TEST_CASE("source labels and scenario fusion sets") {
    CHECK(source_label(false, false) == 0);
    CHECK(source_label(false, true) == 1);
    CHECK(source_label(true, false) == 2);
    CHECK(source_label(true, true) == 3);
    const auto fusion = scenario_fusion();
    CHECK(fusion.sources_x == std::set<int>{2, 3});
    CHECK(fusion.sources_y == std::set<int>{1, 3});
    CHECK(fusion.intersection() == std::set<int>{3});
}

TEST_CASE("generate: determinism and source design") {
    const auto a = generate(CdrfFamily::gaussian, 200, 5);
    const auto b = generate(CdrfFamily::gaussian, 200, 5);
    REQUIRE(a.size() == 200);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.records[i].x == b.records[i].x);
        CHECK(a.records[i].a == b.records[i].a);
        CHECK(a.records[i].y == b.records[i].y);
        CHECK(a.records[i].s == b.records[i].s);
    }

    const auto big = generate(CdrfFamily::gaussian, 100000, 99);
    std::size_t s3 = 0;
    double rowsum_sx1 = 0.0;
    std::size_t n_sx1 = 0;
    std::array<double, 3> col_mean_sx1{0, 0, 0};
    for (const auto& rec : big.records) {
        if (rec.s == 3) ++s3;
        CHECK(rec.a[0] > 0.0);
        CHECK(rec.a[0] < 1.0);
        if (rec.s >= 2) {  // S_X = 1
            ++n_sx1;
            rowsum_sx1 += rec.x[0] + rec.x[1] + rec.x[2];
            for (int j = 0; j < 3; ++j) col_mean_sx1[j] += rec.x[j];
        }
    }
    const double frac3 = static_cast<double>(s3) / 100000.0;
    CHECK(frac3 >= 0.24);
    CHECK(frac3 <= 0.26);
    CHECK(std::abs(rowsum_sx1 / static_cast<double>(n_sx1) - 1.0) < 0.01);
    // column means within 3 standard errors of 1/3 (sd 0.3, ~50k draws)
    const double se = 0.3 / std::sqrt(static_cast<double>(n_sx1));
    for (int j = 0; j < 3; ++j)
        CHECK(std::abs(col_mean_sx1[j] / static_cast<double>(n_sx1) - 1.0 / 3.0) <
              3.0 * se);
}

TEST_CASE("oracle nuisances: design constants and closed forms") {
    const auto mu = ReferenceMeasure::uniform();
    const auto g0 = oracle_nuisance(CdrfFamily::gaussian, mu, 100000, 7);
    CHECK(g0.xi == 2.0);
    CHECK(g0.eta == 2.0);

    // m0(x, a) = theta0(a) <x, 1> exactly.
    Eigen::VectorXd x(3), a(1);
    x << 0.2, 0.5, 0.4;
    a << 0.3;
    CHECK(g0.outcome_at(x, a) ==
          doctest::Approx(true_cdrf(CdrfFamily::gaussian, 0.3) * 1.1)
              .epsilon(1e-12));

    // tau0(a) ~ theta0(a) within 0.02 at mc_size = 1e5.
    for (double av : {0.1, 0.5, 0.9}) {
        Eigen::VectorXd q(1);
        q << av;
        CHECK(std::abs(g0.tau_at(q) - true_cdrf(CdrfFamily::gaussian, av)) < 0.02);
    }

    // w0(x, a) under a uniform reference measure: the exposure factor is
    // 1 / Beta(c, c) density with c = 1 + 1/(1 + exp(<x,1>)).
    const double rowsum = x.sum();
    const double c = 1.0 + 1.0 / (1.0 + std::exp(rowsum));
    const double log_b = 2.0 * std::lgamma(c) - std::lgamma(2.0 * c);
    const double beta_pdf =
        std::exp((c - 1.0) * (std::log(0.3) + std::log1p(-0.3)) - log_b);
    // strip the covariate factor by taking the nonfused oracle
    const auto g0_plain = oracle_nuisance(CdrfFamily::gaussian, mu, 1000, 7,
                                          EstimationMode::nonfused);
    CHECK(g0_plain.xi == 4.0);
    CHECK(g0_plain.eta == 4.0);
    CHECK(g0_plain.ratio_at(x, a) == doctest::Approx(1.0 / beta_pdf).epsilon(1e-10));

    // fused w0 multiplies in the covariate-shift normal ratio, positive finite
    // across the exposure range.
    for (double av = 0.01; av <= 0.99; av += 0.07) {
        Eigen::VectorXd q(1);
        q << av;
        const double w = g0.ratio_at(x, q);
        CHECK(w > 0.0);
        CHECK(std::isfinite(w));
    }

    // Under Beta(5,5) the mu-density enters the numerator.
    const auto b55 = ReferenceMeasure::make_beta(5, 5);
    const auto g0_b = oracle_nuisance(CdrfFamily::gaussian, b55, 1000, 7,
                                      EstimationMode::nonfused);
    CHECK(g0_b.ratio_at(x, a) ==
          doctest::Approx(b55.density(0.3) / beta_pdf).epsilon(1e-10));
}

TEST_CASE("generate rejects n = 0; oracle rejects mc_size = 0") {
    CHECK_THROWS_AS(generate(CdrfFamily::gaussian, 0, 1), DataError);
    CHECK_THROWS_AS(
        oracle_nuisance(CdrfFamily::gaussian, ReferenceMeasure::uniform(), 0, 1),
        DataError);
}

TEST_CASE("family parsing") {
    CHECK(parse_family("gaussian") == CdrfFamily::gaussian);
    CHECK(parse_family("trigonometric") == CdrfFamily::trigonometric);
    CHECK(parse_family("discontinuous") == CdrfFamily::discontinuous);
    CHECK_THROWS_AS(parse_family("linear"), UsageError);
}
