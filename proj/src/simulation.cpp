#include "cdrf/simulation.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "cdrf/errors.hpp"
#include "cdrf/rng.hpp"

namespace cdrf {

std::string to_string(CdrfFamily family) {
    switch (family) {
        case CdrfFamily::gaussian: return "gaussian";
        case CdrfFamily::trigonometric: return "trigonometric";
        case CdrfFamily::discontinuous: return "discontinuous";
    }
    return "gaussian";
}

CdrfFamily parse_family(std::string_view text) {
    if (text == "gaussian") return CdrfFamily::gaussian;
    if (text == "trigonometric") return CdrfFamily::trigonometric;
    if (text == "discontinuous") return CdrfFamily::discontinuous;
    throw UsageError("unrecognized CDRF family: '" + std::string(text) + "'");
}

namespace {

double gaussian_pdf(double a, double mean, double sd) {
    const double z = (a - mean) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

void check_domain(double a) {
    if (!(a >= 0.0 && a <= 1.0))
        throw DataError("CDRF evaluation: exposure outside [0,1]");
}

// Design constants.
const Eigen::Vector3d kMu0 = Eigen::Vector3d::Constant(1.0 / 3.0);
const Eigen::Vector3d kMu1 = Eigen::Vector3d::Constant(1.0 / 6.0);
constexpr double kNoiseSd = 0.1;

Eigen::Matrix3d sigma1() {
    Eigen::Matrix3d s;
    s << 0.25, 0.1, 0.1, 0.1, 0.25, 0.1, 0.1, 0.1, 0.25;
    return s;
}

const Eigen::Matrix3d kSigma1Chol = Eigen::Matrix3d(sigma1().llt().matrixL());

double beta_shape(double rowsum) {
    return 1.0 + 1.0 / (1.0 + std::exp(rowsum));
}

double symmetric_beta_pdf(double a, double shape) {
    const double eps = 1e-12;
    const double t = std::clamp(a, eps, 1.0 - eps);
    const double log_b = 2.0 * std::lgamma(shape) - std::lgamma(2.0 * shape);
    return std::exp((shape - 1.0) * (std::log(t) + std::log1p(-t)) - log_b);
}

double mvn3_pdf(const Eigen::Vector3d& x, const Eigen::Vector3d& mean,
                const Eigen::Matrix3d& cov_inv, double cov_det) {
    const Eigen::Vector3d c = x - mean;
    const double quad = c.dot(cov_inv * c);
    const double norm =
        std::pow(2.0 * std::numbers::pi, -1.5) / std::sqrt(cov_det);
    return norm * std::exp(-0.5 * quad);
}

}  // namespace

double true_cdrf(CdrfFamily family, double a) {
    check_domain(a);
    switch (family) {
        case CdrfFamily::gaussian:
            return gaussian_pdf(a, 0.5, 0.25) - 1.0;
        case CdrfFamily::trigonometric:
            return 5.0 * std::sin(3.0 * a) + 3.0 * std::cos(10.0 * a);
        case CdrfFamily::discontinuous:
            // Boundary point assigned to the right branch.
            return a < 0.5 ? std::sqrt(a) + 0.1 : 0.5 * (a * a * a * a + 1.0);
    }
    return 0.0;
}

double misspecified_cdrf(CdrfFamily family, double a) {
    check_domain(a);
    switch (family) {
        case CdrfFamily::gaussian:
            return 0.5 * (gaussian_pdf(a, 1.0, 0.25) - 1.0);
        case CdrfFamily::trigonometric:
            return 0.5 * (std::cos(3.0 * a) + std::sin(10.0 * a));
        case CdrfFamily::discontinuous:
            return a < 0.3 ? std::sqrt(std::log1p(a))
                           : 0.1 * (std::cos(3.0 * a) + 1.0);
    }
    return 0.0;
}

int source_label(bool sx, bool sy) { return 2 * (sx ? 1 : 0) + (sy ? 1 : 0); }

FusionConfig scenario_fusion() {
    FusionConfig fusion;
    fusion.sources_x = {2, 3};
    fusion.sources_y = {1, 3};
    return fusion;
}

Dataset generate(CdrfFamily family, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw DataError("generate: n must be >= 1");
    Rng rng(seed);

    Dataset data;
    data.covariate_dim = 3;
    data.exposure_dim = 1;
    data.records.reserve(n);

    for (std::size_t i = 0; i < n; ++i) {
        const bool sx = rng.uniform() < 0.5;
        const bool sy = rng.uniform() < 0.5;

        Eigen::Vector3d z(rng.normal(), rng.normal(), rng.normal());
        Eigen::Vector3d x =
            sx ? Eigen::Vector3d(kMu0 + 0.3 * z)
               : Eigen::Vector3d(kMu1 + kSigma1Chol * z);
        const double rowsum = x.sum();

        const double shape = beta_shape(rowsum);
        const double a = rng.beta(shape, shape);

        const double curve =
            sy ? true_cdrf(family, a) : misspecified_cdrf(family, a);
        const double y = curve * rowsum + kNoiseSd * rng.normal();

        SampleRecord rec;
        rec.x = {x(0), x(1), x(2)};
        rec.a = {a};
        rec.y = y;
        rec.s = source_label(sx, sy);
        data.records.push_back(std::move(rec));
    }
    return data;
}

NuisanceFit oracle_nuisance(CdrfFamily family, const ReferenceMeasure& mu,
                            std::size_t mc_size, std::uint64_t seed,
                            EstimationMode mode) {
    if (mc_size < 1) throw DataError("oracle_nuisance: mc_size must be >= 1");

    // tau0 as a Monte Carlo average of m0(X, .) over X | S_X = 1; since
    // m0(x, a) = theta0(a) <x, 1>, only the mean row sum is needed.
    Rng rng(derive_seed(seed, "oracle_tau"));
    double rowsum_mean = 0.0;
    for (std::size_t i = 0; i < mc_size; ++i) {
        const double rowsum =
            1.0 + 0.3 * (rng.normal() + rng.normal() + rng.normal());
        rowsum_mean += rowsum;
    }
    rowsum_mean /= static_cast<double>(mc_size);

    const Eigen::Matrix3d cov1 = sigma1();
    const Eigen::Matrix3d cov1_inv = cov1.inverse();
    const double cov1_det = cov1.determinant();
    const Eigen::Matrix3d cov0_inv = Eigen::Matrix3d::Identity() / 0.09;
    const double cov0_det = 0.09 * 0.09 * 0.09;

    NuisanceFit fit;
    fit.mode = mode;
    fit.bounds = NuisanceBounds{1e6, 100.0, 100.0};
    fit.xi = mode == EstimationMode::fused ? 2.0 : 4.0;
    fit.eta = fit.xi;

    fit.ratio.mode = mode;
    fit.ratio.clip_lo = 1.0 / fit.bounds.m_w;
    fit.ratio.clip_hi = fit.bounds.m_w;
    fit.ratio.analytic = [mu, mode, cov1_inv, cov1_det, cov0_inv, cov0_det](
                             const Eigen::VectorXd& x,
                             const Eigen::VectorXd& a) -> double {
        const double shape = beta_shape(x.sum());
        // A is independent of S given X, so the exposure factor is the
        // mu-density over the Beta(c, c) conditional, in either mode.
        double w = mu.density(std::clamp(a(0), 0.0, 1.0)) /
                   symmetric_beta_pdf(a(0), shape);
        if (mode == EstimationMode::fused) {
            const Eigen::Vector3d xv(x(0), x(1), x(2));
            const double p0 = mvn3_pdf(xv, kMu0, cov0_inv, cov0_det);
            const double p1 = mvn3_pdf(xv, kMu1, cov1_inv, cov1_det);
            w *= p0 / (0.5 * p0 + 0.5 * p1);
        }
        return w;
    };

    fit.outcome.mode = mode;
    fit.outcome.analytic = [family](const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& a) -> double {
        // Every source with the target outcome law uses theta0, so
        // m0(x, a) = theta0(a) <x, 1> in both modes.
        return true_cdrf(family, a(0)) * x.sum();
    };

    fit.tau.mode = mode;
    fit.tau.outcome = fit.outcome;
    fit.tau.analytic = [family, rowsum_mean](const Eigen::VectorXd& a) -> double {
        return true_cdrf(family, a(0)) * rowsum_mean;
    };

    return fit;
}

}  // namespace cdrf
