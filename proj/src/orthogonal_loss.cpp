#include "cdrf/orthogonal_loss.hpp"

#include <cmath>
#include <string>

#include "cdrf/errors.hpp"

namespace cdrf {

namespace {

bool indicator_x(int s, const FusionConfig& fusion, EstimationMode mode) {
    return mode == EstimationMode::fused ? fusion.in_x(s)
                                         : fusion.in_intersection(s);
}

bool indicator_y(int s, const FusionConfig& fusion, EstimationMode mode) {
    return mode == EstimationMode::fused ? fusion.in_y(s)
                                         : fusion.in_intersection(s);
}

}  // namespace

double pointwise_loss(double theta_at_b, double theta_at_a,
                      const NuisanceEvals& g, const ExtendedRecord& record,
                      const FusionConfig& fusion, EstimationMode mode) {
    for (double v : {g.xi, g.eta, g.w_xa, g.m_xa, g.m_xb, g.tau_a, g.tau_b,
                     theta_at_a, theta_at_b})
        if (!std::isfinite(v))
            throw NumericError("pointwise_loss: non-finite evaluation");

    const int s = record.base.s;
    const double db = theta_at_b - g.tau_b;
    double loss = db * db;
    if (indicator_x(s, fusion, mode))
        loss += 2.0 * g.xi * db * (g.tau_b - g.m_xb);
    if (indicator_y(s, fusion, mode))
        loss += 2.0 * g.eta * g.w_xa * (theta_at_a - g.tau_a) *
                (g.m_xa - record.base.y);
    return loss;
}

PseudoResiduals pseudo_residuals(const NuisanceFit& g,
                                 std::span<const ExtendedRecord> fold2,
                                 const FusionConfig& fusion,
                                 EstimationMode mode) {
    const auto n = static_cast<Eigen::Index>(fold2.size());
    PseudoResiduals res;
    res.u.resize(n);
    res.v.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& rec = fold2[static_cast<std::size_t>(i)];
        const Eigen::VectorXd x = to_vector(rec.base.x);
        const Eigen::VectorXd a = to_vector(rec.base.a);
        const Eigen::VectorXd b = to_vector(rec.b);
        const int s = rec.base.s;

        double u = 0.0, v = 0.0;
        try {
            if (indicator_y(s, fusion, mode))
                u = g.eta * g.ratio_at(x, a) * (g.outcome_at(x, a) - rec.base.y);
            const double tau_b = g.tau_at(b);
            v = -tau_b;
            if (indicator_x(s, fusion, mode))
                v += g.xi * (tau_b - g.outcome_at(x, b));
        } catch (const std::exception& e) {
            throw NumericError("pseudo_residuals: record " + std::to_string(i) +
                               ": " + e.what());
        }
        if (!std::isfinite(u) || !std::isfinite(v))
            throw NumericError("pseudo_residuals: non-finite value at record " +
                               std::to_string(i));
        res.u(i) = u;
        res.v(i) = v;
    }
    return res;
}

double empirical_risk(const ThetaFn& theta, const NuisanceFit& g,
                      std::span<const ExtendedRecord> fold,
                      const FusionConfig& fusion, EstimationMode mode) {
    if (fold.empty()) throw DataError("empirical_risk: empty fold");
    double total = 0.0;
    for (const auto& rec : fold) {
        const Eigen::VectorXd x = to_vector(rec.base.x);
        const Eigen::VectorXd a = to_vector(rec.base.a);
        const Eigen::VectorXd b = to_vector(rec.b);
        NuisanceEvals evals;
        evals.xi = g.xi;
        evals.eta = g.eta;
        evals.w_xa = g.ratio_at(x, a);
        evals.m_xa = g.outcome_at(x, a);
        evals.m_xb = g.outcome_at(x, b);
        evals.tau_a = g.tau_at(a);
        evals.tau_b = g.tau_at(b);
        total += pointwise_loss(theta(b), theta(a), evals, rec, fusion, mode);
    }
    return total / static_cast<double>(fold.size());
}

}  // namespace cdrf
