#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>

#include "cdrf/dataset.hpp"
#include "cdrf/nuisance.hpp"

namespace cdrf {

/// Pointwise nuisance evaluations entering the orthogonal loss at one
/// extended record.
struct NuisanceEvals {
    double xi = 1.0;
    double eta = 1.0;
    double w_xa = 1.0;   // w(x, a)
    double m_xa = 0.0;   // m(x, a)
    double m_xb = 0.0;   // m(x, b)
    double tau_a = 0.0;  // tau(a)
    double tau_b = 0.0;  // tau(b)
};

/// Per-record linear-term coefficients of the quadratic empirical
/// objective:
///   u_i = 1(s_i in S_Y) eta w(x_i, a_i) (m(x_i, a_i) - y_i)
///   v_i = 1(s_i in S_X) xi (tau(b_i) - m(x_i, b_i)) - tau(b_i)
/// (nonfused: both indicators on the intersection, underlined nuisances).
struct PseudoResiduals {
    Eigen::VectorXd u;
    Eigen::VectorXd v;
};

/// The stochastically approximated Neyman-orthogonal loss at one record:
///   (theta(b) - tau(b))^2
///   + 2 xi 1(s in S_X) (theta(b) - tau(b)) (tau(b) - m(x, b))
///   + 2 eta w(x, a) 1(s in S_Y) (theta(a) - tau(a)) (m(x, a) - y).
/// The no-fusion variant replaces both indicators by 1(s in S_X ∩ S_Y) and
/// reads the underlined nuisances from `g`.
double pointwise_loss(double theta_at_b, double theta_at_a,
                      const NuisanceEvals& g, const ExtendedRecord& record,
                      const FusionConfig& fusion, EstimationMode mode);

PseudoResiduals pseudo_residuals(const NuisanceFit& g,
                                 std::span<const ExtendedRecord> fold2,
                                 const FusionConfig& fusion,
                                 EstimationMode mode);

using ThetaFn = std::function<double(const Eigen::VectorXd& exposure)>;

/// Mean of pointwise_loss over the fold.
double empirical_risk(const ThetaFn& theta, const NuisanceFit& g,
                      std::span<const ExtendedRecord> fold,
                      const FusionConfig& fusion, EstimationMode mode);

}  // namespace cdrf
