#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <string_view>

namespace cdrf {

/// Translation-invariant kernel on the exposure space.
///
/// Laplace: exp(-||a - t||_1 / h).  Gaussian: exp(-||a - t||_2^2 / (2 h^2)).
/// Both factorize over coordinate blocks, which the nuisance module exploits.
struct KernelSpec {
    enum class Family { laplace, gaussian };

    Family family = Family::laplace;
    double bandwidth = 1.0;

    double operator()(std::span<const double> a, std::span<const double> t) const;
    double operator()(double a, double t) const {
        return (*this)(std::span<const double>(&a, 1),
                       std::span<const double>(&t, 1));
    }

    /// The family's base distance: L1 for Laplace, L2 for Gaussian.
    static double distance(Family family, std::span<const double> a,
                           std::span<const double> t);

    void validate() const;
};

std::string to_string(KernelSpec::Family family);
KernelSpec::Family parse_kernel_family(std::string_view text);

/// Median of all pairwise distances (family metric) between the rows of
/// `points`. An even pair count takes the mean of the two central order
/// statistics. Throws when every pairwise distance is zero.
double median_heuristic(const Eigen::MatrixXd& points,
                        KernelSpec::Family family);

/// Blocks of the 1/n2-scaled Gram matrix over the concatenation
/// (a-block first, b-block second):
///   k11 = K(a_i, a_j)/n2,  k12 = K(a_i, b_j)/n2,
///   k21 = K(b_i, a_j)/n2,  k22 = K(b_i, b_j)/n2.
struct GramBlocks {
    Eigen::MatrixXd k11, k12, k21, k22;
    double scale = 1.0;  // 1/n2

    Eigen::Index n2() const { return k11.rows(); }

    /// The full 2*n2 x 2*n2 matrix [[k11, k12], [k21, k22]].
    Eigen::MatrixXd assemble() const;
};

/// Rows of a_points and b_points are exposures; both inputs must have n2
/// rows of equal dimension.
GramBlocks gram(const KernelSpec& kernel, const Eigen::MatrixXd& a_points,
                const Eigen::MatrixXd& b_points);

/// Unscaled kernel matrix K(rows_i, cols_j); shared by the nuisance fits.
Eigen::MatrixXd kernel_matrix(const KernelSpec& kernel,
                              const Eigen::MatrixXd& rows,
                              const Eigen::MatrixXd& cols);

}  // namespace cdrf
