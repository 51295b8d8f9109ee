#include "cdrf/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdrf/errors.hpp"

namespace cdrf {

void KernelSpec::validate() const {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
        throw DataError("kernel bandwidth must be finite and positive");
}

double KernelSpec::distance(Family family, std::span<const double> a,
                            std::span<const double> t) {
    if (a.size() != t.size())
        throw DataError("kernel: exposure dimension mismatch");
    if (family == Family::laplace) {
        double d = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - t[i]);
        return d;
    }
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - t[i];
        d2 += diff * diff;
    }
    return std::sqrt(d2);
}

double KernelSpec::operator()(std::span<const double> a,
                              std::span<const double> t) const {
    const double d = distance(family, a, t);
    if (family == Family::laplace) return std::exp(-d / bandwidth);
    return std::exp(-d * d / (2.0 * bandwidth * bandwidth));
}

std::string to_string(KernelSpec::Family family) {
    return family == KernelSpec::Family::laplace ? "laplace" : "gaussian";
}

KernelSpec::Family parse_kernel_family(std::string_view text) {
    if (text == "laplace") return KernelSpec::Family::laplace;
    if (text == "gaussian") return KernelSpec::Family::gaussian;
    throw UsageError("unrecognized kernel family: '" + std::string(text) +
                     "' (expected laplace or gaussian)");
}

double median_heuristic(const Eigen::MatrixXd& points,
                        KernelSpec::Family family) {
    const Eigen::Index n = points.rows();
    if (n < 2)
        throw DataError("median heuristic: need at least two points");

    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double d;
            if (family == KernelSpec::Family::laplace)
                d = (points.row(i) - points.row(j)).cwiseAbs().sum();
            else
                d = (points.row(i) - points.row(j)).norm();
            dists.push_back(d);
        }
    }

    const std::size_t m = dists.size();
    std::nth_element(dists.begin(), dists.begin() + m / 2, dists.end());
    double median = dists[m / 2];
    if (m % 2 == 0) {
        // Mean of the two central order statistics.
        double lower = *std::max_element(dists.begin(), dists.begin() + m / 2);
        median = 0.5 * (lower + median);
    }
    if (!(median > 0.0))
        throw DataError("median heuristic: degenerate exposure set");
    return median;
}

Eigen::MatrixXd kernel_matrix(const KernelSpec& kernel,
                              const Eigen::MatrixXd& rows,
                              const Eigen::MatrixXd& cols) {
    if (rows.cols() != cols.cols())
        throw DataError("kernel matrix: dimension mismatch");
    Eigen::MatrixXd out(rows.rows(), cols.rows());
    if (kernel.family == KernelSpec::Family::gaussian) {
        const double inv = -1.0 / (2.0 * kernel.bandwidth * kernel.bandwidth);
        const Eigen::VectorXd rn = rows.rowwise().squaredNorm();
        const Eigen::VectorXd cn = cols.rowwise().squaredNorm();
        out = rn.replicate(1, cols.rows()) + cn.transpose().replicate(rows.rows(), 1) -
              2.0 * rows * cols.transpose();
        out = (out.cwiseMax(0.0) * inv).array().exp();
    } else {
        for (Eigen::Index i = 0; i < rows.rows(); ++i)
            for (Eigen::Index j = 0; j < cols.rows(); ++j)
                out(i, j) = std::exp(
                    -(rows.row(i) - cols.row(j)).cwiseAbs().sum() /
                    kernel.bandwidth);
    }
    return out;
}

GramBlocks gram(const KernelSpec& kernel, const Eigen::MatrixXd& a_points,
                const Eigen::MatrixXd& b_points) {
    kernel.validate();
    if (a_points.rows() != b_points.rows() || a_points.cols() != b_points.cols())
        throw DataError("gram: a and b point lists must have equal shape");
    if (a_points.rows() < 1) throw DataError("gram: need at least one point");

    const double scale = 1.0 / static_cast<double>(a_points.rows());
    GramBlocks blocks;
    blocks.scale = scale;
    blocks.k11 = scale * kernel_matrix(kernel, a_points, a_points);
    blocks.k21 = scale * kernel_matrix(kernel, b_points, a_points);
    blocks.k12 = blocks.k21.transpose();
    blocks.k22 = scale * kernel_matrix(kernel, b_points, b_points);
    return blocks;
}

Eigen::MatrixXd GramBlocks::assemble() const {
    const Eigen::Index n = n2();
    Eigen::MatrixXd full(2 * n, 2 * n);
    full.topLeftCorner(n, n) = k11;
    full.topRightCorner(n, n) = k12;
    full.bottomLeftCorner(n, n) = k21;
    full.bottomRightCorner(n, n) = k22;
    return full;
}

}  // namespace cdrf
