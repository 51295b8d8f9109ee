#include "cdrf/krr_estimator.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "cdrf/errors.hpp"

namespace cdrf {

double FittedCDRF::predict(std::span<const double> t) const {
    if (static_cast<Eigen::Index>(t.size()) != a_anchors.cols())
        throw DataError("predict: exposure dimension mismatch");
    const double scale = 1.0 / std::sqrt(static_cast<double>(n2()));
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n2(); ++j) {
        const Eigen::VectorXd aj = a_anchors.row(j).transpose();
        const Eigen::VectorXd bj = b_anchors.row(j).transpose();
        acc += beta(j) * kernel(t, std::span(aj.data(), static_cast<std::size_t>(aj.size())));
        acc += gamma(j) * kernel(t, std::span(bj.data(), static_cast<std::size_t>(bj.size())));
    }
    return scale * acc;
}

Eigen::VectorXd FittedCDRF::predict_points(const Eigen::MatrixXd& points) const {
    if (points.cols() != a_anchors.cols())
        throw DataError("predict: exposure dimension mismatch");
    const double scale = 1.0 / std::sqrt(static_cast<double>(n2()));
    return scale * (kernel_matrix(kernel, points, a_anchors) * beta +
                    kernel_matrix(kernel, points, b_anchors) * gamma);
}

FittedCDRF fit_closed_form(const PseudoResiduals& residuals,
                           const GramBlocks& gram, double lambda,
                           const Eigen::MatrixXd& a_anchors,
                           const Eigen::MatrixXd& b_anchors,
                           const KernelSpec& kernel) {
    const Eigen::Index n = gram.n2();
    if (!(lambda > 0.0)) throw DataError("fit_closed_form: lambda must be > 0");
    if (residuals.u.size() != n || residuals.v.size() != n ||
        a_anchors.rows() != n || b_anchors.rows() != n)
        throw DataError("fit_closed_form: inconsistent dimensions");

    const double root_n = std::sqrt(static_cast<double>(n));
    FittedCDRF model;
    model.beta = -residuals.u / (lambda * root_n);

    Eigen::MatrixXd lhs = gram.k22;
    lhs.diagonal().array() += lambda;
    Eigen::VectorXd rhs = -(residuals.v / root_n + gram.k21 * model.beta);
    Eigen::LLT<Eigen::MatrixXd> llt(lhs);
    if (llt.info() != Eigen::Success)
        throw NumericError("fit_closed_form: factorization of K22 + lambda I failed");
    model.gamma = llt.solve(rhs);
    if (!model.gamma.allFinite())
        throw NumericError("fit_closed_form: solve produced non-finite weights");

    model.a_anchors = a_anchors;
    model.b_anchors = b_anchors;
    model.kernel = kernel;
    model.lambda = lambda;
    return model;
}

double stationarity_residual(const FittedCDRF& model,
                             const PseudoResiduals& residuals,
                             const GramBlocks& gram) {
    const Eigen::Index n = gram.n2();
    const double root_n = std::sqrt(static_cast<double>(n));
    Eigen::VectorXd inner(2 * n);
    inner.head(n) = residuals.u / root_n + model.lambda * model.beta;
    inner.tail(n) = gram.k21 * model.beta + gram.k22 * model.gamma +
                    residuals.v / root_n + model.lambda * model.gamma;
    Eigen::VectorXd grad(2 * n);
    grad.head(n) = gram.k11 * inner.head(n) + gram.k12 * inner.tail(n);
    grad.tail(n) = gram.k21 * inner.head(n) + gram.k22 * inner.tail(n);
    return grad.cwiseAbs().maxCoeff();
}

double rkhs_norm(const FittedCDRF& model, const GramBlocks& gram) {
    const Eigen::Index n = gram.n2();
    Eigen::VectorXd c(2 * n);
    c.head(n) = model.beta;
    c.tail(n) = model.gamma;
    Eigen::VectorXd kc(2 * n);
    kc.head(n) = gram.k11 * model.beta + gram.k12 * model.gamma;
    kc.tail(n) = gram.k21 * model.beta + gram.k22 * model.gamma;
    return std::sqrt(std::max(0.0, c.dot(kc)));
}

nlohmann::json FittedCDRF::to_json() const {
    nlohmann::json doc;
    doc["kernel"] = to_string(kernel.family);
    doc["bandwidth"] = kernel.bandwidth;
    doc["lambda"] = lambda;
    doc["n2"] = n2();
    auto to_array = [](const Eigen::VectorXd& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
    };
    doc["beta"] = to_array(beta);
    doc["gamma"] = to_array(gamma);
    auto anchors_to_array = [](const Eigen::MatrixXd& m) {
        std::vector<double> flat;
        flat.reserve(static_cast<std::size_t>(m.size()));
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) flat.push_back(m(i, j));
        return flat;
    };
    doc["exposure_dim"] = a_anchors.cols();
    doc["a_anchors"] = anchors_to_array(a_anchors);
    doc["b_anchors"] = anchors_to_array(b_anchors);
    return doc;
}

FittedCDRF from_json_impl(const nlohmann::json& doc) {
    FittedCDRF model;
    model.kernel.family = parse_kernel_family(doc.at("kernel").get<std::string>());
    model.kernel.bandwidth = doc.at("bandwidth").get<double>();
    model.lambda = doc.at("lambda").get<double>();
    const auto n = doc.at("n2").get<Eigen::Index>();
    const auto d = doc.value("exposure_dim", Eigen::Index{1});

    auto vec = [&](const char* key) {
        auto values = doc.at(key).get<std::vector<double>>();
        return Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                 static_cast<Eigen::Index>(values.size()))
            .eval();
    };
    model.beta = vec("beta");
    model.gamma = vec("gamma");
    auto mat = [&](const char* key) {
        auto values = doc.at(key).get<std::vector<double>>();
        if (static_cast<Eigen::Index>(values.size()) != n * d)
            throw DataError("model document: anchor size mismatch");
        Eigen::MatrixXd m(n, d);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < d; ++j)
                m(i, j) = values[static_cast<std::size_t>(i * d + j)];
        return m;
    };
    model.a_anchors = mat("a_anchors");
    model.b_anchors = mat("b_anchors");
    if (model.beta.size() != n || model.gamma.size() != n)
        throw DataError("model document: weight size mismatch");
    if (!(model.lambda > 0.0)) throw DataError("model document: lambda must be > 0");
    return model;
}

FittedCDRF FittedCDRF::from_json(const nlohmann::json& doc) {
    return from_json_impl(doc);
}

}  // namespace cdrf
