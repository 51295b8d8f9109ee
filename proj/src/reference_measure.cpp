#include "cdrf/reference_measure.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cdrf/errors.hpp"
#include "cdrf/rng.hpp"

namespace cdrf {

ReferenceMeasure ReferenceMeasure::uniform() { return ReferenceMeasure{}; }

ReferenceMeasure ReferenceMeasure::make_beta(double alpha, double beta) {
    if (!(alpha > 0.0) || !(beta > 0.0))
        throw DataError("beta reference measure requires positive parameters");
    ReferenceMeasure m;
    m.kind = Kind::beta;
    m.alpha = alpha;
    m.beta = beta;
    return m;
}

ReferenceMeasure ReferenceMeasure::parse(std::string_view text) {
    std::string s(text);
    s.erase(std::remove_if(s.begin(), s.end(), ::isspace), s.end());
    if (s == "uniform") return uniform();
    if (s.rfind("beta(", 0) == 0 && s.back() == ')') {
        std::string inner = s.substr(5, s.size() - 6);
        auto comma = inner.find(',');
        if (comma != std::string::npos) {
            try {
                double a = std::stod(inner.substr(0, comma));
                double b = std::stod(inner.substr(comma + 1));
                return make_beta(a, b);
            } catch (const std::logic_error&) {
                // fall through to the error below
            }
        }
    }
    throw UsageError("unrecognized reference measure: '" + std::string(text) +
                     "' (expected uniform or beta(a,b))");
}

std::string ReferenceMeasure::to_string() const {
    if (kind == Kind::uniform01) return "uniform";
    std::ostringstream out;
    out << "beta(" << alpha << "," << beta << ")";
    return out.str();
}

std::vector<double> ReferenceMeasure::sample(std::size_t n,
                                             std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<double> draws(n);
    if (kind == Kind::uniform01) {
        for (auto& d : draws) d = rng.uniform();
    } else {
        for (auto& d : draws) d = rng.beta(alpha, beta);
    }
    return draws;
}

double ReferenceMeasure::density(double a) const {
    if (a < 0.0 || a > 1.0)
        throw DataError("reference measure density: point outside [0,1]");
    if (kind == Kind::uniform01) return 1.0;
    const double eps = 1e-12;
    const double t = std::clamp(a, eps, 1.0 - eps);
    const double log_b = std::lgamma(alpha) + std::lgamma(beta) -
                         std::lgamma(alpha + beta);
    return std::exp((alpha - 1.0) * std::log(t) +
                    (beta - 1.0) * std::log1p(-t) - log_b);
}

}  // namespace cdrf
