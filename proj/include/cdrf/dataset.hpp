#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cdrf/reference_measure.hpp"

namespace cdrf {

/// One observed tuple (x, a, y, s): covariates, exposure in [0,1]^d,
/// outcome, and the integer source label.
struct SampleRecord {
    std::vector<double> x;
    std::vector<double> a;
    double y = 0.0;
    int s = 0;
};

enum class EstimationMode { fused, nonfused };

std::string to_string(EstimationMode mode);
EstimationMode parse_mode(std::string_view text);

/// Which sources align with the target distribution: sources_x has the
/// covariate law of the target, sources_y the outcome law given (x, a).
struct FusionConfig {
    std::set<int> sources_x;
    std::set<int> sources_y;

    std::set<int> intersection() const;
    bool in_x(int s) const { return sources_x.count(s) != 0; }
    bool in_y(int s) const { return sources_y.count(s) != 0; }
    bool in_intersection(int s) const { return in_x(s) && in_y(s); }

    /// Both sets must be nonempty; nonfused estimation additionally needs a
    /// nonempty intersection.
    void validate(EstimationMode mode) const;
};

struct Dataset {
    std::vector<SampleRecord> records;
    int covariate_dim = 0;  // r
    int exposure_dim = 0;   // d

    std::size_t size() const { return records.size(); }
    void validate() const;
};

/// A SampleRecord paired with an auxiliary exposure b drawn from the
/// reference measure.
struct ExtendedRecord {
    SampleRecord base;
    std::vector<double> b;
};

/// Disjoint halves of a dataset: part1 feeds nuisance fitting, part2 the
/// target estimation.
struct SplitPair {
    Dataset part1;
    Dataset part2;
};

/// Reads the CSV schema `x1,...,xr,a,y,s` (or `a1..ad` for d > 1).
/// Covariate and exposure dimensions are inferred from the header.
Dataset load_dataset(const std::filesystem::path& path);

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);

/// Seeded uniform shuffle; part1 receives round-half-up(fraction * n)
/// records. Records keep their dataset order inside each part.
SplitPair split_sample(const Dataset& data, double fraction,
                       std::uint64_t seed);

/// Attaches one independent mu draw per record, in record order.
std::vector<ExtendedRecord> extend_with_mu_draws(const Dataset& data,
                                                 const ReferenceMeasure& mu,
                                                 std::uint64_t seed);

}  // namespace cdrf
