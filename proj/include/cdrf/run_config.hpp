#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "cdrf/dataset.hpp"
#include "cdrf/pipeline.hpp"
#include "cdrf/reference_measure.hpp"

namespace cdrf {

/// Structured run configuration: one INI-style file with a section per
/// module, overridable by CLI flags. Unknown keys are rejected.
///
///   [data]     path, sources_x, sources_y
///   [measure]  kind = uniform | beta(a,b)
///   [kernel]   family, bandwidth = median | <positive real>, bandwidth_pool
///   [cv]       folds, grid, mode = paper | standard, penalty_power
///   [ratio]    n_basis, lambda_grid
///   [outcome]  kernel, bandwidth, ridge_grid
///   [bounds]   m_w, m_xi, m_eta
///   [nuisance] clip_mean
///   [run]      seed, mode, split_fraction, out_dir
struct RunConfig {
    std::filesystem::path dataset_path;
    FusionConfig fusion{{2, 3}, {1, 3}};
    ReferenceMeasure measure = ReferenceMeasure::uniform();
    PipelineConfig pipeline;
    std::uint64_t seed = 0;
    std::vector<EstimationMode> modes{EstimationMode::fused};
    std::filesystem::path out_dir = ".";

    static RunConfig from_file(const std::filesystem::path& path);

    /// Applies one `section.key = value` assignment (CLI overrides reuse
    /// this path).
    void assign(const std::string& section, const std::string& key,
                const std::string& value);

    /// Canonical serialized form: every effective setting, sorted, one per
    /// line. Hashing this pins the run's provenance.
    std::string canonical() const;
    std::uint64_t config_hash() const;
};

std::vector<double> parse_real_list(const std::string& text);
std::set<int> parse_int_set(const std::string& text);

}  // namespace cdrf
