#include "cdrf/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cdrf/errors.hpp"
#include "cdrf/rng.hpp"

namespace cdrf {

std::string to_string(EstimationMode mode) {
    return mode == EstimationMode::fused ? "fused" : "nonfused";
}

EstimationMode parse_mode(std::string_view text) {
    if (text == "fused") return EstimationMode::fused;
    if (text == "nonfused") return EstimationMode::nonfused;
    throw UsageError("unrecognized mode: '" + std::string(text) +
                     "' (expected fused or nonfused)");
}

std::set<int> FusionConfig::intersection() const {
    std::set<int> both;
    std::set_intersection(sources_x.begin(), sources_x.end(),
                          sources_y.begin(), sources_y.end(),
                          std::inserter(both, both.begin()));
    return both;
}

void FusionConfig::validate(EstimationMode mode) const {
    if (sources_x.empty() || sources_y.empty())
        throw DataError("fusion config: source sets must be nonempty");
    if (mode == EstimationMode::nonfused && intersection().empty())
        throw DataError(
            "fusion config: nonfused estimation requires a nonempty "
            "intersection of source sets");
}

void Dataset::validate() const {
    if (records.empty()) throw DataError("empty dataset");
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        if (static_cast<int>(rec.x.size()) != covariate_dim ||
            static_cast<int>(rec.a.size()) != exposure_dim)
            throw DataError("dataset: dimension mismatch at row " +
                            std::to_string(i + 1));
        for (double ai : rec.a)
            if (!(ai >= 0.0 && ai <= 1.0))
                throw DataError("exposure out of range at row " +
                                std::to_string(i + 1));
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_cell(const std::string& cell, std::size_t row,
                  const std::string& column) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    while (begin != end && std::isspace(static_cast<unsigned char>(*begin)))
        ++begin;
    while (end != begin && std::isspace(static_cast<unsigned char>(end[-1])))
        --end;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end)
        throw DataError("non-numeric cell at row " + std::to_string(row) +
                        ", column " + column);
    return value;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path.string());

    std::string header;
    if (!std::getline(in, header)) throw DataError("empty dataset");
    if (!header.empty() && header.back() == '\r') header.pop_back();

    auto columns = split_csv_line(header);
    int r = 0, d = 0;
    std::size_t col = 0;
    while (col < columns.size() && columns[col] == "x" + std::to_string(r + 1)) {
        ++r;
        ++col;
    }
    if (col < columns.size() && columns[col] == "a") {
        d = 1;
        ++col;
    } else {
        while (col < columns.size() &&
               columns[col] == "a" + std::to_string(d + 1)) {
            ++d;
            ++col;
        }
    }
    bool has_y = col < columns.size() && columns[col] == "y";
    if (has_y) ++col;
    bool has_s = col < columns.size() && columns[col] == "s";
    if (has_s) ++col;
    if (r == 0 || d == 0 || !has_y || !has_s || col != columns.size())
        throw DataError(
            "dataset header must be x1,...,xr,a,y,s (or a1..ad): got '" +
            header + "'");

    Dataset data;
    data.covariate_dim = r;
    data.exposure_dim = d;

    std::string line;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        auto cells = split_csv_line(line);
        if (cells.size() != columns.size())
            throw DataError("row " + std::to_string(row) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(columns.size()));
        SampleRecord rec;
        std::size_t c = 0;
        rec.x.reserve(r);
        for (int j = 0; j < r; ++j, ++c)
            rec.x.push_back(parse_cell(cells[c], row, columns[c]));
        rec.a.reserve(d);
        for (int j = 0; j < d; ++j, ++c) {
            double aj = parse_cell(cells[c], row, columns[c]);
            if (!(aj >= 0.0 && aj <= 1.0))
                throw DataError("exposure out of range at row " +
                                std::to_string(row));
            rec.a.push_back(aj);
        }
        rec.y = parse_cell(cells[c], row, columns[c]);
        ++c;
        double s_val = parse_cell(cells[c], row, columns[c]);
        if (s_val < 0.0 || s_val != std::floor(s_val))
            throw DataError("source label must be a nonnegative integer at row " +
                            std::to_string(row));
        rec.s = static_cast<int>(s_val);
        data.records.push_back(std::move(rec));
    }
    if (data.records.empty()) throw DataError("empty dataset");
    return data;
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset file: " + path.string());
    for (int j = 1; j <= data.covariate_dim; ++j) out << "x" << j << ",";
    if (data.exposure_dim == 1) {
        out << "a,";
    } else {
        for (int j = 1; j <= data.exposure_dim; ++j) out << "a" << j << ",";
    }
    out << "y,s\n";
    char buf[32];
    auto emit = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << buf;
    };
    for (const auto& rec : data.records) {
        for (double xj : rec.x) {
            emit(xj);
            out << ",";
        }
        for (double aj : rec.a) {
            emit(aj);
            out << ",";
        }
        emit(rec.y);
        out << "," << rec.s << "\n";
    }
}

SplitPair split_sample(const Dataset& data, double fraction,
                       std::uint64_t seed) {
    if (data.size() < 2) throw DataError("split_sample: need at least 2 records");
    if (!(fraction > 0.0 && fraction < 1.0))
        throw DataError("split_sample: fraction must lie in (0,1)");

    const std::size_t n = data.size();
    const auto k = static_cast<std::size_t>(
        std::floor(fraction * static_cast<double>(n) + 0.5));

    Rng rng(seed);
    auto order = rng.shuffled_indices(n);
    std::vector<bool> in_part1(n, false);
    for (std::size_t i = 0; i < k; ++i) in_part1[order[i]] = true;

    SplitPair parts;
    parts.part1.covariate_dim = parts.part2.covariate_dim = data.covariate_dim;
    parts.part1.exposure_dim = parts.part2.exposure_dim = data.exposure_dim;
    for (std::size_t i = 0; i < n; ++i)
        (in_part1[i] ? parts.part1 : parts.part2).records.push_back(data.records[i]);
    return parts;
}

std::vector<ExtendedRecord> extend_with_mu_draws(const Dataset& data,
                                                 const ReferenceMeasure& mu,
                                                 std::uint64_t seed) {
    data.validate();
    auto draws = mu.sample(data.size(), seed);
    std::vector<ExtendedRecord> extended;
    extended.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        extended.push_back(ExtendedRecord{data.records[i], {draws[i]}});
    return extended;
}

}  // namespace cdrf
