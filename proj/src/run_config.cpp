#include "cdrf/run_config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cdrf/errors.hpp"
#include "cdrf/rng.hpp"

namespace cdrf {

namespace {

std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r");
    auto end = s.find_last_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    return s.substr(begin, end - begin + 1);
}

double parse_real(const std::string& text, const std::string& key) {
    try {
        std::size_t pos = 0;
        double v = std::stod(text, &pos);
        if (pos != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::logic_error&) {
        throw UsageError("config: bad numeric value for " + key + ": '" +
                         text + "'");
    }
}

long parse_int(const std::string& text, const std::string& key) {
    try {
        std::size_t pos = 0;
        long v = std::stol(text, &pos);
        if (pos != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::logic_error&) {
        throw UsageError("config: bad integer value for " + key + ": '" +
                         text + "'");
    }
}

bool parse_bool(const std::string& text, const std::string& key) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw UsageError("config: bad boolean value for " + key + ": '" + text +
                     "'");
}

std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::vector<double> parse_real_list(const std::string& text) {
    std::vector<double> values;
    std::istringstream in(text);
    std::string token;
    while (std::getline(in, token, ',')) {
        token = trim(token);
        if (token.empty()) continue;
        values.push_back(parse_real(token, "list entry"));
    }
    if (values.empty()) throw UsageError("config: empty numeric list");
    return values;
}

std::set<int> parse_int_set(const std::string& text) {
    std::set<int> values;
    std::istringstream in(text);
    std::string token;
    while (std::getline(in, token, ',')) {
        token = trim(token);
        if (token.empty()) continue;
        values.insert(static_cast<int>(parse_int(token, "set entry")));
    }
    if (values.empty()) throw UsageError("config: empty source set");
    return values;
}

void RunConfig::assign(const std::string& section, const std::string& key,
                       const std::string& value) {
    const std::string full = section + "." + key;
    if (section == "data") {
        if (key == "path") dataset_path = value;
        else if (key == "sources_x") fusion.sources_x = parse_int_set(value);
        else if (key == "sources_y") fusion.sources_y = parse_int_set(value);
        else throw UsageError("config: unknown key " + full);
    } else if (section == "measure") {
        if (key == "kind") measure = ReferenceMeasure::parse(value);
        else throw UsageError("config: unknown key " + full);
    } else if (section == "kernel") {
        if (key == "family") pipeline.kernel_family = parse_kernel_family(value);
        else if (key == "bandwidth")
            pipeline.bandwidth = value == "median" ? 0.0 : parse_real(value, full);
        else if (key == "bandwidth_pool") {
            if (value == "a_only")
                pipeline.bandwidth_pool = PipelineConfig::BandwidthPool::a_only;
            else if (value == "a_and_b")
                pipeline.bandwidth_pool = PipelineConfig::BandwidthPool::a_and_b;
            else
                throw UsageError("config: bandwidth_pool must be a_only or a_and_b");
        } else throw UsageError("config: unknown key " + full);
    } else if (section == "cv") {
        if (key == "folds") pipeline.cv.folds = static_cast<int>(parse_int(value, full));
        else if (key == "grid") pipeline.cv.lambda_grid = parse_real_list(value);
        else if (key == "mode") {
            if (value == "paper") pipeline.cv.mode = CVConfig::Mode::paper;
            else if (value == "standard") pipeline.cv.mode = CVConfig::Mode::standard;
            else throw UsageError("config: cv.mode must be paper or standard");
        } else if (key == "penalty_power")
            pipeline.cv.penalty_power = static_cast<int>(parse_int(value, full));
        else throw UsageError("config: unknown key " + full);
    } else if (section == "ratio") {
        if (key == "n_basis") pipeline.ratio.n_basis = static_cast<int>(parse_int(value, full));
        else if (key == "lambda_grid") pipeline.ratio.lambda_grid = parse_real_list(value);
        else throw UsageError("config: unknown key " + full);
    } else if (section == "outcome") {
        if (key == "kernel") pipeline.outcome.kernel_family = parse_kernel_family(value);
        else if (key == "bandwidth")
            pipeline.outcome.bandwidth = value == "median" ? 0.0 : parse_real(value, full);
        else if (key == "ridge_grid") pipeline.outcome.ridge_grid = parse_real_list(value);
        else throw UsageError("config: unknown key " + full);
    } else if (section == "bounds") {
        if (key == "m_w") pipeline.bounds.m_w = parse_real(value, full);
        else if (key == "m_xi") pipeline.bounds.m_xi = parse_real(value, full);
        else if (key == "m_eta") pipeline.bounds.m_eta = parse_real(value, full);
        else throw UsageError("config: unknown key " + full);
    } else if (section == "nuisance") {
        if (key == "clip_mean") pipeline.clip_mean = parse_bool(value, full);
        else throw UsageError("config: unknown key " + full);
    } else if (section == "run") {
        if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(value, full));
        else if (key == "split_fraction") pipeline.split_fraction = parse_real(value, full);
        else if (key == "out_dir") out_dir = value;
        else if (key == "mode") {
            modes.clear();
            std::istringstream in(value);
            std::string token;
            while (std::getline(in, token, ','))
                if (!trim(token).empty()) modes.push_back(parse_mode(trim(token)));
            if (modes.empty()) throw UsageError("config: run.mode is empty");
        } else throw UsageError("config: unknown key " + full);
    } else {
        throw UsageError("config: unknown section [" + section + "]");
    }
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path.string());
    RunConfig config;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw UsageError("config: malformed section header at line " +
                                 std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos || section.empty())
            throw UsageError("config: expected key = value at line " +
                             std::to_string(lineno));
        config.assign(section, trim(line.substr(0, eq)),
                      trim(line.substr(eq + 1)));
    }
    return config;
}

std::string RunConfig::canonical() const {
    std::ostringstream out;
    auto set_str = [](const std::set<int>& s) {
        std::ostringstream o;
        for (int v : s) o << v << ",";
        return o.str();
    };
    auto list_str = [](const std::vector<double>& v) {
        std::ostringstream o;
        for (double x : v) o << format_real(x) << ",";
        return o.str();
    };
    out << "bounds.m_eta=" << format_real(pipeline.bounds.m_eta) << "\n";
    out << "bounds.m_w=" << format_real(pipeline.bounds.m_w) << "\n";
    out << "bounds.m_xi=" << format_real(pipeline.bounds.m_xi) << "\n";
    out << "cv.folds=" << pipeline.cv.folds << "\n";
    out << "cv.grid=" << list_str(pipeline.cv.lambda_grid) << "\n";
    out << "cv.mode="
        << (pipeline.cv.mode == CVConfig::Mode::paper ? "paper" : "standard")
        << "\n";
    out << "cv.penalty_power=" << pipeline.cv.penalty_power << "\n";
    out << "data.path=" << dataset_path.string() << "\n";
    out << "data.sources_x=" << set_str(fusion.sources_x) << "\n";
    out << "data.sources_y=" << set_str(fusion.sources_y) << "\n";
    out << "kernel.bandwidth=" << format_real(pipeline.bandwidth) << "\n";
    out << "kernel.bandwidth_pool="
        << (pipeline.bandwidth_pool == PipelineConfig::BandwidthPool::a_only
                ? "a_only"
                : "a_and_b")
        << "\n";
    out << "kernel.family=" << to_string(pipeline.kernel_family) << "\n";
    out << "measure.kind=" << measure.to_string() << "\n";
    out << "nuisance.clip_mean=" << (pipeline.clip_mean ? "true" : "false")
        << "\n";
    out << "outcome.bandwidth=" << format_real(pipeline.outcome.bandwidth)
        << "\n";
    out << "outcome.kernel=" << to_string(pipeline.outcome.kernel_family)
        << "\n";
    out << "outcome.ridge_grid=" << list_str(pipeline.outcome.ridge_grid)
        << "\n";
    out << "ratio.lambda_grid=" << list_str(pipeline.ratio.lambda_grid) << "\n";
    out << "ratio.n_basis=" << pipeline.ratio.n_basis << "\n";
    std::string mode_list;
    for (const auto m : modes) mode_list += to_string(m) + ",";
    out << "run.mode=" << mode_list << "\n";
    out << "run.seed=" << seed << "\n";
    out << "run.split_fraction=" << format_real(pipeline.split_fraction) << "\n";
    return out.str();
}

std::uint64_t RunConfig::config_hash() const { return fnv1a(canonical()); }

}  // namespace cdrf
