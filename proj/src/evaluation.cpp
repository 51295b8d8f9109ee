#include "cdrf/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "cdrf/errors.hpp"
#include "cdrf/rng.hpp"

namespace cdrf {

std::string to_string(Method method) {
    return method == Method::fusion ? "fusion" : "no_fusion";
}

Method parse_method(std::string_view text) {
    if (text == "fusion") return Method::fusion;
    if (text == "no_fusion") return Method::no_fusion;
    throw DataError("unrecognized method: '" + std::string(text) + "'");
}

std::string measure_slug(const ReferenceMeasure& mu) {
    if (mu.kind == ReferenceMeasure::Kind::uniform01) return "uniform";
    std::ostringstream out;
    out << "beta-" << mu.alpha << "-" << mu.beta;
    return out.str();
}

ReferenceMeasure parse_measure_slug(std::string_view slug) {
    std::string s(slug);
    if (s == "uniform") return ReferenceMeasure::uniform();
    if (s.rfind("beta-", 0) == 0) {
        const auto rest = s.substr(5);
        const auto dash = rest.find('-');
        if (dash != std::string::npos) {
            try {
                return ReferenceMeasure::make_beta(
                    std::stod(rest.substr(0, dash)),
                    std::stod(rest.substr(dash + 1)));
            } catch (const std::logic_error&) {
            }
        }
    }
    throw DataError("unrecognized measure slug: '" + s + "'");
}

double empirical_risk_vs_truth(const FittedCDRF& model, CdrfFamily family,
                               const ReferenceMeasure& mu, std::size_t m_eval,
                               std::uint64_t seed) {
    if (m_eval < 1) throw DataError("empirical_risk_vs_truth: m_eval must be >= 1");
    const auto draws = mu.sample(m_eval, seed);
    Eigen::MatrixXd points(static_cast<Eigen::Index>(m_eval), 1);
    for (std::size_t i = 0; i < m_eval; ++i)
        points(static_cast<Eigen::Index>(i), 0) = draws[i];
    const Eigen::VectorXd fitted = model.predict_points(points);
    double total = 0.0;
    for (std::size_t i = 0; i < m_eval; ++i) {
        const double diff =
            fitted(static_cast<Eigen::Index>(i)) - true_cdrf(family, draws[i]);
        total += diff * diff;
    }
    return total / static_cast<double>(m_eval);
}

int percent_reduction(double fused, double nonfused) {
    if (!(nonfused > 0.0))
        throw DataError("percent_reduction: nonfused risk must be > 0");
    const double pct = 100.0 * (1.0 - fused / nonfused);
    return static_cast<int>(std::floor(pct + 0.5));
}

namespace {

double c_sigma_delta(double delta, double sigma, double l_subexp) {
    const double log_term = std::log(8.0 / delta);
    return 1.0 + std::max(sigma * std::sqrt(2.0 * log_term),
                          2.0 * l_subexp * log_term);
}

void check_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
        throw DataError(std::string("diagnostics: ") + name + " must be > 0");
}

}  // namespace

double lipschitz_constant(double delta, double sigma, double l_subexp,
                          double xi, double eta, double w_sup) {
    if (!(delta > 0.0 && delta < 1.0))
        throw DataError("diagnostics: delta must lie in (0,1)");
    check_positive(sigma, "sigma");
    check_positive(l_subexp, "L");
    check_positive(xi, "xi");
    check_positive(eta, "eta");
    check_positive(w_sup, "w_sup");
    const double c = c_sigma_delta(delta, sigma, l_subexp);
    return 4.0 * (1.0 + delta) * (1.0 + delta) * (1.0 + xi + c * eta * w_sup);
}

double bound_ratio(const DiagnosticsInput& input) {
    if (!(input.delta > 0.0 && input.delta < 1.0))
        throw DataError("diagnostics: delta must lie in (0,1)");
    if (!(input.p > 0.0 && input.p < 1.0))
        throw DataError("diagnostics: p must lie in (0,1)");
    if (!(input.alpha > 0.0 && input.alpha < 0.5))
        throw DataError("diagnostics: alpha must lie in (0, 0.5)");
    check_positive(input.sigma, "sigma");
    check_positive(input.l_subexp, "L");
    check_positive(input.xi, "xi");
    check_positive(input.eta, "eta");
    check_positive(input.w_sup, "w_sup");
    check_positive(input.xi_u, "xi_u");
    check_positive(input.eta_u, "eta_u");
    check_positive(input.w_sup_u, "w_sup_u");

    const double c = c_sigma_delta(input.delta, input.sigma, input.l_subexp);
    const double num = 1.0 + input.xi + c * input.eta * input.w_sup;
    const double den = 1.0 + input.xi_u + c * input.eta_u * input.w_sup_u;
    const double exponent = 2.0 * (1.0 + input.p) * (1.0 - 2.0 * input.alpha) /
                            (input.p + 1.0 - 2.0 * input.alpha);
    return std::pow(num / den, exponent);
}

double m_lambda(const NuisanceBounds& bounds) {
    bounds.validate();
    return (bounds.m_eta + bounds.m_w + 2.0) / bounds.m_w;
}

namespace {

double median_of(std::vector<double> values) {
    if (values.empty())
        throw NumericError("benchmark: no successful runs in a cell");
    std::sort(values.begin(), values.end());
    const std::size_t m = values.size();
    if (m % 2 == 1) return values[m / 2];
    return 0.5 * (values[m / 2 - 1] + values[m / 2]);
}

std::string format_risk(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

struct CellKey {
    std::string family;
    std::string measure;
    std::size_t n;

    auto operator<=>(const CellKey&) const = default;
};

struct Task {
    CdrfFamily family;
    ReferenceMeasure measure;
    std::size_t n;
    int run;
};

}  // namespace

RiskTable tabulate(const std::vector<RunRiskRow>& rows) {
    std::map<CellKey, std::pair<std::vector<double>, std::vector<double>>> cells;
    std::map<CellKey, CdrfFamily> families;
    for (const auto& row : rows) {
        CellKey key{to_string(row.family), row.measure, row.n};
        families.emplace(key, row.family);
        auto& [fused, nonfused] = cells[key];
        (row.method == Method::fusion ? fused : nonfused).push_back(row.risk);
    }
    RiskTable table;
    for (const auto& [key, risks] : cells) {
        RiskCell cell;
        cell.family = families.at(key);
        cell.measure = key.measure;
        cell.n = key.n;
        cell.fusion_median = median_of(risks.first);
        cell.nofusion_median = median_of(risks.second);
        cell.pct_reduction =
            percent_reduction(cell.fusion_median, cell.nofusion_median);
        table.cells.push_back(std::move(cell));
    }
    return table;
}

void write_results_csv(const std::vector<RunRiskRow>& rows,
                       const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write results file: " + path.string());
    out << "scenario,ref_measure,n,run,method,risk\n";
    for (const auto& row : rows)
        out << to_string(row.family) << "," << row.measure << "," << row.n << ","
            << row.run << "," << to_string(row.method) << ","
            << format_risk(row.risk) << "\n";
}

std::vector<RunRiskRow> read_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open results file: " + path.string());
    std::string line;
    std::getline(in, line);  // header
    std::vector<RunRiskRow> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string family, measure, n_str, run_str, method, risk_str;
        if (!std::getline(ls, family, ',') || !std::getline(ls, measure, ',') ||
            !std::getline(ls, n_str, ',') || !std::getline(ls, run_str, ',') ||
            !std::getline(ls, method, ',') || !std::getline(ls, risk_str))
            throw DataError("malformed results row: " + line);
        RunRiskRow row;
        row.family = parse_family(family);
        row.measure = measure;
        row.n = static_cast<std::size_t>(std::stoull(n_str));
        row.run = std::stoi(run_str);
        row.method = parse_method(method);
        row.risk = std::stod(risk_str);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_table_csv(const RiskTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write table file: " + path.string());
    out << "scenario,ref_measure,n,fusion_median,nofusion_median,pct_reduction\n";
    for (const auto& cell : table.cells)
        out << to_string(cell.family) << "," << cell.measure << "," << cell.n
            << "," << format_risk(cell.fusion_median) << ","
            << format_risk(cell.nofusion_median) << "," << cell.pct_reduction
            << "\n";
}

void write_curve_csv(const FittedCDRF& model, CdrfFamily family,
                     const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write curve file: " + path.string());
    out << "a,theta0,theta_hat\n";
    Eigen::MatrixXd grid(201, 1);
    for (int i = 0; i <= 200; ++i) grid(i, 0) = static_cast<double>(i) / 200.0;
    const Eigen::VectorXd fitted = model.predict_points(grid);
    for (int i = 0; i <= 200; ++i)
        out << format_risk(grid(i, 0)) << ","
            << format_risk(true_cdrf(family, grid(i, 0))) << ","
            << format_risk(fitted(i)) << "\n";
}

namespace {

bool row_order(const RunRiskRow& lhs, const RunRiskRow& rhs) {
    const auto key = [](const RunRiskRow& r) {
        return std::make_tuple(to_string(r.family), r.measure, r.n, r.run,
                               static_cast<int>(r.method));
    };
    return key(lhs) < key(rhs);
}

}  // namespace

BenchmarkResult monte_carlo_benchmark(const BenchmarkConfig& config) {
    if (config.runs < 1) throw UsageError("benchmark: runs must be >= 1");
    if (config.families.empty() || config.measures.empty() || config.ns.empty())
        throw UsageError("benchmark: empty grid");

    const FusionConfig fusion = scenario_fusion();

    // Rows already on disk from an interrupted run are trusted when both
    // methods are present for the (cell, run) key.
    std::vector<RunRiskRow> done_rows;
    std::map<std::tuple<std::string, std::string, std::size_t, int>, int> seen;
    if (!config.results_path.empty() &&
        std::filesystem::exists(config.results_path)) {
        done_rows = read_results_csv(config.results_path);
        for (const auto& row : done_rows)
            seen[{to_string(row.family), row.measure, row.n, row.run}] += 1;
    }

    std::vector<Task> tasks;
    for (const auto family : config.families)
        for (const auto& measure : config.measures)
            for (const auto n : config.ns)
                for (int run = 0; run < config.runs; ++run) {
                    auto key = std::make_tuple(to_string(family),
                                               measure_slug(measure), n, run);
                    if (auto it = seen.find(key);
                        it != seen.end() && it->second == 2)
                        continue;
                    tasks.push_back(Task{family, measure, n, run});
                }

    std::mutex sink_mutex;
    std::vector<RunRiskRow> new_rows;
    std::vector<std::string> failures;
    std::ofstream incremental;
    if (!config.results_path.empty()) {
        const bool fresh = !std::filesystem::exists(config.results_path);
        incremental.open(config.results_path, std::ios::app);
        if (!incremental)
            throw DataError("cannot open results file: " +
                            config.results_path.string());
        if (fresh) incremental << "scenario,ref_measure,n,run,method,risk\n";
    }

    auto run_task = [&](const Task& task) {
        const std::string cell = to_string(task.family) + "|" +
                                 measure_slug(task.measure) + "|" +
                                 std::to_string(task.n);
        const auto run_idx = static_cast<std::uint64_t>(task.run);
        try {
            const Dataset data =
                generate(task.family, task.n,
                         derive_seed(config.master_seed, "data>" + cell, run_idx));

            RunRiskRow fused_row{task.family, measure_slug(task.measure), task.n,
                                 task.run, Method::fusion, 0.0};
            RunRiskRow plain_row = fused_row;
            plain_row.method = Method::no_fusion;

            const FitResult fused = fit_cdrf(
                data, fusion, EstimationMode::fused, task.measure,
                config.pipeline,
                derive_seed(config.master_seed, "fit_fused>" + cell, run_idx));
            fused_row.risk = empirical_risk_vs_truth(
                fused.model, task.family, task.measure, config.m_eval,
                derive_seed(config.master_seed, "eval_fused>" + cell, run_idx));

            const FitResult plain = fit_cdrf(
                data, fusion, EstimationMode::nonfused, task.measure,
                config.pipeline,
                derive_seed(config.master_seed, "fit_nofusion>" + cell, run_idx));
            plain_row.risk = empirical_risk_vs_truth(
                plain.model, task.family, task.measure, config.m_eval,
                derive_seed(config.master_seed, "eval_nofusion>" + cell,
                            run_idx));

            std::lock_guard lock(sink_mutex);
            new_rows.push_back(fused_row);
            new_rows.push_back(plain_row);
            if (incremental.is_open()) {
                for (const auto& row : {fused_row, plain_row})
                    incremental << to_string(row.family) << "," << row.measure
                                << "," << row.n << "," << row.run << ","
                                << to_string(row.method) << ","
                                << format_risk(row.risk) << "\n";
                incremental.flush();
            }
        } catch (const std::exception& e) {
            std::lock_guard lock(sink_mutex);
            failures.push_back(cell + " run " + std::to_string(task.run) + ": " +
                               e.what());
        }
    };

    int workers = config.workers > 0
                      ? config.workers
                      : static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
    workers = std::min<int>(workers, static_cast<int>(tasks.size() ? tasks.size() : 1));

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) break;
            run_task(tasks[i]);
        }
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    const std::size_t total_runs = config.families.size() *
                                   config.measures.size() * config.ns.size() *
                                   static_cast<std::size_t>(config.runs);
    if (failures.size() * 20 > total_runs) {
        std::string detail = failures.empty() ? "" : (": " + failures.front());
        throw NumericError("benchmark: more than 5% of runs failed (" +
                           std::to_string(failures.size()) + "/" +
                           std::to_string(total_runs) + ")" + detail);
    }

    BenchmarkResult result;
    result.rows = std::move(done_rows);
    result.rows.insert(result.rows.end(), new_rows.begin(), new_rows.end());
    std::sort(result.rows.begin(), result.rows.end(), row_order);
    result.failed_runs = static_cast<int>(failures.size());
    result.failure_messages = std::move(failures);
    result.table = tabulate(result.rows);

    // Rewrite the results file in sorted order so a resumed run ends with
    // bytes identical to an uninterrupted one.
    if (incremental.is_open()) {
        incremental.close();
        write_results_csv(result.rows, config.results_path);
    }
    return result;
}

}  // namespace cdrf
