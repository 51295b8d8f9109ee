// cdrf: command-line front end for dose-response estimation with data
// fusion. Subcommands: simulate, fit, cv, evaluate, benchmark, diagnostics.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "cdrf/dataset.hpp"
#include "cdrf/errors.hpp"
#include "cdrf/evaluation.hpp"
#include "cdrf/pipeline.hpp"
#include "cdrf/rng.hpp"
#include "cdrf/run_config.hpp"
#include "cdrf/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t file_hash(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw cdrf::DataError("cannot open file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return cdrf::fnv1a(buf.str());
}

void write_json(const json& doc, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw cdrf::DataError("cannot write file: " + path.string());
    out << doc.dump(2) << "\n";
}

// Every artifact gets a sidecar recording the command, the config hash and
// the master seed, so outputs are attributable and reproducible.
void write_meta(const fs::path& for_file, const std::string& command,
                std::uint64_t config_hash, std::uint64_t seed,
                json extra = json::object()) {
    json meta = std::move(extra);
    meta["command"] = command;
    meta["config_hash"] = hex64(config_hash);
    meta["master_seed"] = seed;
    write_json(meta, fs::path(for_file.string() + ".meta.json"));
}

struct CommonOptions {
    std::string config_file;
    std::vector<std::string> overrides;  // section.key=value
    bool seed_set = false;
    std::uint64_t seed = 0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "INI run-config file");
        cmd->add_option("--set", overrides,
                        "Override a config entry (section.key=value)");
        cmd->add_option("--seed", seed, "Master seed")
            ->each([this](const std::string&) { seed_set = true; });
    }

    cdrf::RunConfig resolve() const {
        cdrf::RunConfig config;
        if (!config_file.empty())
            config = cdrf::RunConfig::from_file(config_file);
        for (const auto& item : overrides) {
            auto eq = item.find('=');
            auto dot = item.find('.');
            if (eq == std::string::npos || dot == std::string::npos || dot > eq)
                throw cdrf::UsageError("--set expects section.key=value, got '" +
                                       item + "'");
            config.assign(item.substr(0, dot), item.substr(dot + 1, eq - dot - 1),
                          item.substr(eq + 1));
        }
        if (seed_set) config.seed = seed;
        return config;
    }
};

void write_cv_csv(const cdrf::CVReport& report, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw cdrf::DataError("cannot write file: " + path.string());
    out << "lambda,fold,risk\n";
    char buf[32];
    for (Eigen::Index l = 0; l < static_cast<Eigen::Index>(report.lambda_grid.size()); ++l)
        for (Eigen::Index k = 0; k < report.risks.rows(); ++k) {
            std::snprintf(buf, sizeof(buf), "%.17g",
                          report.lambda_grid[static_cast<std::size_t>(l)]);
            out << buf << "," << k << ",";
            std::snprintf(buf, sizeof(buf), "%.17g", report.risks(k, l));
            out << buf << "\n";
        }
}

void write_predicted_curve_csv(const cdrf::FittedCDRF& model,
                               const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw cdrf::DataError("cannot write file: " + path.string());
    out << "a,theta_hat\n";
    Eigen::MatrixXd grid(201, 1);
    for (int i = 0; i <= 200; ++i) grid(i, 0) = static_cast<double>(i) / 200.0;
    const Eigen::VectorXd fitted = model.predict_points(grid);
    char buf[32];
    for (int i = 0; i <= 200; ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", grid(i, 0));
        out << buf << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", fitted(i));
        out << buf << "\n";
    }
}

int run(int argc, char** argv) {
    CLI::App app{"Causal dose-response estimation under data fusion"};
    app.require_subcommand(1);

    // --- simulate ---------------------------------------------------------
    auto* sim = app.add_subcommand("simulate", "Generate a benchmark dataset");
    std::string sim_family = "gaussian";
    std::size_t sim_n = 400;
    std::uint64_t sim_seed = 0;
    std::string sim_out = "dataset.csv";
    sim->add_option("--family", sim_family, "gaussian|trigonometric|discontinuous");
    sim->add_option("--n", sim_n, "Number of records")->check(CLI::PositiveNumber);
    sim->add_option("--seed", sim_seed, "Seed");
    sim->add_option("--out", sim_out, "Output CSV path");

    // --- fit / cv ---------------------------------------------------------
    auto* fit = app.add_subcommand("fit", "Fit the CDRF on a dataset");
    auto* cv = app.add_subcommand("cv", "Cross-validate lambda only");
    CommonOptions fit_common, cv_common;
    std::string fit_data, fit_modes, fit_out_dir, fit_measure;
    for (auto* cmd : {fit, cv}) {
        auto& common = cmd == fit ? fit_common : cv_common;
        common.attach(cmd);
        cmd->add_option("--data", fit_data, "Dataset CSV path");
        cmd->add_option("--mode", fit_modes, "fused, nonfused, or fused,nonfused");
        cmd->add_option("--measure", fit_measure, "uniform or beta(a,b)");
        cmd->add_option("--out-dir", fit_out_dir, "Output directory");
    }

    // --- evaluate ---------------------------------------------------------
    auto* eval = app.add_subcommand("evaluate", "Score a fitted model");
    std::string eval_model, eval_family = "gaussian", eval_measure = "uniform";
    std::size_t eval_m = 1000;
    std::uint64_t eval_seed = 0;
    std::string eval_out_dir = ".";
    eval->add_option("--model", eval_model, "FitResult or model JSON")->required();
    eval->add_option("--family", eval_family, "True CDRF family");
    eval->add_option("--measure", eval_measure, "Reference measure");
    eval->add_option("--m-eval", eval_m, "Evaluation draws")->check(CLI::PositiveNumber);
    eval->add_option("--seed", eval_seed, "Seed");
    eval->add_option("--out-dir", eval_out_dir, "Output directory");

    // --- benchmark --------------------------------------------------------
    auto* bench = app.add_subcommand("benchmark", "Monte Carlo risk benchmark");
    CommonOptions bench_common;
    bench_common.attach(bench);
    std::vector<std::string> bench_families{"gaussian"};
    std::vector<std::string> bench_measures{"uniform"};
    std::string bench_ns = "400";
    int bench_runs = 0;
    int bench_workers = 0;
    std::size_t bench_m = 1000;
    std::string bench_out_dir = ".";
    bench->add_option("--family", bench_families, "CDRF families (repeatable)");
    bench->add_option("--measures", bench_measures, "Reference measures (repeatable)");
    bench->add_option("--ns", bench_ns, "Comma-separated sample sizes");
    bench->add_option("--runs", bench_runs, "Runs per cell")->required();
    bench->add_option("--workers", bench_workers, "Worker threads (default: cores)");
    bench->add_option("--m-eval", bench_m, "Evaluation draws per run");
    bench->add_option("--out-dir", bench_out_dir, "Output directory");

    // --- diagnostics ------------------------------------------------------
    auto* diag = app.add_subcommand("diagnostics",
                                    "Lipschitz constant and bound ratio");
    cdrf::DiagnosticsInput din;
    double diag_m_w = 50.0, diag_m_xi = 100.0, diag_m_eta = 100.0;
    std::string diag_out;
    diag->add_option("--delta", din.delta);
    diag->add_option("--sigma", din.sigma);
    diag->add_option("--l", din.l_subexp, "Sub-exponential scale L");
    diag->add_option("--xi", din.xi);
    diag->add_option("--eta", din.eta);
    diag->add_option("--w-sup", din.w_sup);
    diag->add_option("--xi-u", din.xi_u);
    diag->add_option("--eta-u", din.eta_u);
    diag->add_option("--w-sup-u", din.w_sup_u);
    diag->add_option("--p", din.p, "Eigenvalue-decay exponent");
    diag->add_option("--alpha", din.alpha, "Source-condition exponent");
    diag->add_option("--m-w", diag_m_w);
    diag->add_option("--m-xi", diag_m_xi);
    diag->add_option("--m-eta", diag_m_eta);
    diag->add_option("--out", diag_out, "Optional JSON output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (sim->parsed()) {
        const auto family = cdrf::parse_family(sim_family);
        const auto data = cdrf::generate(family, sim_n, sim_seed);
        cdrf::write_dataset_csv(data, sim_out);
        json extra{{"family", cdrf::to_string(family)},
                   {"seed", sim_seed},
                   {"n", sim_n}};
        cdrf::RunConfig config;
        config.seed = sim_seed;
        write_meta(sim_out, "simulate", config.config_hash(), sim_seed, extra);
        std::cout << "wrote " << sim_out << " (" << sim_n << " records)\n";
        return 0;
    }

    if (fit->parsed() || cv->parsed()) {
        const bool fit_cmd = fit->parsed();
        auto config = (fit_cmd ? fit_common : cv_common).resolve();
        if (!fit_data.empty()) config.dataset_path = fit_data;
        if (!fit_measure.empty())
            config.measure = cdrf::ReferenceMeasure::parse(fit_measure);
        if (!fit_out_dir.empty()) config.out_dir = fit_out_dir;
        if (!fit_modes.empty()) {
            config.modes.clear();
            std::istringstream in(fit_modes);
            std::string token;
            while (std::getline(in, token, ','))
                config.modes.push_back(cdrf::parse_mode(token));
        }
        if (config.dataset_path.empty())
            throw cdrf::UsageError("fit: --data (or data.path in config) is required");

        const auto data = cdrf::load_dataset(config.dataset_path);
        const auto data_hash = file_hash(config.dataset_path);
        fs::create_directories(config.out_dir);

        for (const auto mode : config.modes) {
            const auto result = cdrf::fit_cdrf(data, config.fusion, mode,
                                               config.measure, config.pipeline,
                                               config.seed);
            const std::string suffix = cdrf::to_string(mode);
            const fs::path cv_path = config.out_dir / ("cv_" + suffix + ".csv");
            write_cv_csv(result.cv, cv_path);
            write_meta(cv_path, fit_cmd ? "fit" : "cv", config.config_hash(),
                       config.seed, {{"dataset_hash", hex64(data_hash)}});
            std::cout << "mode " << suffix
                      << ": chosen lambda = " << result.cv.chosen_lambda << "\n";
            if (!fit_cmd) continue;

            json doc = cdrf::fit_result_to_json(result);
            doc["dataset_hash"] = hex64(data_hash);
            doc["config_hash"] = hex64(config.config_hash());
            doc["master_seed"] = config.seed;
            const fs::path fit_path = config.out_dir / ("fit_" + suffix + ".json");
            write_json(doc, fit_path);
            const fs::path curve_path =
                config.out_dir / ("curve_" + suffix + ".csv");
            write_predicted_curve_csv(result.model, curve_path);
            write_meta(curve_path, "fit", config.config_hash(), config.seed,
                       {{"dataset_hash", hex64(data_hash)}});
            std::cout << "wrote " << fit_path.string() << "\n";
        }
        return 0;
    }

    if (eval->parsed()) {
        std::ifstream in(eval_model);
        if (!in) throw cdrf::DataError("cannot open model file: " + eval_model);
        json doc = json::parse(in, nullptr, true, true);
        if (doc.contains("model")) doc = doc["model"];
        const auto model = cdrf::FittedCDRF::from_json(doc);
        const auto family = cdrf::parse_family(eval_family);
        const auto measure = cdrf::ReferenceMeasure::parse(eval_measure);
        const double risk = cdrf::empirical_risk_vs_truth(model, family, measure,
                                                          eval_m, eval_seed);
        fs::create_directories(eval_out_dir);
        const fs::path curve_path = fs::path(eval_out_dir) / "evaluation_curve.csv";
        cdrf::write_curve_csv(model, family, curve_path);
        json out{{"risk", risk},
                 {"family", cdrf::to_string(family)},
                 {"measure", measure.to_string()},
                 {"m_eval", eval_m},
                 {"seed", eval_seed}};
        const fs::path risk_path = fs::path(eval_out_dir) / "evaluation.json";
        write_json(out, risk_path);
        std::cout << "risk = " << risk << "\n";
        return 0;
    }

    if (bench->parsed()) {
        auto run_config = bench_common.resolve();
        cdrf::BenchmarkConfig config;
        config.pipeline = run_config.pipeline;
        config.master_seed = run_config.seed;
        config.runs = bench_runs;
        config.m_eval = bench_m;
        config.workers = bench_workers;
        config.families.clear();
        for (const auto& name : bench_families)
            config.families.push_back(cdrf::parse_family(name));
        config.measures.clear();
        for (const auto& name : bench_measures)
            config.measures.push_back(cdrf::ReferenceMeasure::parse(name));
        config.ns.clear();
        for (double v : cdrf::parse_real_list(bench_ns)) {
            if (v < 1) throw cdrf::UsageError("benchmark: sample sizes must be >= 1");
            config.ns.push_back(static_cast<std::size_t>(v));
        }
        fs::create_directories(bench_out_dir);
        config.results_path = fs::path(bench_out_dir) / "results.csv";

        const auto result = cdrf::monte_carlo_benchmark(config);
        for (const auto& msg : result.failure_messages)
            std::cerr << "warning: run failed and was excluded: " << msg << "\n";

        const fs::path table_path = fs::path(bench_out_dir) / "table.csv";
        cdrf::write_table_csv(result.table, table_path);
        write_meta(config.results_path, "benchmark", run_config.config_hash(),
                   config.master_seed);
        write_meta(table_path, "benchmark", run_config.config_hash(),
                   config.master_seed);
        for (const auto& cell : result.table.cells)
            std::cout << cdrf::to_string(cell.family) << " x " << cell.measure
                      << " x n=" << cell.n
                      << ": fusion=" << cell.fusion_median
                      << " no_fusion=" << cell.nofusion_median << " ("
                      << cell.pct_reduction << "%)\n";
        return 0;
    }

    if (diag->parsed()) {
        const double b_fused = cdrf::lipschitz_constant(
            din.delta, din.sigma, din.l_subexp, din.xi, din.eta, din.w_sup);
        const double b_plain = cdrf::lipschitz_constant(
            din.delta, din.sigma, din.l_subexp, din.xi_u, din.eta_u, din.w_sup_u);
        const double ratio = cdrf::bound_ratio(din);
        cdrf::NuisanceBounds bounds{diag_m_w, diag_m_xi, diag_m_eta};
        json out{{"lipschitz_fused", b_fused},
                 {"lipschitz_nofusion", b_plain},
                 {"bound_ratio", ratio},
                 {"m_lambda", cdrf::m_lambda(bounds)}};
        std::cout << out.dump(2) << "\n";
        if (!diag_out.empty()) write_json(out, diag_out);
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const cdrf::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const cdrf::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const cdrf::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
