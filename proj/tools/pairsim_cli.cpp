#include "pairsim/csv_io.hpp"
#include "pairsim/dgp.hpp"
#include "pairsim/estimators.hpp"
#include "pairsim/figure.hpp"
#include "pairsim/manifest.hpp"
#include "pairsim/matching.hpp"
#include "pairsim/montecarlo.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using pairsim::RunManifest;
using nlohmann::json;

namespace {

constexpr const char* kProvenanceNote =
    "Default generative parameters (mu0=10, sigma0=3, sigma_epsilon=5, sigma_zeta=1,\n"
    "sigma_eta^2=2, effect numerator 30, truncation at 2) are placeholders chosen for\n"
    "numerical stability. They are not the values of the original study, which live in\n"
    "its external replication archive; simulated curves reproduce orderings and coverage\n"
    "behaviour, not exact published values.";

struct GlobalOptions {
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    std::size_t workers = 1;
};

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw pairsim::InputError(path, 0, "cannot open file");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw pairsim::InputError(path, 0, e.what());
    }
}

fs::path prepare_out(const GlobalOptions& g) {
    fs::path out(g.out);
    fs::create_directories(out);
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string na_or(const std::optional<double>& v) {
    return v && std::isfinite(*v) ? pairsim::format_double(*v) : std::string("NA");
}

RunManifest start_manifest(const std::string& command) {
    RunManifest m;
    m.version = PAIRSIM_VERSION;
    m.command = command;
    m.started = pairsim::utc_timestamp();
    return m;
}

void finish_manifest(RunManifest& m, const fs::path& out, const std::vector<fs::path>& files) {
    for (const auto& f : files) m.add_output(f, out);
    m.finished = pairsim::utc_timestamp();
    m.write(out / "manifest.json");
}

int run_generate(const GlobalOptions& g, const std::string& config_path) {
    pairsim::DgpConfig config;
    if (!config_path.empty()) {
        const json j = read_json_file(config_path);
        try {
            config = j.get<pairsim::DgpConfig>();
        } catch (const json::exception& e) {
            throw pairsim::InputError(config_path, 0, e.what());
        }
    }
    if (g.seed) config.seed = *g.seed;
    config.validate();
    RunManifest manifest = start_manifest("generate");
    const auto ex = pairsim::generate_experiment(config);
    const fs::path out = prepare_out(g);
    {
        std::ofstream f(out / "data.csv");
        pairsim::write_experiment_csv(f, ex.data);
    }
    {
        std::ofstream f(out / "truth.csv");
        pairsim::write_truth_csv(f, ex.truth);
    }
    manifest.configuration = config;
    manifest.master_seed = config.seed;
    finish_manifest(manifest, out, {out / "data.csv", out / "truth.csv"});
    return 0;
}

int run_estimate(const GlobalOptions& g, const std::string& csv, const std::string& estimator,
                 double level, double alpha) {
    const auto kind = pairsim::estimator_from_string(estimator);
    RunManifest manifest = start_manifest("estimate");
    const auto data = pairsim::read_experiment_csv_file(csv);
    pairsim::EstimateResult r;
    if (kind == pairsim::EstimatorKind::Pretest) {
        pairsim::FitOptions options;
        options.level = level;
        r = pairsim::lr_pretest_estimate(data, alpha, pairsim::Link::identity(), options);
    } else {
        r = pairsim::estimate(data, kind, level);
    }
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';

    std::ostringstream row;
    row << "estimator,tau_hat,se,ci_lo,ci_hi,branch,converged\n";
    row << pairsim::to_string(r.estimator) << ',' << pairsim::format_double(r.estimate) << ','
        << na_or(r.std_error) << ','
        << na_or(r.ci ? std::optional<double>(r.ci->lo) : std::nullopt) << ','
        << na_or(r.ci ? std::optional<double>(r.ci->hi) : std::nullopt) << ','
        << (r.pretest ? pairsim::to_string(r.pretest->branch) : std::string("NA")) << ','
        << (r.converged ? "true" : "false") << '\n';
    std::cout << row.str();

    const fs::path out = prepare_out(g);
    write_text(out / "estimate.csv", row.str());
    manifest.configuration = {{"input", csv},
                              {"input_sha256", pairsim::sha256_file(csv)},
                              {"estimator", pairsim::to_string(kind)},
                              {"level", level},
                              {"alpha", alpha}};
    finish_manifest(manifest, out, {out / "estimate.csv"});
    return 0;
}

int run_match(const GlobalOptions& g, const std::string& csv, const std::string& method_name,
              std::optional<std::size_t> bins, std::optional<double> ridge) {
    const auto method = pairsim::pairing_method_from_string(method_name);
    RunManifest manifest = start_manifest("match");
    const pairsim::CovariateMatrix cov(pairsim::read_covariate_csv_file(csv));

    const auto skew = pairsim::covariate_skewness(cov);
    for (std::size_t i = 0; i < skew.size(); ++i) {
        if (std::isfinite(skew[i]) && std::abs(skew[i]) > 1.0) {
            std::cerr << "warning: covariate " << cov.names[i] << " has skewness "
                      << pairsim::format_double(skew[i])
                      << "; Mahalanobis distance assumes roughly symmetric covariates\n";
        }
    }

    pairsim::PairingResult result;
    std::vector<std::size_t> bin_counts;
    if (method == pairsim::PairingMethod::Cem) {
        const std::size_t b =
            bins ? *bins : pairsim::sturges_bins(static_cast<std::size_t>(cov.clusters()));
        bin_counts.assign(static_cast<std::size_t>(cov.covariates()), b);
        result = pairsim::cem_pairing(cov, bin_counts, ridge);
    } else {
        if (cov.clusters() % 2 != 0) {
            throw std::invalid_argument("cannot pair an odd number of clusters (" +
                                        std::to_string(cov.clusters()) + ") in " + csv);
        }
        const auto d = pairsim::mahalanobis_matrix(cov, ridge);
        result = method == pairsim::PairingMethod::Optimal ? pairsim::optimal_pairing(d)
                                                           : pairsim::greedy_pairing(d);
    }

    const fs::path out = prepare_out(g);
    std::vector<fs::path> files{out / "pairs.csv", out / "balance.csv"};
    {
        std::ofstream f(files[0]);
        f << "pair_id,cluster_id_a,cluster_id_b,distance\n";
        for (std::size_t k = 0; k < result.pairs.size(); ++k) {
            const auto& p = result.pairs[k];
            f << k + 1 << ',' << cov.ids[p.a] << ',' << cov.ids[p.b] << ','
              << pairsim::format_double(p.distance) << '\n';
        }
    }
    {
        std::ofstream f(files[1]);
        f << "covariate,max_abs_diff,mean_abs_diff\n";
        for (const auto& row : pairsim::balance_report(cov, result)) {
            f << row.covariate << ',' << pairsim::format_double(row.max_abs_diff) << ','
              << pairsim::format_double(row.mean_abs_diff) << '\n';
        }
    }
    if (method == pairsim::PairingMethod::Cem) {
        files.push_back(out / "unmatched.csv");
        std::ofstream f(files.back());
        f << "cluster_id\n";
        for (int i : result.unmatched) f << cov.ids[i] << '\n';
        if (!result.unmatched.empty()) {
            std::cerr << "warning: " << result.unmatched.size()
                      << " cluster(s) left unmatched by coarsened exact matching\n";
        }
    }
    std::cout << "matched " << result.pairs.size() << " pairs, total distance "
              << pairsim::format_double(result.total_distance) << '\n';

    manifest.configuration = {{"input", csv},
                              {"input_sha256", pairsim::sha256_file(csv)},
                              {"method", pairsim::to_string(method)}};
    if (ridge) manifest.configuration["ridge"] = *ridge;
    if (!bin_counts.empty()) manifest.configuration["bins"] = bin_counts;
    finish_manifest(manifest, out, files);
    return 0;
}

std::vector<fs::path> write_simulation_outputs(const fs::path& out,
                                               const std::vector<pairsim::MetricsRow>& rows) {
    const fs::path metrics = out / "metrics.csv";
    {
        std::ofstream f(metrics);
        if (!f) throw std::runtime_error("cannot write " + metrics.string());
        pairsim::write_metrics_csv(f, rows);
    }
    const fs::path svg = out / "figure1.svg";
    const fs::path table = pairsim::emit_figure(rows, svg);
    return {metrics, svg, table};
}

int run_simulate(const GlobalOptions& g, const std::string& plan_path,
                 std::optional<std::size_t> iterations) {
    const json j = read_json_file(plan_path);
    pairsim::SimulationPlan plan;
    try {
        plan = j.get<pairsim::SimulationPlan>();
    } catch (const json::exception& e) {
        throw pairsim::InputError(plan_path, 0, e.what());
    }
    if (g.seed) plan.master_seed = *g.seed;
    if (iterations) plan.iterations = *iterations;
    plan.resolve_eta();
    plan.validate();

    RunManifest manifest = start_manifest("simulate");
    const auto rows = pairsim::run_sweep(plan, g.workers);
    const fs::path out = prepare_out(g);
    auto files = write_simulation_outputs(out, rows);
    manifest.configuration = {{"plans", json::array({json(plan)})}};
    manifest.master_seed = plan.master_seed;
    finish_manifest(manifest, out, files);
    return 0;
}

int run_figure1(const GlobalOptions& g, std::size_t iterations,
                const std::vector<double>& grid) {
    const std::uint64_t seed = g.seed.value_or(42);
    auto plans = pairsim::figure1_plans(seed, iterations);
    if (!grid.empty()) {
        for (auto& p : plans) p.sigma_delta_grid = grid;
    }
    RunManifest manifest = start_manifest("figure1");
    std::vector<pairsim::MetricsRow> rows;
    json plan_json = json::array();
    for (const auto& p : plans) {
        auto part = pairsim::run_sweep(p, g.workers);
        rows.insert(rows.end(), part.begin(), part.end());
        plan_json.push_back(p);
    }
    const fs::path out = prepare_out(g);
    auto files = write_simulation_outputs(out, rows);
    manifest.configuration = {{"plans", plan_json}};
    manifest.master_seed = seed;
    finish_manifest(manifest, out, files);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Matched-pair cluster-randomized experiment toolkit"};
    app.require_subcommand(0, 1);
    GlobalOptions g;
    bool show_version = false;
    app.add_flag("--version", show_version, "Print version and parameter provenance");
    app.add_option("--seed", g.seed, "Master seed")->check(CLI::NonNegativeNumber);
    app.add_option("--out", g.out, "Output directory")->capture_default_str();
    app.add_option("--workers", g.workers, "Worker threads")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    auto* gen = app.add_subcommand("generate", "Draw one synthetic experiment");
    std::string config_path;
    gen->add_option("--config", config_path, "DGP configuration (JSON)")
        ->check(CLI::ExistingFile);

    auto* est = app.add_subcommand("estimate", "Estimate the treatment effect from a data CSV");
    std::string est_csv;
    std::string estimator = "design";
    double level = 0.95;
    double alpha = 0.05;
    est->add_option("csv", est_csv, "Experiment CSV")->required();
    est->add_option("--estimator", estimator, "design | hier | hier-cov | pretest")
        ->check(CLI::IsMember({"design", "hier", "hier-nocov", "hier-cov", "pretest"}))
        ->capture_default_str();
    est->add_option("--level", level, "Confidence level")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    est->add_option("--alpha", alpha, "Pretest significance level")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();

    auto* match = app.add_subcommand("match", "Pair clusters on covariates");
    std::string match_csv;
    std::string method = "optimal";
    std::optional<std::size_t> bins;
    std::optional<double> ridge;
    match->add_option("csv", match_csv, "Covariate CSV (cluster_id,cov1,...)")->required();
    match->add_option("--method", method, "optimal | greedy | cem")
        ->check(CLI::IsMember({"optimal", "greedy", "cem"}))
        ->capture_default_str();
    match->add_option("--bins", bins, "CEM bins per covariate (default: Sturges)")
        ->check(CLI::PositiveNumber);
    match->add_option("--ridge", ridge, "Ridge added to the covariance diagonal")
        ->check(CLI::NonNegativeNumber);

    auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo plan");
    std::string plan_path;
    std::optional<std::size_t> sim_iterations;
    sim->add_option("--plan", plan_path, "Simulation plan (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    sim->add_option("--iterations", sim_iterations, "Override the plan's iteration count")
        ->check(CLI::PositiveNumber);

    auto* fig = app.add_subcommand("figure1", "Run both reference scenarios end to end");
    std::size_t fig_iterations = 1000;
    std::vector<double> fig_grid;
    fig->add_option("--iterations", fig_iterations, "Iterations per grid point")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    fig->add_option("--grid", fig_grid, "sigma_delta grid (default 0,0.5,...,5)")
        ->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (show_version) {
        std::cout << "pairsim " << PAIRSIM_VERSION << "\n" << kProvenanceNote << '\n';
        return 0;
    }

    try {
        if (gen->parsed()) return run_generate(g, config_path);
        if (est->parsed()) return run_estimate(g, est_csv, estimator, level, alpha);
        if (match->parsed()) return run_match(g, match_csv, method, bins, ridge);
        if (sim->parsed()) return run_simulate(g, plan_path, sim_iterations);
        if (fig->parsed()) return run_figure1(g, fig_iterations, fig_grid);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    std::cerr << app.help();
    return 2;
}
