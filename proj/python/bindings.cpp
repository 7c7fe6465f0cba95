#include "pairsim/csv_io.hpp"
#include "pairsim/dgp.hpp"
#include "pairsim/estimators.hpp"
#include "pairsim/figure.hpp"
#include "pairsim/manifest.hpp"
#include "pairsim/matching.hpp"
#include "pairsim/montecarlo.hpp"

#include <nlohmann/json.hpp>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

namespace py = pybind11;
using nlohmann::json;

namespace {

py::dict generate(const std::string& config_json, std::optional<std::uint64_t> seed) {
    auto config = json::parse(config_json).get<pairsim::DgpConfig>();
    if (seed) config.seed = *seed;
    config.validate();
    const auto ex = pairsim::generate_experiment(config);
    std::ostringstream data, truth;
    pairsim::write_experiment_csv(data, ex.data);
    pairsim::write_truth_csv(truth, ex.truth);
    py::dict out;
    out["data_csv"] = data.str();
    out["truth_csv"] = truth.str();
    out["sate"] = pairsim::true_estimand(ex.truth);
    return out;
}

py::dict estimate(const std::string& data_csv, const std::string& estimator, double level,
                  double alpha) {
    std::istringstream in(data_csv);
    const auto data = pairsim::read_experiment_csv(in, "<data>");
    const auto kind = pairsim::estimator_from_string(estimator);
    pairsim::EstimateResult r;
    {
        py::gil_scoped_release release;
        if (kind == pairsim::EstimatorKind::Pretest) {
            pairsim::FitOptions options;
            options.level = level;
            r = pairsim::lr_pretest_estimate(data, alpha, pairsim::Link::identity(), options);
        } else {
            r = pairsim::estimate(data, kind, level);
        }
    }
    py::dict out;
    out["estimator"] = pairsim::to_string(r.estimator);
    out["estimate"] = r.estimate;
    out["std_error"] = r.std_error;
    out["ci"] = r.ci ? py::object(py::make_tuple(r.ci->lo, r.ci->hi)) : py::object(py::none());
    out["level"] = r.level;
    out["converged"] = r.converged;
    out["branch"] = r.pretest ? py::object(py::str(pairsim::to_string(r.pretest->branch)))
                              : py::object(py::none());
    out["warnings"] = r.warnings;
    return out;
}

py::dict match(const Eigen::MatrixXd& values, const std::string& method_name,
               std::optional<std::size_t> bins, std::optional<double> ridge) {
    std::vector<std::string> ids, names;
    for (Eigen::Index i = 0; i < values.rows(); ++i) ids.push_back(std::to_string(i));
    for (Eigen::Index j = 0; j < values.cols(); ++j) names.push_back("x" + std::to_string(j + 1));
    const pairsim::CovariateMatrix cov(ids, names, values);
    const auto method = pairsim::pairing_method_from_string(method_name);
    pairsim::PairingResult r;
    if (method == pairsim::PairingMethod::Cem) {
        const std::size_t b = bins ? *bins : pairsim::sturges_bins(static_cast<std::size_t>(cov.clusters()));
        r = pairsim::cem_pairing(cov, std::vector<std::size_t>(cov.covariates(), b), ridge);
    } else {
        const auto d = pairsim::mahalanobis_matrix(cov, ridge);
        r = method == pairsim::PairingMethod::Optimal ? pairsim::optimal_pairing(d)
                                                      : pairsim::greedy_pairing(d);
    }
    py::list pairs;
    for (const auto& p : r.pairs) pairs.append(py::make_tuple(p.a, p.b, p.distance));
    py::dict out;
    out["method"] = pairsim::to_string(method);
    out["pairs"] = pairs;
    out["total_distance"] = r.total_distance;
    out["unmatched"] = r.unmatched;
    out["bin_widths"] = r.bin_widths;
    return out;
}

py::list rows_to_python(const std::vector<pairsim::MetricsRow>& rows) {
    py::list out;
    for (const auto& r : rows) {
        py::dict d;
        d["scenario"] = r.scenario;
        d["sigma_delta"] = r.sigma_delta;
        d["estimator"] = pairsim::to_string(r.estimator);
        d["bias"] = r.bias;
        d["bias_se"] = r.bias_se;
        d["rmse"] = r.rmse;
        d["rmse_se"] = r.rmse_se;
        d["coverage"] = r.coverage;
        d["coverage_se"] = r.coverage_se;
        d["n_iter"] = r.n_iter;
        d["n_fail"] = r.n_fail;
        out.append(d);
    }
    return out;
}

std::vector<pairsim::MetricsRow> run_plans(std::vector<pairsim::SimulationPlan> plans,
                                           std::size_t workers) {
    std::vector<pairsim::MetricsRow> rows;
    py::gil_scoped_release release;
    for (auto& plan : plans) {
        plan.resolve_eta();
        plan.validate();
        auto part = pairsim::run_sweep(plan, workers);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    return rows;
}

py::list simulate(const std::string& plan_json, std::size_t workers) {
    return rows_to_python(run_plans({json::parse(plan_json).get<pairsim::SimulationPlan>()}, workers));
}

py::dict figure1(std::size_t iterations, std::vector<double> grid, std::uint64_t seed,
                 std::size_t workers) {
    auto plans = pairsim::figure1_plans(seed, iterations);
    if (!grid.empty()) {
        for (auto& p : plans) p.sigma_delta_grid = grid;
    }
    const auto rows = run_plans(plans, workers);
    std::ostringstream metrics;
    pairsim::write_metrics_csv(metrics, rows);
    py::dict out;
    out["rows"] = rows_to_python(rows);
    out["metrics_csv"] = metrics.str();
    out["svg"] = pairsim::render_figure_svg(rows);
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Matched-pair cluster-randomized experiment simulation and estimation.";
    m.attr("__version__") = PAIRSIM_VERSION;

    py::register_exception<pairsim::InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<pairsim::CellAborted>(m, "CellAborted", PyExc_RuntimeError);

    m.def("generate", &generate, py::arg("config_json"), py::arg("seed") = py::none(),
          "Draw one experiment; returns the observed and potential-outcome CSV text.");
    m.def("estimate", &estimate, py::arg("data_csv"), py::arg("estimator") = "design",
          py::arg("level") = 0.95, py::arg("alpha") = 0.05);
    m.def("match", &match, py::arg("covariates"), py::arg("method") = "optimal",
          py::arg("bins") = py::none(), py::arg("ridge") = py::none());
    m.def("simulate", &simulate, py::arg("plan_json"), py::arg("workers") = 1);
    m.def("figure1", &figure1, py::arg("iterations") = 1000,
          py::arg("grid") = std::vector<double>{}, py::arg("seed") = 42, py::arg("workers") = 1);
    m.def("sha256_hex", &pairsim::sha256_hex);
}
