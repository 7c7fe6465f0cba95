#pragma once

#include "pairsim/core_model.hpp"
#include "pairsim/dgp.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pairsim {

struct SimulationPlan {
    DgpConfig base;
    std::vector<double> sigma_delta_grid{0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0};
    std::vector<EstimatorKind> estimators{EstimatorKind::DesignBased, EstimatorKind::HierCov,
                                          EstimatorKind::Pretest};
    std::size_t iterations = 2000;
    std::uint64_t master_seed = 42;
    // Per-cluster η, fixed across every iteration and grid point.
    std::vector<double> eta;

    void validate() const;
    // Draws η from the plan's dedicated sub-seed if the scenario needs it
    // and none were supplied.
    void resolve_eta();
};

void to_json(nlohmann::json& j, const SimulationPlan& plan);
void from_json(const nlohmann::json& j, SimulationPlan& plan);

struct MetricsRow {
    std::string scenario;
    double sigma_delta = 0.0;
    EstimatorKind estimator = EstimatorKind::DesignBased;
    double bias = 0.0;
    double bias_se = 0.0;
    double rmse = 0.0;
    double rmse_se = 0.0;
    double error_variance = 0.0;  // population variance of the errors
    double coverage = 0.0;
    double coverage_se = 0.0;
    std::size_t n_iter = 0;  // iterations attempted
    std::size_t n_fail = 0;  // excluded from every metric
};

class CellAborted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Size-weighted sample average treatment effect Σ n_jk τ_jk / Σ n_jk.
double true_estimand(const PotentialOutcomeTable& truth);
double true_estimand(const PotentialOutcomeTable& truth, std::span<const std::size_t> sizes);

// Seed of one replicate: (master, scenario, grid point, iteration).
std::uint64_t iteration_seed(const SimulationPlan& plan, std::size_t grid_index,
                             std::size_t iteration);

// Every estimator of the plan at one grid point; all estimators see the same
// generated datasets.
std::vector<MetricsRow> run_grid_point(const SimulationPlan& plan, std::size_t grid_index,
                                       std::size_t workers = 1);

MetricsRow run_cell(const SimulationPlan& plan, double sigma_delta, EstimatorKind estimator,
                    std::size_t workers = 1);

// Rows ordered by (estimator in plan order, σ_δ).
std::vector<MetricsRow> run_sweep(const SimulationPlan& plan, std::size_t workers = 1);

// Aggregates per-iteration errors and interval hits (iteration order).
MetricsRow summarize_errors(std::span<const double> errors, std::span<const char> hits,
                            std::size_t n_iter);

// Deterministic pairwise summation.
double pairwise_sum(std::span<const double> values);

// The two reference studies: post-treatment nonlinear covariate with 20
// pairs of mean cluster size 50, and pre-treatment nonlinear covariate with
// 10 pairs of mean size 15. Both use proper randomization and truncation at 2.
std::vector<SimulationPlan> figure1_plans(std::uint64_t master_seed, std::size_t iterations);

inline constexpr const char* kMetricsHeader =
    "scenario,sigma_delta,estimator,bias,bias_se,rmse,rmse_se,coverage,coverage_se,n_iter,n_fail";

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);

}  // namespace pairsim
