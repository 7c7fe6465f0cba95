#include "pairsim/montecarlo.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

using namespace pairsim;

namespace {

PotentialOutcomeTable truth_with(const std::vector<double>& taus, const std::vector<std::size_t>& sizes) {
    PotentialOutcomeTable t;
    for (std::size_t i = 0; i < taus.size(); i += 2) {
        PairTruth p;
        for (std::size_t j = 0; j < 2; ++j) {
            auto& c = p.clusters[j];
            c.tau = taus[i + j];
            c.y0.assign(sizes[i + j], 0.0);
            c.y1.assign(sizes[i + j], c.tau);
            c.y1_mean = c.tau;
        }
        t.pairs.push_back(p);
    }
    return t;
}

SimulationPlan small_plan(CovariateScenario s, std::size_t iterations) {
    SimulationPlan plan;
    plan.base.scenario = s;
    plan.base.pairs = 6;
    plan.base.mean_cluster_size = 8;
    plan.sigma_delta_grid = {0.0, 2.0};
    plan.iterations = iterations;
    plan.master_seed = 7;
    plan.resolve_eta();
    return plan;
}

bool same_row(const MetricsRow& a, const MetricsRow& b) {
    auto eq = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
    return a.scenario == b.scenario && a.sigma_delta == b.sigma_delta && a.estimator == b.estimator &&
           eq(a.bias, b.bias) && eq(a.bias_se, b.bias_se) && eq(a.rmse, b.rmse) &&
           eq(a.rmse_se, b.rmse_se) && eq(a.coverage, b.coverage) &&
           eq(a.coverage_se, b.coverage_se) && eq(a.error_variance, b.error_variance) &&
           a.n_iter == b.n_iter && a.n_fail == b.n_fail;
}

}  // namespace

TEST_CASE("true estimand weights clusters by size") {
    CHECK(true_estimand(truth_with({1.0, 3.0}, {1, 3})) == 2.5);
    CHECK(true_estimand(truth_with({1.0, 2.0, 3.0, 4.0}, {5, 5, 5, 5})) == 2.5);
    CHECK(true_estimand(truth_with({0.7, 0.7, 0.7, 0.7}, {1, 9, 4, 2})) == doctest::Approx(0.7));
    const std::vector<std::size_t> override_sizes{3, 1};
    CHECK(true_estimand(truth_with({1.0, 3.0}, {1, 3}), override_sizes) == 1.5);
    const std::vector<std::size_t> wrong{1};
    CHECK_THROWS_AS(true_estimand(truth_with({1.0, 3.0}, {1, 3}), wrong), std::invalid_argument);
}

TEST_CASE("pairwise summation") {
    std::vector<double> v(1000);
    std::iota(v.begin(), v.end(), 1.0);
    CHECK(pairwise_sum(v) == 500500.0);
    CHECK(pairwise_sum(std::span<const double>{}) == 0.0);
    std::vector<double> tiny(1 << 20, 0.1);
    CHECK(std::abs(pairwise_sum(tiny) - 0.1 * tiny.size()) < 1e-6);
}

TEST_CASE("summary statistics of a single error") {
    const std::vector<double> e{-0.75};
    const std::vector<char> hit{1};
    const auto r = summarize_errors(e, hit, 1);
    CHECK(r.bias == -0.75);
    CHECK(r.rmse == 0.75);
    CHECK(r.coverage == 1.0);
    CHECK(std::isnan(r.bias_se));
}

TEST_CASE("RMSE squared equals bias squared plus error variance") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> z(0.4, 2.0);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> e(5 + rep * 7);
        std::vector<char> hit(e.size());
        for (std::size_t i = 0; i < e.size(); ++i) {
            e[i] = z(gen);
            hit[i] = static_cast<char>(i % 3 != 0);
        }
        const auto r = summarize_errors(e, hit, e.size());
        const double lhs = r.rmse * r.rmse;
        const double rhs = r.bias * r.bias + r.error_variance;
        CHECK(std::abs(lhs - rhs) <= 1e-10 * lhs);
        CHECK(r.coverage >= 0.0);
        CHECK(r.coverage <= 1.0);
        double mean = 0.0;
        for (double x : e) mean += x;
        mean /= static_cast<double>(e.size());
        double ss = 0.0;
        for (double x : e) ss += (x - mean) * (x - mean);
        const double sd = std::sqrt(ss / static_cast<double>(e.size() - 1));
        CHECK(r.bias_se == doctest::Approx(sd / std::sqrt(static_cast<double>(e.size()))));
    }
}

TEST_CASE("one iteration gives RMSE equal to absolute bias") {
    auto plan = small_plan(CovariateScenario::PreTreatmentNonlinear, 1);
    const auto row = run_cell(plan, 1.0, EstimatorKind::DesignBased);
    CHECK(row.n_iter == 1);
    CHECK(row.rmse == std::abs(row.bias));
}

TEST_CASE("metrics do not depend on the worker count") {
    auto plan = small_plan(CovariateScenario::PostTreatmentNonlinear, 60);
    plan.estimators = {EstimatorKind::DesignBased, EstimatorKind::HierNoCov, EstimatorKind::HierCov,
                       EstimatorKind::Pretest};
    const auto serial = run_sweep(plan, 1);
    const auto parallel = run_sweep(plan, 4);
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) CHECK(same_row(serial[i], parallel[i]));
    std::ostringstream a, b;
    write_metrics_csv(a, serial);
    write_metrics_csv(b, parallel);
    CHECK(a.str() == b.str());
}

TEST_CASE("sweep layout") {
    auto plan = small_plan(CovariateScenario::PostTreatmentLinear, 5);
    const auto rows = run_sweep(plan);
    REQUIRE(rows.size() == 6);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(rows[2 * e].estimator == plan.estimators[e]);
        CHECK(rows[2 * e].sigma_delta == 0.0);
        CHECK(rows[2 * e + 1].sigma_delta == 2.0);
    }
    plan.sigma_delta_grid = {1.0};
    plan.estimators = {EstimatorKind::DesignBased};
    CHECK(run_sweep(plan).size() == 1);

    std::ostringstream out;
    write_metrics_csv(out, rows);
    std::string header;
    std::istringstream in(out.str());
    std::getline(in, header);
    CHECK(header == kMetricsHeader);
}

TEST_CASE("iteration seeds are distinct across grid points and iterations") {
    const auto plan = small_plan(CovariateScenario::PostTreatmentLinear, 10);
    CHECK(iteration_seed(plan, 0, 0) != iteration_seed(plan, 1, 0));
    CHECK(iteration_seed(plan, 0, 0) != iteration_seed(plan, 0, 1));
    auto other = plan;
    other.base.scenario = CovariateScenario::PreTreatmentNonlinear;
    CHECK(iteration_seed(plan, 0, 0) != iteration_seed(other, 0, 0));
}

TEST_CASE("doubling iterations shrinks the bias standard error by about root two") {
    auto plan = small_plan(CovariateScenario::PostTreatmentLinear, 800);
    const auto a = run_cell(plan, 2.0, EstimatorKind::DesignBased, 4);
    plan.iterations = 1600;
    const auto b = run_cell(plan, 2.0, EstimatorKind::DesignBased, 4);
    const double ratio = a.bias_se / b.bias_se;
    CHECK(ratio >= 1.30);
    CHECK(ratio <= 1.53);
}

TEST_CASE("pre-treatment covariate without imbalance leaves every estimator unbiased") {
    auto plan = figure1_plans(11, 600)[1];
    plan.sigma_delta_grid = {0.0};
    plan.estimators = {EstimatorKind::DesignBased, EstimatorKind::HierNoCov, EstimatorKind::HierCov,
                       EstimatorKind::Pretest};
    for (const auto& row : run_sweep(plan, 4)) {
        INFO(to_string(row.estimator));
        CHECK(std::abs(row.bias) <= 4.0 * row.bias_se);
        CHECK(row.n_fail == 0);
    }
}

TEST_CASE("design-based coverage in the pre-treatment study is near nominal") {
    auto plan = figure1_plans(42, 2000)[1];
    const auto row = run_cell(plan, 0.0, EstimatorKind::DesignBased, 4);
    CHECK(row.coverage >= 0.93);
    CHECK(row.coverage <= 0.97);
}

TEST_CASE("plan validation and serialization") {
    auto plan = small_plan(CovariateScenario::PostTreatmentNonlinear, 25);
    nlohmann::json j = plan;
    const auto back = j.get<SimulationPlan>();
    CHECK(back.iterations == 25);
    CHECK(back.master_seed == 7);
    CHECK(back.sigma_delta_grid == plan.sigma_delta_grid);
    CHECK(back.estimators == plan.estimators);
    CHECK(back.eta == plan.eta);
    CHECK(back.base.pairs == 6);

    auto bad = j;
    bad["iteratons"] = 3;
    CHECK_THROWS(bad.get<SimulationPlan>());

    SimulationPlan p = plan;
    p.iterations = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = plan;
    p.sigma_delta_grid = {-1.0};
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = plan;
    p.sigma_delta_grid.clear();
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = plan;
    p.base.scenario = CovariateScenario::None;
    p.eta.clear();
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("reference study plans") {
    const auto plans = figure1_plans(42, 10);
    REQUIRE(plans.size() == 2);
    CHECK(plans[0].base.scenario == CovariateScenario::PostTreatmentNonlinear);
    CHECK(plans[0].base.pairs == 20);
    CHECK(plans[0].base.mean_cluster_size == 50);
    CHECK(plans[1].base.scenario == CovariateScenario::PreTreatmentNonlinear);
    CHECK(plans[1].base.pairs == 10);
    CHECK(plans[1].base.mean_cluster_size == 15);
    CHECK(plans[0].eta.size() == 40);
    CHECK(plans[1].eta.size() == 20);
    CHECK(plans[0].base.randomization == RandomizationScheme::ProperPair);
}
