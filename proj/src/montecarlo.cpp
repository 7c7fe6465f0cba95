#include "pairsim/montecarlo.hpp"

#include "pairsim/estimators.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "pairsim/csv_io.hpp"

namespace pairsim {

namespace {

constexpr std::uint64_t kEtaTag = 0x657461;

bool needs_eta(CovariateScenario s) {
    return s == CovariateScenario::PostTreatmentNonlinear ||
           s == CovariateScenario::PreTreatmentNonlinear;
}

std::uint64_t scenario_index(const SimulationPlan& plan) {
    return static_cast<std::uint64_t>(plan.base.scenario);
}

struct Outcome {
    bool ok = false;
    double error = 0.0;
    bool hit = false;
};

}  // namespace

void SimulationPlan::validate() const {
    base.validate();
    if (sigma_delta_grid.empty()) throw std::invalid_argument("plan: sigma_delta_grid is empty");
    for (double s : sigma_delta_grid) {
        if (!std::isfinite(s) || s < 0.0)
            throw std::invalid_argument("plan: sigma_delta_grid values must be finite and >= 0");
    }
    if (estimators.empty()) throw std::invalid_argument("plan: no estimators");
    if (base.scenario == CovariateScenario::None) {
        for (auto e : estimators) {
            if (e == EstimatorKind::HierCov || e == EstimatorKind::Pretest)
                throw std::invalid_argument("plan: estimator '" + to_string(e) +
                                            "' needs a covariate scenario");
        }
    }
    if (iterations == 0) throw std::invalid_argument("plan: iterations must be positive");
    if (!eta.empty() && eta.size() != 2 * base.pairs) {
        std::ostringstream msg;
        msg << "plan: eta holds " << eta.size() << " values, expected " << 2 * base.pairs;
        throw std::invalid_argument(msg.str());
    }
}

void SimulationPlan::resolve_eta() {
    if (!eta.empty() || !needs_eta(base.scenario)) return;
    Rng rng(derive_seed(master_seed, {scenario_index(*this), kEtaTag}));
    eta = draw_eta(base.pairs, base.sigma_eta_sq, rng);
}

void to_json(nlohmann::json& j, const SimulationPlan& plan) {
    std::vector<std::string> names;
    for (auto e : plan.estimators) names.push_back(to_string(e));
    nlohmann::json dgp = plan.base;
    dgp.erase("seed");
    dgp.erase("randomization_seed");
    dgp.erase("eta");
    j = nlohmann::json{{"dgp", dgp},
                       {"sigma_delta_grid", plan.sigma_delta_grid},
                       {"estimators", names},
                       {"iterations", plan.iterations},
                       {"master_seed", plan.master_seed}};
    if (!plan.eta.empty()) j["eta"] = plan.eta;
}

void from_json(const nlohmann::json& j, SimulationPlan& plan) {
    static const std::set<std::string> known{"dgp", "sigma_delta_grid", "estimators",
                                             "iterations", "master_seed", "eta"};
    if (!j.is_object()) throw std::invalid_argument("plan: expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw std::invalid_argument("plan: unknown key '" + key + "'");
    }
    SimulationPlan out;
    if (j.contains("dgp")) out.base = j.at("dgp").get<DgpConfig>();
    if (j.contains("sigma_delta_grid"))
        out.sigma_delta_grid = j.at("sigma_delta_grid").get<std::vector<double>>();
    if (j.contains("estimators")) {
        out.estimators.clear();
        for (const auto& name : j.at("estimators")) {
            out.estimators.push_back(estimator_from_string(name.get<std::string>()));
        }
    }
    if (j.contains("iterations")) out.iterations = j.at("iterations").get<std::size_t>();
    if (j.contains("master_seed")) out.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("eta")) out.eta = j.at("eta").get<std::vector<double>>();
    out.validate();
    plan = std::move(out);
}

double true_estimand(const PotentialOutcomeTable& truth) {
    std::vector<std::size_t> sizes;
    for (const auto& p : truth.pairs) {
        for (const auto& c : p.clusters) sizes.push_back(c.size());
    }
    return true_estimand(truth, sizes);
}

double true_estimand(const PotentialOutcomeTable& truth, std::span<const std::size_t> sizes) {
    if (sizes.size() != 2 * truth.pairs.size())
        throw std::invalid_argument("true_estimand: one size per cluster required");
    std::vector<double> weighted;
    double total = 0.0;
    std::size_t i = 0;
    for (const auto& p : truth.pairs) {
        for (const auto& c : p.clusters) {
            const double n = static_cast<double>(sizes[i++]);
            weighted.push_back(n * c.tau);
            total += n;
        }
    }
    if (total <= 0.0) throw std::invalid_argument("true_estimand: no individuals");
    return pairwise_sum(weighted) / total;
}

double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 8) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

std::uint64_t iteration_seed(const SimulationPlan& plan, std::size_t grid_index,
                             std::size_t iteration) {
    return derive_seed(plan.master_seed,
                       {scenario_index(plan), static_cast<std::uint64_t>(grid_index),
                        static_cast<std::uint64_t>(iteration)});
}

MetricsRow summarize_errors(std::span<const double> errors, std::span<const char> hits,
                            std::size_t n_iter) {
    if (errors.size() != hits.size())
        throw std::invalid_argument("summarize_errors: errors and hits differ in length");
    const std::size_t n = errors.size();
    MetricsRow row;
    row.n_iter = n_iter;
    row.n_fail = n_iter >= n ? n_iter - n : 0;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (n == 0) {
        row.bias = row.bias_se = row.rmse = row.rmse_se = row.coverage = row.coverage_se = nan;
        row.error_variance = nan;
        return row;
    }
    const double dn = static_cast<double>(n);
    std::vector<double> sq(n);
    std::vector<double> hit_values(n);
    for (std::size_t i = 0; i < n; ++i) {
        sq[i] = errors[i] * errors[i];
        hit_values[i] = hits[i] ? 1.0 : 0.0;
    }
    row.bias = pairwise_sum(errors) / dn;
    const double mse = pairwise_sum(sq) / dn;
    row.rmse = std::sqrt(mse);
    row.coverage = pairwise_sum(hit_values) / dn;

    std::vector<double> dev(n);
    std::vector<double> dev_sq(n);
    for (std::size_t i = 0; i < n; ++i) {
        dev[i] = (errors[i] - row.bias) * (errors[i] - row.bias);
        dev_sq[i] = (sq[i] - mse) * (sq[i] - mse);
    }
    const double ss = pairwise_sum(dev);
    row.error_variance = ss / dn;
    if (n > 1) {
        const double sd = std::sqrt(ss / (dn - 1.0));
        const double sd_sq = std::sqrt(pairwise_sum(dev_sq) / (dn - 1.0));
        row.bias_se = sd / std::sqrt(dn);
        row.rmse_se = row.rmse > 0.0 ? sd_sq / (2.0 * row.rmse * std::sqrt(dn)) : 0.0;
    } else {
        row.bias_se = nan;
        row.rmse_se = nan;
    }
    row.coverage_se = std::sqrt(row.coverage * (1.0 - row.coverage) / dn);
    return row;
}

std::vector<MetricsRow> run_grid_point(const SimulationPlan& plan, std::size_t grid_index,
                                       std::size_t workers) {
    plan.validate();
    if (grid_index >= plan.sigma_delta_grid.size())
        throw std::out_of_range("run_grid_point: grid index out of range");
    SimulationPlan resolved = plan;
    resolved.resolve_eta();

    const std::size_t n_est = resolved.estimators.size();
    const std::size_t iterations = resolved.iterations;
    std::vector<Outcome> outcomes(iterations * n_est);

    const auto run_iteration = [&](std::size_t it) {
        DgpConfig config = resolved.base;
        config.sigma_delta = resolved.sigma_delta_grid[grid_index];
        config.seed = iteration_seed(resolved, grid_index, it);
        config.randomization_seed.reset();
        config.eta = resolved.eta;
        GeneratedExperiment ex;
        double target = 0.0;
        try {
            ex = generate_experiment(config);
            target = true_estimand(ex.truth);
        } catch (const std::domain_error&) {
            return;  // every estimator fails on this replicate
        }
        for (std::size_t e = 0; e < n_est; ++e) {
            Outcome& out = outcomes[it * n_est + e];
            try {
                const EstimateResult r = estimate(ex.data, resolved.estimators[e]);
                if (!r.converged || !std::isfinite(r.estimate) || !r.ci) continue;
                out.ok = true;
                out.error = r.estimate - target;
                out.hit = r.ci->contains(target);
            } catch (const std::exception&) {
                out.ok = false;
            }
        }
    };

    const std::size_t n_workers = std::max<std::size_t>(1, std::min(workers, iterations));
    if (n_workers == 1) {
        for (std::size_t it = 0; it < iterations; ++it) run_iteration(it);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (std::size_t w = 0; w < n_workers; ++w) {
            pool.emplace_back([&] {
                try {
                    for (std::size_t it = next++; it < iterations; it = next++) run_iteration(it);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    std::vector<MetricsRow> rows;
    for (std::size_t e = 0; e < n_est; ++e) {
        std::vector<double> errors;
        std::vector<char> hits;
        for (std::size_t it = 0; it < iterations; ++it) {
            const Outcome& o = outcomes[it * n_est + e];
            if (!o.ok) continue;
            errors.push_back(o.error);
            hits.push_back(o.hit ? 1 : 0);
        }
        MetricsRow row = summarize_errors(errors, hits, iterations);
        row.scenario = to_string(resolved.base.scenario);
        row.sigma_delta = resolved.sigma_delta_grid[grid_index];
        row.estimator = resolved.estimators[e];
        if (10 * row.n_fail > iterations) {
            std::ostringstream msg;
            msg << "cell aborted: scenario " << row.scenario << ", sigma_delta "
                << format_double(row.sigma_delta) << ", estimator " << to_string(row.estimator)
                << ": " << row.n_fail << " of " << iterations << " iterations failed";
            throw CellAborted(msg.str());
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

MetricsRow run_cell(const SimulationPlan& plan, double sigma_delta, EstimatorKind estimator,
                    std::size_t workers) {
    SimulationPlan single = plan;
    single.estimators = {estimator};
    std::size_t grid_index = single.sigma_delta_grid.size();
    for (std::size_t g = 0; g < single.sigma_delta_grid.size(); ++g) {
        if (single.sigma_delta_grid[g] == sigma_delta) {
            grid_index = g;
            break;
        }
    }
    if (grid_index == single.sigma_delta_grid.size()) {
        single.sigma_delta_grid.push_back(sigma_delta);
    }
    return run_grid_point(single, grid_index, workers).front();
}

std::vector<MetricsRow> run_sweep(const SimulationPlan& plan, std::size_t workers) {
    plan.validate();
    SimulationPlan resolved = plan;
    resolved.resolve_eta();
    const std::size_t n_grid = resolved.sigma_delta_grid.size();
    const std::size_t n_est = resolved.estimators.size();
    std::vector<std::vector<MetricsRow>> by_grid;
    by_grid.reserve(n_grid);
    for (std::size_t g = 0; g < n_grid; ++g) by_grid.push_back(run_grid_point(resolved, g, workers));
    std::vector<MetricsRow> rows;
    rows.reserve(n_grid * n_est);
    for (std::size_t e = 0; e < n_est; ++e) {
        for (std::size_t g = 0; g < n_grid; ++g) rows.push_back(by_grid[g][e]);
    }
    return rows;
}

std::vector<SimulationPlan> figure1_plans(std::uint64_t master_seed, std::size_t iterations) {
    SimulationPlan post;
    post.base.scenario = CovariateScenario::PostTreatmentNonlinear;
    post.base.randomization = RandomizationScheme::ProperPair;
    post.base.truncation = 2.0;
    post.base.pairs = 20;
    post.base.mean_cluster_size = 50;
    post.iterations = iterations;
    post.master_seed = master_seed;

    SimulationPlan pre = post;
    pre.base.scenario = CovariateScenario::PreTreatmentNonlinear;
    pre.base.pairs = 10;
    pre.base.mean_cluster_size = 15;

    post.resolve_eta();
    pre.resolve_eta();
    return {post, pre};
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
    out << kMetricsHeader << '\n';
    for (const auto& r : rows) {
        out << r.scenario << ',' << format_double(r.sigma_delta) << ',' << to_string(r.estimator)
            << ',' << format_double(r.bias) << ',' << format_double(r.bias_se) << ','
            << format_double(r.rmse) << ',' << format_double(r.rmse_se) << ','
            << format_double(r.coverage) << ',' << format_double(r.coverage_se) << ','
            << r.n_iter << ',' << r.n_fail << '\n';
    }
}

}  // namespace pairsim
