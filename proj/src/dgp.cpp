#include "pairsim/dgp.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace pairsim {

std::string to_string(CovariateScenario s) {
    switch (s) {
        case CovariateScenario::None: return "none";
        case CovariateScenario::PostTreatmentLinear: return "post_treatment_linear";
        case CovariateScenario::PostTreatmentNonlinear: return "post_treatment_nonlinear";
        case CovariateScenario::PreTreatmentNonlinear: return "pre_treatment_nonlinear";
    }
    return "unknown";
}

std::string to_string(RandomizationScheme s) {
    switch (s) {
        case RandomizationScheme::HillScottFixed: return "hill_scott_fixed";
        case RandomizationScheme::ProperPair: return "proper_pair";
    }
    return "unknown";
}

CovariateScenario scenario_from_string(const std::string& name) {
    for (auto s : {CovariateScenario::None, CovariateScenario::PostTreatmentLinear,
                   CovariateScenario::PostTreatmentNonlinear,
                   CovariateScenario::PreTreatmentNonlinear}) {
        if (to_string(s) == name) return s;
    }
    throw std::invalid_argument("unknown covariate scenario '" + name + "'");
}

RandomizationScheme randomization_from_string(const std::string& name) {
    if (name == "hill_scott_fixed") return RandomizationScheme::HillScottFixed;
    if (name == "proper_pair") return RandomizationScheme::ProperPair;
    throw std::invalid_argument("unknown randomization scheme '" + name + "'");
}

void DgpConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("DgpConfig: " + what); };
    for (auto [name, value] : {std::pair{"sigma0", sigma0}, {"sigma_delta", sigma_delta},
                               {"sigma_epsilon", sigma_epsilon}, {"sigma_zeta", sigma_zeta},
                               {"sigma_eta_sq", sigma_eta_sq}}) {
        if (!(value >= 0.0) || !std::isfinite(value)) {
            fail(std::string(name) + " must be a finite non-negative number");
        }
    }
    if (!std::isfinite(mu0)) fail("mu0 must be finite");
    if (!std::isfinite(effect_numerator)) fail("effect_numerator must be finite");
    if (pairs < 1) fail("pairs must be at least 1");
    if (mean_cluster_size < 1) fail("mean_cluster_size must be at least 1");
    if (truncation) {
        if (!(*truncation > 0.0) || !std::isfinite(*truncation)) {
            fail("truncation point must be positive");
        }
        if (sigma0 == 0.0 && !(mu0 > *truncation)) {
            fail("sigma0 = 0 requires mu0 above the truncation point");
        }
    }
    if (!eta.empty() && eta.size() != 2 * pairs) {
        fail("eta must hold one value per cluster (2 * pairs)");
    }
}

void to_json(nlohmann::json& j, const DgpConfig& c) {
    j = nlohmann::json{
        {"mu0", c.mu0},
        {"sigma0", c.sigma0},
        {"sigma_delta", c.sigma_delta},
        {"sigma_epsilon", c.sigma_epsilon},
        {"sigma_zeta", c.sigma_zeta},
        {"sigma_eta_sq", c.sigma_eta_sq},
        {"truncation", c.truncation ? nlohmann::json(*c.truncation) : nlohmann::json(nullptr)},
        {"effect_numerator", c.effect_numerator},
        {"pairs", c.pairs},
        {"mean_cluster_size", c.mean_cluster_size},
        {"scenario", to_string(c.scenario)},
        {"randomization", to_string(c.randomization)},
        {"seed", c.seed},
    };
    if (c.randomization_seed) j["randomization_seed"] = *c.randomization_seed;
    if (!c.eta.empty()) j["eta"] = c.eta;
}

void from_json(const nlohmann::json& j, DgpConfig& c) {
    static const std::set<std::string> known = {
        "mu0", "sigma0", "sigma_delta", "sigma_epsilon", "sigma_zeta", "sigma_eta_sq",
        "truncation", "effect_numerator", "pairs", "mean_cluster_size", "scenario",
        "randomization", "seed", "randomization_seed", "eta"};
    if (!j.is_object()) throw std::invalid_argument("DgpConfig JSON must be an object");
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw std::invalid_argument("DgpConfig: unknown field '" + key + "'");
    }
    DgpConfig d;
    d.mu0 = j.value("mu0", d.mu0);
    d.sigma0 = j.value("sigma0", d.sigma0);
    d.sigma_delta = j.value("sigma_delta", d.sigma_delta);
    d.sigma_epsilon = j.value("sigma_epsilon", d.sigma_epsilon);
    d.sigma_zeta = j.value("sigma_zeta", d.sigma_zeta);
    d.sigma_eta_sq = j.value("sigma_eta_sq", d.sigma_eta_sq);
    if (j.contains("truncation")) {
        if (j["truncation"].is_null()) {
            d.truncation.reset();
        } else {
            d.truncation = j["truncation"].get<double>();
        }
    }
    d.effect_numerator = j.value("effect_numerator", d.effect_numerator);
    d.pairs = j.value("pairs", d.pairs);
    d.mean_cluster_size = j.value("mean_cluster_size", d.mean_cluster_size);
    if (j.contains("scenario")) d.scenario = scenario_from_string(j["scenario"].get<std::string>());
    if (j.contains("randomization")) {
        d.randomization = randomization_from_string(j["randomization"].get<std::string>());
    }
    d.seed = j.value("seed", d.seed);
    if (j.contains("randomization_seed") && !j["randomization_seed"].is_null()) {
        d.randomization_seed = j["randomization_seed"].get<std::uint64_t>();
    }
    if (j.contains("eta")) d.eta = j["eta"].get<std::vector<double>>();
    c = std::move(d);
}

std::vector<BasePair> draw_base_outcomes(const DgpConfig& config, Rng& rng) {
    std::vector<BasePair> base(config.pairs);
    for (auto& p : base) {
        if (config.truncation) {
            const double lower = *config.truncation;
            p.y1 = truncated_normal(rng, config.mu0, config.sigma0, lower);
            // Only δ is re-drawn so that Y.2k(0) = Y.1k(0) + δ_k keeps holding.
            do {
                p.delta = rng.normal(0.0, config.sigma_delta);
            } while (!(p.y1 + p.delta > lower));
        } else {
            p.y1 = rng.normal(config.mu0, config.sigma0);
            p.delta = rng.normal(0.0, config.sigma_delta);
        }
        p.y2 = p.y1 + p.delta;
    }
    return base;
}

PotentialOutcomeTable apply_treatment_effects(std::span<const BasePair> base,
                                              double effect_numerator) {
    PotentialOutcomeTable table;
    table.pairs.resize(base.size());
    for (std::size_t k = 0; k < base.size(); ++k) {
        PairTruth& pt = table.pairs[k];
        pt.delta = base[k].delta;
        const double y0[2] = {base[k].y1, base[k].y2};
        for (std::size_t j = 0; j < 2; ++j) {
            if (y0[j] == 0.0) {
                std::ostringstream msg;
                msg << "division by zero: Y.jk(0) = 0 at pair " << k + 1 << " cluster " << j + 1
                    << " (enable truncation to avoid this)";
                throw std::domain_error(msg.str());
            }
            ClusterTruth& c = pt.clusters[j];
            c.y0_mean = y0[j];
            c.tau = effect_numerator / y0[j];
            c.y1_mean = c.y0_mean + c.tau;
        }
    }
    return table;
}

std::vector<std::size_t> draw_cluster_sizes(std::size_t mean_cluster_size,
                                            std::size_t cluster_count, Rng& rng) {
    if (mean_cluster_size < 1) throw std::invalid_argument("mean cluster size must be at least 1");
    if (cluster_count == 0) return {};
    const std::size_t total = mean_cluster_size * cluster_count;
    std::vector<std::size_t> sizes(cluster_count, 0);
    // Multinomial with equal cell probabilities via sequential conditional binomials.
    std::size_t remaining = total;
    for (std::size_t i = 0; i + 1 < cluster_count; ++i) {
        const double p = 1.0 / static_cast<double>(cluster_count - i);
        std::binomial_distribution<std::size_t> bin(remaining, p);
        sizes[i] = bin(rng.engine());
        remaining -= sizes[i];
    }
    sizes.back() = remaining;

    for (auto& s : sizes) {
        if (s == 0) {
            auto largest = std::max_element(sizes.begin(), sizes.end());
            --*largest;
            s = 1;
        }
    }
    return sizes;
}

PotentialOutcomeTable draw_individual_outcomes(PotentialOutcomeTable table,
                                               std::span<const std::size_t> sizes,
                                               double sigma_epsilon, Rng& rng) {
    if (sizes.size() != 2 * table.pair_count()) {
        throw std::invalid_argument("cluster sizes do not match the outcome table");
    }
    for (std::size_t k = 0; k < table.pair_count(); ++k) {
        for (std::size_t j = 0; j < 2; ++j) {
            ClusterTruth& c = table.pairs[k].clusters[j];
            const std::size_t n = sizes[2 * k + j];
            c.y0.resize(n);
            c.y1.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                c.y0[i] = rng.normal(c.y0_mean, sigma_epsilon);
                c.y1[i] = c.y0[i] + c.tau;
            }
        }
    }
    return table;
}

Assignment randomize(RandomizationScheme scheme, std::size_t pairs, Rng& rng) {
    if (pairs < 1) throw std::invalid_argument("randomize: at least one pair required");
    Assignment t(pairs);
    for (auto& pair : t) {
        const bool first_treated =
            scheme == RandomizationScheme::ProperPair ? rng.coin() : false;
        pair = first_treated ? std::array<int, 2>{1, 0} : std::array<int, 2>{0, 1};
    }
    return t;
}

std::vector<double> draw_eta(std::size_t pairs, double sigma_eta_sq, Rng& rng) {
    std::vector<double> eta(2 * pairs);
    const double sd = std::sqrt(sigma_eta_sq);
    for (auto& e : eta) e = rng.normal(0.0, sd);
    return eta;
}

namespace {

double checked_log(double y, std::size_t k) {
    if (!(y > 0.0)) {
        std::ostringstream msg;
        msg << "log of non-positive control mean " << y << " at pair " << k + 1;
        throw std::domain_error(msg.str());
    }
    return std::log(y);
}

double checked_exp(double y, std::size_t k) {
    const double v = std::exp(y);
    if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "exp overflow for control mean " << y << " at pair " << k + 1;
        throw std::domain_error(msg.str());
    }
    return v;
}

}  // namespace

std::vector<double> generate_covariates(CovariateScenario scenario,
                                        const PotentialOutcomeTable& table,
                                        const Assignment& assignment, double sigma_zeta,
                                        std::span<const double> eta, Rng& noise_rng) {
    const std::size_t k_pairs = table.pair_count();
    if (scenario == CovariateScenario::None) return {};
    if (assignment.size() != k_pairs) {
        throw std::invalid_argument("generate_covariates: assignment does not match the table");
    }
    const bool needs_eta = scenario != CovariateScenario::PostTreatmentLinear;
    if (needs_eta && eta.size() != 2 * k_pairs) {
        throw std::invalid_argument("generate_covariates: eta must hold 2K values");
    }

    std::vector<double> x(2 * k_pairs);
    for (std::size_t k = 0; k < k_pairs; ++k) {
        const PairTruth& p = table.pairs[k];
        const double y1 = p.clusters[0].y0_mean;
        const double y2 = p.clusters[1].y0_mean;
        for (std::size_t j = 0; j < 2; ++j) {
            const int t = assignment[k][j];
            double& out = x[2 * k + j];
            switch (scenario) {
                case CovariateScenario::PostTreatmentLinear:
                    out = y1 + t * p.delta + noise_rng.normal(0.0, sigma_zeta);
                    break;
                case CovariateScenario::PostTreatmentNonlinear:
                    out = (t == 1 ? checked_exp(y1 + p.delta, k) : checked_log(y1, k)) +
                          eta[2 * k + j];
                    break;
                case CovariateScenario::PreTreatmentNonlinear:
                    out = (j == 0 ? checked_log(y1, k) : checked_exp(y2, k)) + eta[2 * k + j];
                    break;
                case CovariateScenario::None:
                    break;
            }
        }
    }
    return x;
}

GeneratedExperiment generate_experiment(const DgpConfig& config) {
    config.validate();
    const auto stream = [&](Stream s) {
        return Rng(derive_seed(config.seed, {static_cast<std::uint64_t>(s)}));
    };

    Rng base_rng = stream(Stream::BaseOutcomes);
    const auto base = draw_base_outcomes(config, base_rng);
    auto table = apply_treatment_effects(base, config.effect_numerator);

    Rng size_rng = stream(Stream::ClusterSizes);
    const auto sizes = draw_cluster_sizes(config.mean_cluster_size, 2 * config.pairs, size_rng);

    Rng indiv_rng = stream(Stream::Individuals);
    table = draw_individual_outcomes(std::move(table), sizes, config.sigma_epsilon, indiv_rng);

    Rng rand_rng(config.randomization_seed
                     ? *config.randomization_seed
                     : derive_seed(config.seed, {static_cast<std::uint64_t>(Stream::Randomization)}));
    Assignment assignment = randomize(config.randomization, config.pairs, rand_rng);

    std::vector<double> eta = config.eta;
    if (eta.empty() && (config.scenario == CovariateScenario::PostTreatmentNonlinear ||
                        config.scenario == CovariateScenario::PreTreatmentNonlinear)) {
        Rng eta_rng = stream(Stream::Eta);
        eta = draw_eta(config.pairs, config.sigma_eta_sq, eta_rng);
    }
    Rng noise_rng = stream(Stream::CovariateNoise);
    const auto x =
        generate_covariates(config.scenario, table, assignment, config.sigma_zeta, eta, noise_rng);

    GeneratedExperiment out;
    out.data = observed_from_potential(table, assignment, x);
    out.truth = std::move(table);
    out.assignment = std::move(assignment);
    return out;
}

}  // namespace pairsim
