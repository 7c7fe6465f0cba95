#pragma once

#include "pairsim/core_model.hpp"
#include "pairsim/rng.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pairsim {

enum class CovariateScenario {
    None,
    // X_jk = Y.1k(0) + T_jk δ_k + ζ_jk
    PostTreatmentLinear,
    // log(Y.1k(0)) + η_jk for control clusters, exp(Y.1k(0) + δ_k) + η_jk for treated
    PostTreatmentNonlinear,
    // log(Y.1k(0)) + η_1k for position 1, exp(Y.2k(0)) + η_2k for position 2;
    // fixed before assignment
    PreTreatmentNonlinear,
};

enum class RandomizationScheme {
    HillScottFixed,  // position 2 is always treated
    ProperPair,      // one cluster per pair treated with probability 1/2
};

std::string to_string(CovariateScenario s);
std::string to_string(RandomizationScheme s);
CovariateScenario scenario_from_string(const std::string& name);
RandomizationScheme randomization_from_string(const std::string& name);

// Generative parameters. The default location/scale values are configuration
// placeholders chosen for numerical stability, not replication values.
struct DgpConfig {
    double mu0 = 10.0;
    double sigma0 = 3.0;
    double sigma_delta = 1.0;
    double sigma_epsilon = 5.0;
    double sigma_zeta = 1.0;
    double sigma_eta_sq = 2.0;
    std::optional<double> truncation = 2.0;
    double effect_numerator = 30.0;
    std::size_t pairs = 10;
    std::size_t mean_cluster_size = 50;
    CovariateScenario scenario = CovariateScenario::PostTreatmentLinear;
    RandomizationScheme randomization = RandomizationScheme::ProperPair;
    std::uint64_t seed = 1;
    // Separate seed for the treatment draw; derived from `seed` when absent.
    std::optional<std::uint64_t> randomization_seed;
    // Per-cluster η values in (pair, position) order. Drawn from a dedicated
    // sub-seed when empty and the scenario needs them.
    std::vector<double> eta;

    void validate() const;
};

void to_json(nlohmann::json& j, const DgpConfig& c);
void from_json(const nlohmann::json& j, DgpConfig& c);

struct BasePair {
    double y1 = 0.0;  // Y.1k(0)
    double y2 = 0.0;  // Y.2k(0) = Y.1k(0) + δ_k
    double delta = 0.0;
};

// Named sub-streams of a dataset seed.
enum class Stream : std::uint64_t {
    BaseOutcomes = 1,
    ClusterSizes = 2,
    Individuals = 3,
    Randomization = 4,
    CovariateNoise = 5,
    Eta = 6,
};

std::vector<BasePair> draw_base_outcomes(const DgpConfig& config, Rng& rng);

// Cluster-level table: Y.jk(1) = Y.jk(0) + c / Y.jk(0). Individual columns
// are left empty.
PotentialOutcomeTable apply_treatment_effects(std::span<const BasePair> base,
                                              double effect_numerator);

// Multinomial allocation of mean_cluster_size × cluster_count individuals
// over equiprobable cells; empty cells take one individual from the largest.
std::vector<std::size_t> draw_cluster_sizes(std::size_t mean_cluster_size,
                                            std::size_t cluster_count, Rng& rng);

// Fills per-individual columns. One noise draw per person; Y_ijk(1) is
// Y_ijk(0) shifted by τ_jk. `sizes` is in (pair, position) order.
PotentialOutcomeTable draw_individual_outcomes(PotentialOutcomeTable table,
                                               std::span<const std::size_t> sizes,
                                               double sigma_epsilon, Rng& rng);

Assignment randomize(RandomizationScheme scheme, std::size_t pairs, Rng& rng);

std::vector<double> draw_eta(std::size_t pairs, double sigma_eta_sq, Rng& rng);

// One covariate per cluster in (pair, position) order; empty for
// CovariateScenario::None. ζ is drawn from `noise_rng` (PostTreatmentLinear
// only); η must hold 2K values for the nonlinear scenarios.
std::vector<double> generate_covariates(CovariateScenario scenario,
                                        const PotentialOutcomeTable& table,
                                        const Assignment& assignment, double sigma_zeta,
                                        std::span<const double> eta, Rng& noise_rng);

struct GeneratedExperiment {
    ExperimentData data;
    PotentialOutcomeTable truth;
    Assignment assignment;
};

GeneratedExperiment generate_experiment(const DgpConfig& config);

}  // namespace pairsim
