#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pairsim {

// One cluster of a matched pair. `size` is the declared cluster size; it is
// kept separately from `outcomes` so that malformed input can be reported
// by validate() instead of being silently reinterpreted.
struct Cluster {
    std::size_t size = 0;
    int treatment = 0;
    std::vector<double> outcomes;
    std::optional<double> covariate;

    double mean() const;
};

// Clusters are positional (j = 1, 2); which one is treated is carried by
// Cluster::treatment, never by position.
struct Pair {
    std::array<Cluster, 2> clusters;

    const Cluster& treated() const;
    const Cluster& control() const;
};

struct ExperimentData {
    std::vector<Pair> pairs;

    std::size_t pair_count() const { return pairs.size(); }
    std::size_t individual_count() const;
    bool has_covariates() const;
};

// Cluster-level and per-individual potential outcomes for one pair.
struct ClusterTruth {
    double y0_mean = 0.0;
    double y1_mean = 0.0;
    double tau = 0.0;
    std::vector<double> y0;
    std::vector<double> y1;

    std::size_t size() const { return y0.size(); }
};

struct PairTruth {
    std::array<ClusterTruth, 2> clusters;
    double delta = 0.0;
};

struct PotentialOutcomeTable {
    std::vector<PairTruth> pairs;

    std::size_t pair_count() const { return pairs.size(); }
};

// Treatment indicators T_jk, indexed [pair][position].
using Assignment = std::vector<std::array<int, 2>>;

enum class EstimatorKind { DesignBased, HierNoCov, HierCov, Pretest };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_from_string(const std::string& name);

struct ConfidenceInterval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double value) const { return lo <= value && value <= hi; }
};

struct PretestInfo {
    EstimatorKind branch = EstimatorKind::HierNoCov;
    double lr_statistic = 0.0;
    double threshold = 0.0;
    bool fallback = false;  // covariate fit failed, no-covariate model used
};

struct EstimateResult {
    EstimatorKind estimator = EstimatorKind::DesignBased;
    double estimate = 0.0;
    std::optional<double> std_error;  // empty when inference is undefined
    std::optional<ConfidenceInterval> ci;
    double level = 0.95;
    bool converged = true;
    std::optional<PretestInfo> pretest;
    std::vector<std::string> warnings;
};

// Two-sided standard normal critical value for a confidence level.
double normal_critical_value(double level);

// Builds estimate ± z(level)·se.
ConfidenceInterval wald_interval(double estimate, double std_error, double level);

// Y_ijk = T_jk Y_ijk(1) + (1 - T_jk) Y_ijk(0). `covariates`, if non-empty,
// holds one value per cluster in (pair, position) order.
ExperimentData observed_from_potential(const PotentialOutcomeTable& table,
                                       const Assignment& assignment,
                                       std::span<const double> covariates = {});

// Every violated invariant of `data`; empty iff valid.
std::vector<std::string> validate(const ExperimentData& data);

// Throws std::invalid_argument listing the violations, if any.
void require_valid(const ExperimentData& data);

}  // namespace pairsim
