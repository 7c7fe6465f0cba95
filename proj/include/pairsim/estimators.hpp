#pragma once

#include "pairsim/core_model.hpp"
#include "pairsim/dgp.hpp"
#include "pairsim/optimize.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace pairsim {

// Assumed covariate transform g(·) of the covariate-adjusted model.
struct Link {
    std::string name;
    std::function<double(double)> fn;

    double operator()(double x) const { return fn(x); }

    static Link identity();
    static Link log();
    static Link exp();
    static Link square();
    static Link from_string(const std::string& name);
};

// Fitted hierarchical-model parameters. Under the per-individual marginal
// likelihood the variance components enter only through the two arm
// variances: control σ_ε² + σ_α² and treated σ_ε² + σ_τ² + 2σ_ατ + σ_α².
struct HierarchicalParams {
    double tau0 = 0.0;
    double alpha0 = 0.0;
    std::optional<double> beta;
    double control_variance = 0.0;
    double treated_variance = 0.0;

    // σ_τ² + 2σ_ατ, the part of the treated-arm variance added by treatment.
    double effect_variance_shift() const { return treated_variance - control_variance; }
};

struct FitOptions {
    NelderMeadOptions optimizer{};
    int restarts = 3;
    double level = 0.95;
};

struct HierFit {
    EstimateResult estimate;
    HierarchicalParams params;
    double log_likelihood = 0.0;
    bool boundary = false;        // an arm variance sits at its numerical floor
    bool beta_estimable = true;   // false when g(X) is constant within arms
    int evaluations = 0;
};

// Size-weighted treated mean minus size-weighted control mean, pooled over
// all pairs.
double pooled_difference_in_means(const ExperimentData& data);

// Pair-weighted difference in means: the average over pairs of
// d_k = K (n_1k + n_2k) / N · (Ȳ_k,treated − Ȳ_k,control). Identical to the
// pooled difference whenever n_1k = n_2k for every pair. Wald interval with
// V̂ = Σ_k (d_k − d̄)² / (K (K − 1)); K = 1 gives a point estimate only.
EstimateResult estimate_design_based(const ExperimentData& data, double level = 0.95);

// Per-individual log-likelihood of Y_ijk ~ N(α₀ + τ₀ T_jk + β g(X_jk), v_arm).
// `g` may be null for the model without covariates.
double hier_log_likelihood(const ExperimentData& data, const HierarchicalParams& params,
                           const Link* g = nullptr);

HierFit fit_hier_nocov(const ExperimentData& data, const FitOptions& options = {});
HierFit fit_hier_cov(const ExperimentData& data, const Link& g = Link::identity(),
                     const FitOptions& options = {});

// Upper quantile of χ²₁ used as the pre-test threshold.
double chi_square_critical_value(double alpha, int dof = 1);

EstimateResult lr_pretest_estimate(const ExperimentData& data, double alpha = 0.05,
                                   const Link& g = Link::identity(),
                                   const FitOptions& options = {});

// Dispatch by kind (covariate estimators use the identity link).
EstimateResult estimate(const ExperimentData& data, EstimatorKind kind, double level = 0.95);

struct DiscrepancyResult {
    double tau_star = 0.0;      // estimand of the covariate-adjusted model
    double target = 0.0;        // E(τ_k) under the generating process
    double discrepancy = 0.0;   // tau_star − target
    double mc_std_error = 0.0;  // Monte Carlo standard error of the discrepancy
    std::size_t draws = 0;
    std::size_t non_finite = 0;
};

// Monte Carlo evaluation of E{g(Y.1k(0) + δ_k + ζ) − g(Y.1k(0) + ζ)}·β over
// the generating law of (Y.1k(0), δ_k, ζ), using antithetic ±δ draws.
// Throws if more than 0.1% of draws give a non-finite integrand.
DiscrepancyResult bias_discrepancy(const Link& g, const DgpConfig& dgp, double beta,
                                   std::size_t n_mc, std::uint64_t seed = 1);

}  // namespace pairsim
