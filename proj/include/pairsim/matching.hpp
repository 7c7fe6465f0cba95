#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace pairsim {

struct CovariateTable;

// C clusters × p covariates.
struct CovariateMatrix {
    std::vector<std::string> ids;
    std::vector<std::string> names;
    Eigen::MatrixXd values;

    CovariateMatrix() = default;
    CovariateMatrix(std::vector<std::string> ids, std::vector<std::string> names,
                    Eigen::MatrixXd values);
    explicit CovariateMatrix(const CovariateTable& table);

    Eigen::Index clusters() const { return values.rows(); }
    Eigen::Index covariates() const { return values.cols(); }
};

enum class PairingMethod { Optimal, Greedy, Cem };

std::string to_string(PairingMethod m);
PairingMethod pairing_method_from_string(const std::string& name);

struct MatchedPair {
    int a = 0;  // row indices, a < b
    int b = 0;
    double distance = 0.0;
    std::string stratum;  // CEM bin signature, empty otherwise
};

struct PairingResult {
    PairingMethod method = PairingMethod::Optimal;
    std::vector<MatchedPair> pairs;
    double total_distance = 0.0;
    std::vector<int> unmatched;      // CEM only
    std::vector<double> bin_widths;  // CEM only, per covariate
};

// Default ridge: 1e-8 · trace(S) / p.
double default_ridge(const CovariateMatrix& cov);

// d(a,b) = sqrt((x_a − x_b)ᵀ (S + ridge·I)⁻¹ (x_a − x_b)), S the sample
// covariance of the rows. Throws when S + ridge·I is singular.
Eigen::MatrixXd mahalanobis_matrix(const CovariateMatrix& cov,
                                   std::optional<double> ridge = std::nullopt);

// Same distance with an explicitly supplied scale matrix.
Eigen::MatrixXd mahalanobis_matrix(const Eigen::MatrixXd& values, const Eigen::MatrixXd& scale);

// Exact minimum-total-distance perfect matching.
PairingResult optimal_pairing(const Eigen::MatrixXd& distances);

// Repeatedly takes the globally closest unmatched pair; ties go to the
// lexicographically smallest (a, b).
PairingResult greedy_pairing(const Eigen::MatrixXd& distances);

// Sturges' rule, ceil(log2 C) + 1.
std::size_t sturges_bins(std::size_t clusters);

// Coarsened exact matching: equal-width bins over each covariate's observed
// range, strata by full bin signature, optimal Mahalanobis pairing within
// each stratum. Odd strata leave out the cluster whose removal gives the
// smallest within-stratum total.
PairingResult cem_pairing(const CovariateMatrix& cov, const std::vector<std::size_t>& bins,
                          std::optional<double> ridge = std::nullopt);

struct BalanceRow {
    std::string covariate;
    double max_abs_diff = 0.0;
    double mean_abs_diff = 0.0;
};

std::vector<BalanceRow> balance_report(const CovariateMatrix& cov, const PairingResult& pairing);

// Sample skewness per covariate, reported as a normality warning for the
// Mahalanobis metric.
std::vector<double> covariate_skewness(const CovariateMatrix& cov);

}  // namespace pairsim
