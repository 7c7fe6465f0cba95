#include "pairsim/core_model.hpp"

#include <boost/math/distributions/normal.hpp>

#include <numeric>
#include <sstream>

namespace pairsim {

double Cluster::mean() const {
    if (outcomes.empty()) {
        throw std::invalid_argument("mean of an empty cluster");
    }
    return std::accumulate(outcomes.begin(), outcomes.end(), 0.0) /
           static_cast<double>(outcomes.size());
}

const Cluster& Pair::treated() const {
    return clusters[0].treatment == 1 ? clusters[0] : clusters[1];
}

const Cluster& Pair::control() const {
    return clusters[0].treatment == 1 ? clusters[1] : clusters[0];
}

std::size_t ExperimentData::individual_count() const {
    std::size_t n = 0;
    for (const auto& p : pairs) {
        n += p.clusters[0].outcomes.size() + p.clusters[1].outcomes.size();
    }
    return n;
}

bool ExperimentData::has_covariates() const {
    if (pairs.empty()) return false;
    for (const auto& p : pairs) {
        for (const auto& c : p.clusters) {
            if (!c.covariate) return false;
        }
    }
    return true;
}

std::string to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::DesignBased: return "design";
        case EstimatorKind::HierNoCov: return "hier";
        case EstimatorKind::HierCov: return "hier-cov";
        case EstimatorKind::Pretest: return "pretest";
    }
    return "unknown";
}

EstimatorKind estimator_from_string(const std::string& name) {
    if (name == "design") return EstimatorKind::DesignBased;
    if (name == "hier" || name == "hier-nocov") return EstimatorKind::HierNoCov;
    if (name == "hier-cov") return EstimatorKind::HierCov;
    if (name == "pretest") return EstimatorKind::Pretest;
    throw std::invalid_argument("unknown estimator '" + name +
                                "' (expected design, hier, hier-cov or pretest)");
}

double normal_critical_value(double level) {
    if (!(level > 0.0 && level < 1.0)) {
        throw std::invalid_argument("confidence level must lie in (0, 1)");
    }
    const boost::math::normal_distribution<double> z;
    return boost::math::quantile(z, 0.5 + level / 2.0);
}

ConfidenceInterval wald_interval(double estimate, double std_error, double level) {
    const double half = normal_critical_value(level) * std_error;
    return {estimate - half, estimate + half};
}

ExperimentData observed_from_potential(const PotentialOutcomeTable& table,
                                       const Assignment& assignment,
                                       std::span<const double> covariates) {
    const std::size_t k_pairs = table.pair_count();
    if (assignment.size() != k_pairs) {
        std::ostringstream msg;
        msg << "assignment covers " << assignment.size() << " pairs but the table has "
            << k_pairs;
        throw std::invalid_argument(msg.str());
    }
    if (!covariates.empty() && covariates.size() != 2 * k_pairs) {
        std::ostringstream msg;
        msg << "expected " << 2 * k_pairs << " covariate values, got " << covariates.size();
        throw std::invalid_argument(msg.str());
    }

    ExperimentData data;
    data.pairs.resize(k_pairs);
    for (std::size_t k = 0; k < k_pairs; ++k) {
        for (std::size_t j = 0; j < 2; ++j) {
            const ClusterTruth& truth = table.pairs[k].clusters[j];
            const int t = assignment[k][j];
            if (t != 0 && t != 1) {
                throw std::invalid_argument("treatment indicators must be 0 or 1");
            }
            if (truth.y0.size() != truth.y1.size()) {
                throw std::invalid_argument("potential outcome columns differ in length");
            }
            Cluster& c = data.pairs[k].clusters[j];
            c.treatment = t;
            c.size = truth.y0.size();
            c.outcomes = t == 1 ? truth.y1 : truth.y0;
            if (!covariates.empty()) c.covariate = covariates[2 * k + j];
        }
    }
    return data;
}

std::vector<std::string> validate(const ExperimentData& data) {
    std::vector<std::string> violations;
    if (data.pairs.empty()) {
        violations.emplace_back("dataset has no pairs (K must be at least 1)");
    }
    bool any_covariate = false;
    bool all_covariate = true;
    for (std::size_t k = 0; k < data.pairs.size(); ++k) {
        const Pair& p = data.pairs[k];
        const int t1 = p.clusters[0].treatment;
        const int t2 = p.clusters[1].treatment;
        for (std::size_t j = 0; j < 2; ++j) {
            const Cluster& c = p.clusters[j];
            std::ostringstream where;
            where << "pair " << k + 1 << " cluster " << j + 1;
            if (c.treatment != 0 && c.treatment != 1) {
                violations.push_back(where.str() + ": treatment indicator not in {0,1}");
            }
            if (c.size < 1) {
                violations.push_back(where.str() + ": cluster size must be at least 1");
            }
            if (c.outcomes.size() != c.size) {
                std::ostringstream msg;
                msg << where.str() << ": outcome length mismatch (declared " << c.size
                    << ", found " << c.outcomes.size() << ")";
                violations.push_back(msg.str());
            }
            any_covariate = any_covariate || c.covariate.has_value();
            all_covariate = all_covariate && c.covariate.has_value();
        }
        if (t1 + t2 != 1) {
            std::ostringstream msg;
            msg << "pair " << k + 1 << " lacks exactly one treated cluster";
            violations.push_back(msg.str());
        }
    }
    if (any_covariate && !all_covariate) {
        violations.emplace_back("covariate present for some clusters but not all");
    }
    return violations;
}

void require_valid(const ExperimentData& data) {
    const auto violations = validate(data);
    if (violations.empty()) return;
    std::string msg = "invalid experiment data:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw std::invalid_argument(msg);
}

}  // namespace pairsim
