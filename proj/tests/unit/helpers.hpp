#pragma once

#include "pairsim/core_model.hpp"

#include <cmath>
#include <optional>
#include <random>
#include <vector>

namespace testing {

inline pairsim::Cluster cluster(int treatment, std::vector<double> outcomes,
                                std::optional<double> covariate = std::nullopt) {
    pairsim::Cluster c;
    c.size = outcomes.size();
    c.treatment = treatment;
    c.outcomes = std::move(outcomes);
    c.covariate = covariate;
    return c;
}

inline pairsim::Pair pair(pairsim::Cluster a, pairsim::Cluster b) {
    pairsim::Pair p;
    p.clusters = {std::move(a), std::move(b)};
    return p;
}

struct RandomDataOptions {
    std::size_t min_pairs = 2;
    std::size_t max_pairs = 20;
    std::size_t min_size = 1;
    std::size_t max_size = 30;
    bool equal_sizes = false;
    bool covariates = false;
};

// Cluster means and effects vary by pair; outcomes are normal around them.
inline pairsim::ExperimentData random_data(std::mt19937_64& gen, const RandomDataOptions& o = {}) {
    std::uniform_int_distribution<std::size_t> k_dist(o.min_pairs, o.max_pairs);
    std::uniform_int_distribution<std::size_t> n_dist(o.min_size, o.max_size);
    std::normal_distribution<double> z(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    pairsim::ExperimentData data;
    const std::size_t k = k_dist(gen);
    for (std::size_t p = 0; p < k; ++p) {
        const double base = 10.0 + 3.0 * z(gen);
        const double effect = 2.0 + z(gen);
        const std::size_t n1 = n_dist(gen);
        const std::size_t n2 = o.equal_sizes ? n1 : n_dist(gen);
        const int t1 = coin(gen) ? 1 : 0;
        std::vector<double> y1, y2;
        for (std::size_t i = 0; i < n1; ++i) y1.push_back(base + effect * t1 + 2.0 * z(gen));
        for (std::size_t i = 0; i < n2; ++i) y2.push_back(base + effect * (1 - t1) + 2.0 * z(gen));
        std::optional<double> x1, x2;
        if (o.covariates) {
            x1 = base + z(gen);
            x2 = base + z(gen);
        }
        data.pairs.push_back(pair(cluster(t1, y1, x1), cluster(1 - t1, y2, x2)));
    }
    return data;
}

template <class F>
pairsim::ExperimentData map_outcomes(pairsim::ExperimentData data, F f) {
    for (auto& p : data.pairs) {
        for (auto& c : p.clusters) {
            for (double& y : c.outcomes) y = f(y);
        }
    }
    return data;
}

inline double relative_gap(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace testing
