#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace pairsim {

// Counter-style seed derivation: mixes a master seed with a path of indices
// (scenario, grid point, iteration, stream ...) through SplitMix64 so that
// every replicate owns an independent, scheduling-free stream.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return std_normal_(engine_); }
    double normal(double mean, double sd) { return sd == 0.0 ? mean : mean + sd * normal(); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    bool coin() { return std::bernoulli_distribution(0.5)(engine_); }
    double exponential(double rate) { return std::exponential_distribution<double>(rate)(engine_); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> std_normal_{0.0, 1.0};
};

// N(mean, sd²) conditioned on exceeding `lower` (strictly). Plain rejection
// when the bound sits below the mean; Robert's exponential proposal in the
// tail so that far truncation points do not stall.
double truncated_normal(Rng& rng, double mean, double sd, double lower);

}  // namespace pairsim
