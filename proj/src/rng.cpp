#include "pairsim/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace pairsim {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t state = splitmix64(master);
    for (std::uint64_t index : path) {
        state = splitmix64(state ^ splitmix64(index + 0x632be59bd9b4e019ULL));
    }
    return state;
}

double truncated_normal(Rng& rng, double mean, double sd, double lower) {
    if (sd < 0.0) throw std::invalid_argument("truncated_normal: negative sd");
    if (sd == 0.0) {
        if (mean > lower) return mean;
        throw std::domain_error("truncated_normal: degenerate distribution below truncation point");
    }
    const double a = (lower - mean) / sd;
    if (a < 0.5) {
        for (;;) {
            const double y = mean + sd * rng.normal();
            if (y > lower) return y;
        }
    }
    const double rate = (a + std::sqrt(a * a + 4.0)) / 2.0;
    for (;;) {
        const double z = a + rng.exponential(rate);
        const double accept = std::exp(-(z - rate) * (z - rate) / 2.0);
        const double y = mean + sd * z;
        if (rng.uniform() < accept && y > lower) return y;
    }
}

}  // namespace pairsim
