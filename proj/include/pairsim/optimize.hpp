#pragma once

#include <functional>
#include <vector>

namespace pairsim {

struct NelderMeadOptions {
    double f_tolerance = 1e-8;  // stop when the simplex's spread in f falls below this
    int max_evaluations = 2000;
    double initial_step = 0.5;
};

struct NelderMeadResult {
    std::vector<double> x;
    double value = 0.0;
    int evaluations = 0;
    bool converged = false;
};

// Minimizes `f`. Non-finite values are treated as +inf, which keeps the
// simplex out of invalid regions.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> start, const NelderMeadOptions& options = {});

}  // namespace pairsim
