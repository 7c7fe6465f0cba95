#pragma once

#include "pairsim/core_model.hpp"

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace pairsim {

// Malformed input file; carries the source name and 1-based row (0 when the
// problem is not tied to a row).
class InputError : public std::runtime_error {
public:
    InputError(const std::string& source, std::size_t row, const std::string& what);

    const std::string& source() const { return source_; }
    std::size_t row() const { return row_; }

private:
    std::string source_;
    std::size_t row_;
};

inline constexpr const char* kExperimentHeader =
    "pair_id,cluster_id,treatment,size,covariate,outcome";
inline constexpr const char* kTruthHeader = "pair_id,cluster_id,y0_mean,y1_mean,tau";

// Shortest text that parses back to the same double.
std::string format_double(double value);

std::vector<std::string> split_csv_line(const std::string& line);

void write_experiment_csv(std::ostream& out, const ExperimentData& data);
ExperimentData read_experiment_csv(std::istream& in, const std::string& source = "<stream>");
ExperimentData read_experiment_csv_file(const std::string& path);

void write_truth_csv(std::ostream& out, const PotentialOutcomeTable& truth);

// `cluster_id,cov1,...,covp` table used by the matching tools.
struct CovariateTable {
    std::vector<std::string> ids;
    std::vector<std::string> names;
    std::vector<std::vector<double>> rows;
};

CovariateTable read_covariate_csv(std::istream& in, const std::string& source = "<stream>");
CovariateTable read_covariate_csv_file(const std::string& path);

}  // namespace pairsim
