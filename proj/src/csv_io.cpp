#include "pairsim/csv_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

namespace pairsim {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

double parse_double(const std::string& text, const std::string& source, std::size_t row,
                    const char* column) {
    const std::string t = trim(text);
    double value = 0.0;
    const auto* end = t.data() + t.size();
    const auto [ptr, ec] = std::from_chars(t.data(), end, value);
    if (t.empty() || ec != std::errc() || ptr != end) {
        throw InputError(source, row,
                         std::string("column '") + column + "': not a number: '" + t + "'");
    }
    return value;
}

long parse_long(const std::string& text, const std::string& source, std::size_t row,
                const char* column) {
    const std::string t = trim(text);
    long value = 0;
    const auto* end = t.data() + t.size();
    const auto [ptr, ec] = std::from_chars(t.data(), end, value);
    if (t.empty() || ec != std::errc() || ptr != end) {
        throw InputError(source, row,
                         std::string("column '") + column + "': not an integer: '" + t + "'");
    }
    return value;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError(path, 0, "cannot open file");
    return in;
}

}  // namespace

InputError::InputError(const std::string& source, std::size_t row, const std::string& what)
    : std::runtime_error(source + (row > 0 ? ":" + std::to_string(row) : std::string()) +
                         ": " + what),
      source_(source),
      row_(row) {}

std::string format_double(double value) {
    char buf[32];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, value);
        double back = 0.0;
        std::from_chars(buf, buf + std::char_traits<char>::length(buf), back);
        if (back == value) break;
    }
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(current);
            current.clear();
        } else if (ch != '\r' && ch != '\n') {
            current.push_back(ch);
        }
    }
    fields.push_back(current);
    return fields;
}

void write_experiment_csv(std::ostream& out, const ExperimentData& data) {
    out << kExperimentHeader << '\n';
    for (std::size_t k = 0; k < data.pairs.size(); ++k) {
        for (std::size_t j = 0; j < 2; ++j) {
            const Cluster& c = data.pairs[k].clusters[j];
            const std::string cov = c.covariate ? format_double(*c.covariate) : std::string();
            for (double y : c.outcomes) {
                out << k + 1 << ',' << j + 1 << ',' << c.treatment << ',' << c.size << ','
                    << cov << ',' << format_double(y) << '\n';
            }
        }
    }
}

ExperimentData read_experiment_csv(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t row = 1;
    if (!std::getline(in, line)) throw InputError(source, 0, "empty file");
    if (trim(line) != kExperimentHeader) {
        throw InputError(source, row,
                         std::string("unexpected header (want '") + kExperimentHeader + "')");
    }

    struct Slot {
        bool seen = false;
        std::size_t first_row = 0;
        Cluster cluster;
    };
    std::map<long, std::array<Slot, 2>> by_pair;

    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 6) {
            throw InputError(source, row, "expected 6 fields, found " + std::to_string(f.size()));
        }
        const long pair_id = parse_long(f[0], source, row, "pair_id");
        const long cluster_id = parse_long(f[1], source, row, "cluster_id");
        const long treatment = parse_long(f[2], source, row, "treatment");
        const long size = parse_long(f[3], source, row, "size");
        if (cluster_id != 1 && cluster_id != 2) {
            throw InputError(source, row, "cluster_id must be 1 or 2");
        }
        if (size < 0) throw InputError(source, row, "size must be non-negative");
        std::optional<double> cov;
        if (!trim(f[4]).empty()) cov = parse_double(f[4], source, row, "covariate");
        const double y = parse_double(f[5], source, row, "outcome");

        Slot& slot = by_pair[pair_id][static_cast<std::size_t>(cluster_id - 1)];
        if (!slot.seen) {
            slot.seen = true;
            slot.first_row = row;
            slot.cluster.treatment = static_cast<int>(treatment);
            slot.cluster.size = static_cast<std::size_t>(size);
            slot.cluster.covariate = cov;
        } else {
            if (slot.cluster.treatment != treatment ||
                slot.cluster.size != static_cast<std::size_t>(size)) {
                throw InputError(source, row,
                                 "treatment/size differ from the cluster's first row " +
                                     std::to_string(slot.first_row));
            }
            if (slot.cluster.covariate != cov) {
                throw InputError(source, row, "covariate differs within a cluster");
            }
        }
        slot.cluster.outcomes.push_back(y);
    }

    if (by_pair.empty()) throw InputError(source, 0, "no data rows");
    ExperimentData data;
    for (auto& [pair_id, slots] : by_pair) {
        Pair p;
        for (std::size_t j = 0; j < 2; ++j) {
            if (!slots[j].seen) {
                throw InputError(source, 0,
                                 "pair " + std::to_string(pair_id) + " has no rows for cluster " +
                                     std::to_string(j + 1));
            }
            p.clusters[j] = std::move(slots[j].cluster);
        }
        data.pairs.push_back(std::move(p));
    }
    return data;
}

ExperimentData read_experiment_csv_file(const std::string& path) {
    auto in = open_input(path);
    return read_experiment_csv(in, path);
}

void write_truth_csv(std::ostream& out, const PotentialOutcomeTable& truth) {
    out << kTruthHeader << '\n';
    for (std::size_t k = 0; k < truth.pairs.size(); ++k) {
        for (std::size_t j = 0; j < 2; ++j) {
            const ClusterTruth& c = truth.pairs[k].clusters[j];
            out << k + 1 << ',' << j + 1 << ',' << format_double(c.y0_mean) << ','
                << format_double(c.y1_mean) << ',' << format_double(c.tau) << '\n';
        }
    }
}

CovariateTable read_covariate_csv(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw InputError(source, 0, "empty file");
    CovariateTable table;
    auto header = split_csv_line(line);
    if (header.size() < 2 || trim(header[0]) != "cluster_id") {
        throw InputError(source, 1, "header must be cluster_id,cov1,...,covp with p >= 1");
    }
    for (std::size_t i = 1; i < header.size(); ++i) table.names.push_back(trim(header[i]));

    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != header.size()) {
            throw InputError(source, row,
                             "expected " + std::to_string(header.size()) + " fields, found " +
                                 std::to_string(f.size()));
        }
        table.ids.push_back(trim(f[0]));
        std::vector<double> values;
        for (std::size_t i = 1; i < f.size(); ++i) {
            if (trim(f[i]).empty()) throw InputError(source, row, "missing covariate value");
            values.push_back(parse_double(f[i], source, row, table.names[i - 1].c_str()));
        }
        table.rows.push_back(std::move(values));
    }
    if (table.rows.empty()) throw InputError(source, 0, "no data rows");
    return table;
}

CovariateTable read_covariate_csv_file(const std::string& path) {
    auto in = open_input(path);
    return read_covariate_csv(in, path);
}

}  // namespace pairsim
