#include "pairsim/matching.hpp"

#include "pairsim/blossom.hpp"
#include "pairsim/csv_io.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace pairsim {

CovariateMatrix::CovariateMatrix(std::vector<std::string> ids_, std::vector<std::string> names_,
                                 Eigen::MatrixXd values_)
    : ids(std::move(ids_)), names(std::move(names_)), values(std::move(values_)) {
    if (static_cast<Eigen::Index>(ids.size()) != values.rows() ||
        static_cast<Eigen::Index>(names.size()) != values.cols()) {
        throw std::invalid_argument("CovariateMatrix: ids/names do not match the value matrix");
    }
    if (values.cols() < 1) throw std::invalid_argument("CovariateMatrix: need at least one covariate");
    if (!values.allFinite()) throw std::invalid_argument("CovariateMatrix: non-finite entries");
}

CovariateMatrix::CovariateMatrix(const CovariateTable& table) {
    Eigen::MatrixXd v(static_cast<Eigen::Index>(table.rows.size()),
                      static_cast<Eigen::Index>(table.names.size()));
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        for (std::size_t c = 0; c < table.names.size(); ++c) {
            v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = table.rows[i][c];
        }
    }
    *this = CovariateMatrix(table.ids, table.names, std::move(v));
}

std::string to_string(PairingMethod m) {
    switch (m) {
        case PairingMethod::Optimal: return "optimal";
        case PairingMethod::Greedy: return "greedy";
        case PairingMethod::Cem: return "cem";
    }
    return "unknown";
}

PairingMethod pairing_method_from_string(const std::string& name) {
    if (name == "optimal") return PairingMethod::Optimal;
    if (name == "greedy") return PairingMethod::Greedy;
    if (name == "cem") return PairingMethod::Cem;
    throw std::invalid_argument("unknown matching method '" + name + "'");
}

namespace {

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x) {
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mean;
    return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

void require_even(Eigen::Index c) {
    if (c % 2 != 0) {
        std::ostringstream msg;
        msg << "cannot pair an odd number of clusters (" << c << "); one cluster would be left unpaired";
        throw std::invalid_argument(msg.str());
    }
}

void require_distance_matrix(const Eigen::MatrixXd& d) {
    if (d.rows() != d.cols()) throw std::invalid_argument("distance matrix must be square");
    if (!d.allFinite()) throw std::invalid_argument("distance matrix has non-finite entries");
    require_even(d.rows());
}

PairingResult finish(PairingMethod method, const Eigen::MatrixXd& d,
                     std::vector<std::pair<int, int>> pairs) {
    for (auto& [a, b] : pairs) {
        if (a > b) std::swap(a, b);
    }
    std::sort(pairs.begin(), pairs.end());
    PairingResult r;
    r.method = method;
    for (auto [a, b] : pairs) {
        r.pairs.push_back({a, b, d(a, b), {}});
        r.total_distance += d(a, b);
    }
    return r;
}

}  // namespace

double default_ridge(const CovariateMatrix& cov) {
    if (cov.clusters() < 2) return 0.0;
    const Eigen::MatrixXd s = sample_covariance(cov.values);
    return 1e-8 * s.trace() / static_cast<double>(cov.covariates());
}

Eigen::MatrixXd mahalanobis_matrix(const Eigen::MatrixXd& values, const Eigen::MatrixXd& scale) {
    if (scale.rows() != values.cols() || scale.cols() != values.cols()) {
        throw std::invalid_argument("scale matrix does not match the covariate count");
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(scale);
    if (llt.info() != Eigen::Success) {
        throw std::invalid_argument("scale matrix is not positive definite");
    }
    // Whitened rows z = L⁻¹ x, so d(a,b) = |z_a − z_b|.
    const Eigen::MatrixXd z = llt.matrixL().solve(values.transpose()).transpose();
    const Eigen::Index c = values.rows();
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(c, c);
    for (Eigen::Index a = 0; a < c; ++a) {
        for (Eigen::Index b = a + 1; b < c; ++b) {
            d(a, b) = d(b, a) = (z.row(a) - z.row(b)).norm();
        }
    }
    return d;
}

Eigen::MatrixXd mahalanobis_matrix(const CovariateMatrix& cov, std::optional<double> ridge) {
    if (cov.clusters() < 2) throw std::invalid_argument("Mahalanobis distances need at least 2 clusters");
    const Eigen::MatrixXd s = sample_covariance(cov.values);
    const auto p = cov.covariates();
    double r = ridge ? *ridge : default_ridge(cov);
    if (r < 0.0) throw std::invalid_argument("ridge must be non-negative");
    if (!ridge && r == 0.0) r = 1.0;  // all rows identical: any scale gives zero distances

    Eigen::MatrixXd scaled = s + r * Eigen::MatrixXd::Identity(p, p);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled, Eigen::EigenvaluesOnly);
    const double top = eig.eigenvalues().maxCoeff();
    const double bottom = eig.eigenvalues().minCoeff();
    if (!(top > 0.0) || bottom <= 1e-12 * top) {
        throw std::invalid_argument(
            "covariance matrix is singular (collinear or constant covariates, or fewer clusters "
            "than covariates); use a positive ridge");
    }
    return mahalanobis_matrix(cov.values, scaled);
}

PairingResult optimal_pairing(const Eigen::MatrixXd& distances) {
    require_distance_matrix(distances);
    const int c = static_cast<int>(distances.rows());
    if (c == 0) return {};

    // Minimum-weight perfect matching as a max-cardinality max-weight
    // matching over integer weights (d_max − d) quantized to 2⁻⁴⁰ of d_max.
    const double dmax = distances.maxCoeff();
    const double scale = dmax > 0.0 ? std::ldexp(1.0, 40) / dmax : 0.0;
    std::vector<WeightedEdge> edges;
    edges.reserve(static_cast<std::size_t>(c) * (c - 1) / 2);
    for (int a = 0; a < c; ++a) {
        for (int b = a + 1; b < c; ++b) {
            edges.push_back({a, b, std::llround((dmax - distances(a, b)) * scale)});
        }
    }
    const auto mate = max_weight_matching(c, edges, true);
    std::vector<std::pair<int, int>> pairs;
    for (int v = 0; v < c; ++v) {
        if (mate[v] < 0) throw std::logic_error("matching solver returned an imperfect matching");
        if (v < mate[v]) pairs.emplace_back(v, mate[v]);
    }
    return finish(PairingMethod::Optimal, distances, std::move(pairs));
}

PairingResult greedy_pairing(const Eigen::MatrixXd& distances) {
    require_distance_matrix(distances);
    const int c = static_cast<int>(distances.rows());
    std::vector<std::tuple<double, int, int>> candidates;
    for (int a = 0; a < c; ++a) {
        for (int b = a + 1; b < c; ++b) candidates.emplace_back(distances(a, b), a, b);
    }
    std::sort(candidates.begin(), candidates.end());
    std::vector<bool> used(c, false);
    std::vector<std::pair<int, int>> pairs;
    for (const auto& [dist, a, b] : candidates) {
        if (used[a] || used[b]) continue;
        used[a] = used[b] = true;
        pairs.emplace_back(a, b);
    }
    return finish(PairingMethod::Greedy, distances, std::move(pairs));
}

std::size_t sturges_bins(std::size_t clusters) {
    if (clusters <= 1) return 1;
    return static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(clusters)))) + 1;
}

PairingResult cem_pairing(const CovariateMatrix& cov, const std::vector<std::size_t>& bins,
                          std::optional<double> ridge) {
    const auto c = cov.clusters();
    const auto p = cov.covariates();
    if (static_cast<Eigen::Index>(bins.size()) != p) {
        throw std::invalid_argument("need one bin count per covariate");
    }
    for (auto b : bins) {
        if (b < 1) throw std::invalid_argument("bin counts must be at least 1");
    }

    PairingResult result;
    result.method = PairingMethod::Cem;
    result.bin_widths.resize(p);
    std::vector<std::vector<std::size_t>> codes(c, std::vector<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) {
        const double lo = cov.values.col(j).minCoeff();
        const double hi = cov.values.col(j).maxCoeff();
        const double width = (hi - lo) / static_cast<double>(bins[j]);
        result.bin_widths[j] = width;
        for (Eigen::Index i = 0; i < c; ++i) {
            std::size_t code = 0;
            if (width > 0.0) {
                code = static_cast<std::size_t>(std::floor((cov.values(i, j) - lo) / width));
                code = std::min(code, bins[j] - 1);
            }
            codes[i][j] = code;
        }
    }

    std::map<std::vector<std::size_t>, std::vector<int>> strata;
    for (Eigen::Index i = 0; i < c; ++i) strata[codes[i]].push_back(static_cast<int>(i));

    const Eigen::MatrixXd dist = c >= 2 ? mahalanobis_matrix(cov, ridge) : Eigen::MatrixXd::Zero(c, c);

    for (const auto& [code, members] : strata) {
        std::ostringstream sig;
        for (std::size_t j = 0; j < code.size(); ++j) sig << (j ? "-" : "") << code[j];

        auto pair_subset = [&](const std::vector<int>& idx) {
            const auto m = static_cast<Eigen::Index>(idx.size());
            Eigen::MatrixXd sub(m, m);
            for (Eigen::Index a = 0; a < m; ++a) {
                for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = dist(idx[a], idx[b]);
            }
            return optimal_pairing(sub);
        };

        std::vector<int> kept = members;
        if (members.size() % 2 == 1) {
            std::size_t drop = 0;
            double best_total = std::numeric_limits<double>::infinity();
            for (std::size_t leave = 0; leave < members.size(); ++leave) {
                std::vector<int> rest;
                for (std::size_t i = 0; i < members.size(); ++i) {
                    if (i != leave) rest.push_back(members[i]);
                }
                const double total = rest.empty() ? 0.0 : pair_subset(rest).total_distance;
                if (total < best_total) {
                    best_total = total;
                    drop = leave;
                }
            }
            result.unmatched.push_back(members[drop]);
            kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(drop));
        }
        if (kept.empty()) continue;
        const PairingResult local = pair_subset(kept);
        for (const auto& lp : local.pairs) {
            int a = kept[lp.a], b = kept[lp.b];
            if (a > b) std::swap(a, b);
            result.pairs.push_back({a, b, dist(a, b), sig.str()});
            result.total_distance += dist(a, b);
        }
    }
    std::sort(result.pairs.begin(), result.pairs.end(),
              [](const MatchedPair& x, const MatchedPair& y) {
                  return std::tie(x.a, x.b) < std::tie(y.a, y.b);
              });
    std::sort(result.unmatched.begin(), result.unmatched.end());
    return result;
}

std::vector<BalanceRow> balance_report(const CovariateMatrix& cov, const PairingResult& pairing) {
    std::vector<BalanceRow> rows;
    for (Eigen::Index j = 0; j < cov.covariates(); ++j) {
        BalanceRow row;
        row.covariate = cov.names[j];
        double sum = 0.0;
        for (const auto& pr : pairing.pairs) {
            if (pr.a < 0 || pr.b < 0 || pr.a >= cov.clusters() || pr.b >= cov.clusters()) {
                throw std::invalid_argument("pairing refers to clusters outside the covariate matrix");
            }
            const double diff = std::abs(cov.values(pr.a, j) - cov.values(pr.b, j));
            row.max_abs_diff = std::max(row.max_abs_diff, diff);
            sum += diff;
        }
        row.mean_abs_diff = pairing.pairs.empty() ? 0.0 : sum / static_cast<double>(pairing.pairs.size());
        rows.push_back(row);
    }
    return rows;
}

std::vector<double> covariate_skewness(const CovariateMatrix& cov) {
    std::vector<double> out;
    for (Eigen::Index j = 0; j < cov.covariates(); ++j) {
        const Eigen::VectorXd col = cov.values.col(j);
        const double mean = col.mean();
        const Eigen::ArrayXd dev = col.array() - mean;
        const double m2 = dev.square().mean();
        const double m3 = dev.cube().mean();
        out.push_back(m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0);
    }
    return out;
}

}  // namespace pairsim
