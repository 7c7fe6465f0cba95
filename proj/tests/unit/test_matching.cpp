#include "matching_oracle.hpp"

#include "pairsim/blossom.hpp"
#include "pairsim/csv_io.hpp"
#include "pairsim/matching.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <random>
#include <set>

using namespace pairsim;

namespace {

CovariateMatrix random_covariates(std::mt19937_64& gen, int c, int p) {
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd v(c, p);
    for (int i = 0; i < c; ++i) {
        for (int j = 0; j < p; ++j) v(i, j) = z(gen) * (j + 1) + (j ? 0.5 * v(i, 0) : 0.0);
    }
    std::vector<std::string> ids, names;
    for (int i = 0; i < c; ++i) ids.push_back("c" + std::to_string(i + 1));
    for (int j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
    return CovariateMatrix(ids, names, v);
}

Eigen::MatrixXd random_distances(std::mt19937_64& gen, int c) {
    std::uniform_real_distribution<double> u(0.0, 10.0);
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(c, c);
    for (int a = 0; a < c; ++a) {
        for (int b = a + 1; b < c; ++b) d(a, b) = d(b, a) = u(gen);
    }
    return d;
}

bool is_perfect(const PairingResult& r, int c) {
    std::set<int> seen;
    for (const auto& p : r.pairs) {
        if (p.a >= p.b || !seen.insert(p.a).second || !seen.insert(p.b).second) return false;
    }
    return static_cast<int>(seen.size()) == c;
}

}  // namespace

TEST_CASE("Mahalanobis distance basics") {
    Eigen::MatrixXd x(3, 2);
    x << 0, 0, 3, 4, 3, 4;
    const auto d = mahalanobis_matrix(x, Eigen::MatrixXd::Identity(2, 2));
    CHECK(d(0, 1) == doctest::Approx(5.0));
    CHECK(d(1, 2) == 0.0);
    CHECK(d(0, 0) == 0.0);

    std::mt19937_64 gen(41);
    const auto cov = random_covariates(gen, 12, 3);
    const auto m = mahalanobis_matrix(cov);
    CHECK((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(m.minCoeff() >= 0.0);
    CHECK(m.diagonal().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("Mahalanobis distance matches the explicit quadratic form") {
    std::mt19937_64 gen(42);
    const auto cov = random_covariates(gen, 9, 3);
    const auto d = mahalanobis_matrix(cov, 0.0);
    const Eigen::RowVectorXd mean = cov.values.colwise().mean();
    const Eigen::MatrixXd centered = cov.values.rowwise() - mean;
    const Eigen::MatrixXd s = centered.transpose() * centered / 8.0;
    const Eigen::MatrixXd s_inv = s.inverse();
    for (int a = 0; a < 9; ++a) {
        for (int b = 0; b < 9; ++b) {
            const Eigen::VectorXd diff = (cov.values.row(a) - cov.values.row(b)).transpose();
            CHECK(d(a, b) == doctest::Approx(std::sqrt(diff.dot(s_inv * diff))).epsilon(1e-10));
        }
    }
}

TEST_CASE("Mahalanobis distance is invariant to affine rescaling") {
    std::mt19937_64 gen(43);
    for (int rep = 0; rep < 20; ++rep) {
        auto cov = random_covariates(gen, 10, 3);
        const auto before = mahalanobis_matrix(cov, 0.0);
        cov.values.col(rep % 3) = cov.values.col(rep % 3) * 250.0 + Eigen::VectorXd::Constant(10, -17.0);
        const auto after = mahalanobis_matrix(cov, 0.0);
        CHECK(((after - before).cwiseAbs().maxCoeff() / before.maxCoeff()) < 1e-6);
    }
}

TEST_CASE("singular covariance asks for a ridge") {
    Eigen::MatrixXd v(4, 2);
    v << 1, 2, 2, 4, 3, 6, 4, 8;
    const CovariateMatrix cov({"a", "b", "c", "d"}, {"x", "y"}, v);
    try {
        mahalanobis_matrix(cov, 0.0);
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("ridge") != std::string::npos);
    }
    CHECK_NOTHROW(mahalanobis_matrix(cov));
    CHECK(default_ridge(cov) > 0.0);
}

TEST_CASE("four-cluster example separates optimal from greedy") {
    Eigen::MatrixXd d(4, 4);
    // A B C D
    d << 0, 1, 2, 100,
         1, 0, 100, 2,
         2, 100, 0, 10,
         100, 2, 10, 0;
    const auto opt = optimal_pairing(d);
    REQUIRE(opt.pairs.size() == 2);
    CHECK(opt.pairs[0].a == 0);
    CHECK(opt.pairs[0].b == 2);
    CHECK(opt.pairs[1].a == 1);
    CHECK(opt.pairs[1].b == 3);
    CHECK(opt.total_distance == 4.0);
    const auto greedy = greedy_pairing(d);
    CHECK(greedy.total_distance == 11.0);
    CHECK(greedy.pairs[0].b == 1);
}

TEST_CASE("two clusters form the only pair") {
    Eigen::MatrixXd d(2, 2);
    d << 0, 3.5, 3.5, 0;
    CHECK(optimal_pairing(d).total_distance == 3.5);
    CHECK(greedy_pairing(d).total_distance == 3.5);
}

TEST_CASE("greedy breaks ties by the lowest index pair") {
    Eigen::MatrixXd d = Eigen::MatrixXd::Constant(6, 6, 1.0);
    d.diagonal().setZero();
    const auto r = greedy_pairing(d);
    CHECK(r.pairs[0].a == 0);
    CHECK(r.pairs[0].b == 1);
    CHECK(r.pairs[1].a == 2);
    CHECK(r.pairs[2].a == 4);
}

TEST_CASE("odd cluster counts cannot be paired") {
    const Eigen::MatrixXd d = Eigen::MatrixXd::Ones(5, 5);
    try {
        optimal_pairing(d);
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("odd number of clusters (5)") != std::string::npos);
    }
    CHECK_THROWS_AS(greedy_pairing(d), std::invalid_argument);
}

TEST_CASE("optimal pairing equals exhaustive enumeration") {
    std::mt19937_64 gen(44);
    for (int rep = 0; rep < 150; ++rep) {
        const int c = 2 * (1 + rep % 6);
        const auto d = random_distances(gen, c);
        const auto opt = optimal_pairing(d);
        const auto oracle = testing::brute_force_matching(d);
        REQUIRE(is_perfect(opt, c));
        CHECK(opt.total_distance == doctest::Approx(oracle.best).epsilon(1e-12));
        if (oracle.second - oracle.best > 1e-9) {
            std::vector<std::pair<int, int>> got;
            for (const auto& p : opt.pairs) got.emplace_back(p.a, p.b);
            auto want = oracle.pairs;
            std::sort(want.begin(), want.end());
            CHECK(got == want);
        }
        CHECK(opt.total_distance <= greedy_pairing(d).total_distance + 1e-12);
    }
}

TEST_CASE("optimal pairing handles integer-valued ties") {
    std::mt19937_64 gen(45);
    std::uniform_int_distribution<int> u(1, 3);
    for (int rep = 0; rep < 100; ++rep) {
        const int c = 2 * (2 + rep % 5);
        Eigen::MatrixXd d = Eigen::MatrixXd::Zero(c, c);
        for (int a = 0; a < c; ++a) {
            for (int b = a + 1; b < c; ++b) d(a, b) = d(b, a) = u(gen);
        }
        CHECK(optimal_pairing(d).total_distance == testing::brute_force_matching(d).best);
    }
}

TEST_CASE("blossom solver on a small general graph") {
    // Odd cycle 0-1-2 plus pendant 3: the best matching uses (0,1)? No: weights
    // make (1,2) and (0,3) optimal.
    const std::vector<WeightedEdge> edges{{0, 1, 5}, {1, 2, 6}, {0, 2, 5}, {0, 3, 4}};
    const auto mate = max_weight_matching(4, edges, false);
    CHECK(mate[1] == 2);
    CHECK(mate[0] == 3);
    const auto none = max_weight_matching(3, {}, true);
    CHECK(std::all_of(none.begin(), none.end(), [](int m) { return m == -1; }));
}

TEST_CASE("Sturges bin rule") {
    CHECK(sturges_bins(1) == 1);
    CHECK(sturges_bins(2) == 2);
    CHECK(sturges_bins(8) == 4);
    CHECK(sturges_bins(9) == 5);
    CHECK(sturges_bins(20) == 6);
}

TEST_CASE("CEM with one bin reduces to optimal pairing") {
    std::mt19937_64 gen(46);
    const auto cov = random_covariates(gen, 10, 2);
    const auto cem = cem_pairing(cov, {1, 1});
    const auto opt = optimal_pairing(mahalanobis_matrix(cov));
    CHECK(cem.unmatched.empty());
    CHECK(cem.total_distance == doctest::Approx(opt.total_distance).epsilon(1e-12));
}

TEST_CASE("CEM leaves singleton strata unmatched") {
    Eigen::MatrixXd v(2, 1);
    v << 0.0, 1.0;
    const CovariateMatrix cov({"a", "b"}, {"x"}, v);
    const auto r = cem_pairing(cov, {2});
    CHECK(r.pairs.empty());
    CHECK(r.unmatched == std::vector<int>{0, 1});
}

TEST_CASE("CEM respects the bin-width bound") {
    std::mt19937_64 gen(47);
    for (int rep = 0; rep < 50; ++rep) {
        const int c = 10 + rep % 20;
        const auto cov = random_covariates(gen, c, 1 + rep % 3);
        std::vector<std::size_t> bins(cov.covariates(), 2 + rep % 4);
        const auto r = cem_pairing(cov, bins);
        std::set<int> seen(r.unmatched.begin(), r.unmatched.end());
        for (const auto& p : r.pairs) {
            CHECK(seen.insert(p.a).second);
            CHECK(seen.insert(p.b).second);
            for (Eigen::Index j = 0; j < cov.covariates(); ++j) {
                CHECK(std::abs(cov.values(p.a, j) - cov.values(p.b, j)) <= r.bin_widths[j]);
            }
        }
        CHECK(static_cast<int>(seen.size()) == c);
        const auto balance = balance_report(cov, r);
        for (std::size_t j = 0; j < balance.size(); ++j) {
            CHECK(balance[j].max_abs_diff <= r.bin_widths[j]);
        }
    }
}

TEST_CASE("balance report") {
    Eigen::MatrixXd v(4, 1);
    v << 1.0, 1.0, 5.0, 8.0;
    const CovariateMatrix cov({"a", "b", "c", "d"}, {"x"}, v);
    PairingResult same;
    same.pairs = {{0, 1, 0.0, {}}};
    CHECK(balance_report(cov, same)[0].max_abs_diff == 0.0);

    PairingResult r;
    r.pairs = {{0, 1, 0.0, {}}, {2, 3, 0.0, {}}};
    PairingResult reversed;
    reversed.pairs = {{2, 3, 0.0, {}}, {0, 1, 0.0, {}}};
    const auto a = balance_report(cov, r);
    const auto b = balance_report(cov, reversed);
    CHECK(a[0].max_abs_diff == 3.0);
    CHECK(a[0].mean_abs_diff == 1.5);
    CHECK(a[0].max_abs_diff == b[0].max_abs_diff);
    CHECK(a[0].mean_abs_diff == b[0].mean_abs_diff);
}

TEST_CASE("skewness flags asymmetric covariates") {
    Eigen::MatrixXd v(6, 2);
    v << 1, 1, 2, 1, 3, 1, 4, 1, 5, 1, 100, 2;
    const CovariateMatrix cov({"a", "b", "c", "d", "e", "f"}, {"x", "y"}, v);
    const auto s = covariate_skewness(cov);
    CHECK(s[0] > 1.0);
    CHECK(s[1] > 1.0);
    Eigen::MatrixXd sym(4, 1);
    sym << -1, 1, -2, 2;
    CHECK(covariate_skewness(CovariateMatrix({"a", "b", "c", "d"}, {"x"}, sym))[0] ==
          doctest::Approx(0.0));
}

TEST_CASE("covariate matrix from a parsed table") {
    std::istringstream in("cluster_id,a,b\nA,1,2\nB,3,4\n");
    const CovariateMatrix cov(read_covariate_csv(in));
    CHECK(cov.clusters() == 2);
    CHECK(cov.values(1, 0) == 3.0);
    CHECK(cov.names[1] == "b");
}
