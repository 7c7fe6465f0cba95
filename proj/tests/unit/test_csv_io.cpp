#include "helpers.hpp"

#include "pairsim/csv_io.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace pairsim;

TEST_CASE("format_double round-trips exactly") {
    std::mt19937_64 gen(11);
    std::normal_distribution<double> z(0.0, 1e3);
    for (int i = 0; i < 1000; ++i) {
        const double v = z(gen);
        CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(2.0) == "2");
}

TEST_CASE("experiment CSV round-trip preserves every field") {
    std::mt19937_64 gen(5);
    for (bool cov : {false, true}) {
        testing::RandomDataOptions o;
        o.covariates = cov;
        const auto data = testing::random_data(gen, o);
        std::stringstream buf;
        write_experiment_csv(buf, data);
        const auto back = read_experiment_csv(buf);
        REQUIRE(back.pair_count() == data.pair_count());
        for (std::size_t k = 0; k < data.pair_count(); ++k) {
            for (int j = 0; j < 2; ++j) {
                const auto& a = data.pairs[k].clusters[j];
                const auto& b = back.pairs[k].clusters[j];
                CHECK(a.size == b.size);
                CHECK(a.treatment == b.treatment);
                CHECK(a.outcomes == b.outcomes);
                CHECK(a.covariate == b.covariate);
            }
        }
    }
}

TEST_CASE("experiment CSV header and layout") {
    ExperimentData d;
    d.pairs.push_back(testing::pair(testing::cluster(1, {3.0, 5.0}), testing::cluster(0, {1.0})));
    std::stringstream buf;
    write_experiment_csv(buf, d);
    CHECK(buf.str() ==
          "pair_id,cluster_id,treatment,size,covariate,outcome\n"
          "1,1,1,2,,3\n1,1,1,2,,5\n1,2,0,1,,1\n");
}

TEST_CASE("malformed experiment CSV reports file and row") {
    const auto fails_at = [](const std::string& text, std::size_t row) {
        std::istringstream in(text);
        try {
            read_experiment_csv(in, "data.csv");
        } catch (const InputError& e) {
            CHECK(e.source() == "data.csv");
            CHECK(e.row() == row);
            return;
        }
        FAIL("no InputError for: " << text);
    };
    const std::string h = "pair_id,cluster_id,treatment,size,covariate,outcome\n";
    fails_at("pair,cluster\n", 1);
    fails_at(h + "1,1,1,1,,abc\n", 2);
    fails_at(h + "1,3,1,1,,2\n", 2);
    fails_at(h + "1,1,1,1,,2\n1,1,0,1,,3\n", 3);
    fails_at(h + "1,1,1,1,,2\n1,2\n", 3);
}

TEST_CASE("a pair missing a cluster is rejected") {
    std::istringstream in("pair_id,cluster_id,treatment,size,covariate,outcome\n1,1,1,1,,2\n");
    CHECK_THROWS_AS(read_experiment_csv(in), InputError);
}

TEST_CASE("truth CSV lists one row per cluster") {
    PotentialOutcomeTable t;
    PairTruth p;
    p.clusters[0].y0_mean = 10;
    p.clusters[0].y1_mean = 13;
    p.clusters[0].tau = 3;
    p.clusters[1].y0_mean = 30;
    p.clusters[1].y1_mean = 31;
    p.clusters[1].tau = 1;
    t.pairs.push_back(p);
    std::stringstream buf;
    write_truth_csv(buf, t);
    CHECK(buf.str() == "pair_id,cluster_id,y0_mean,y1_mean,tau\n1,1,10,13,3\n1,2,30,31,1\n");
}

TEST_CASE("covariate CSV parsing") {
    std::istringstream in("cluster_id,age,income\nA,1,2\nB,3,4.5\n");
    const auto t = read_covariate_csv(in);
    CHECK(t.ids == std::vector<std::string>{"A", "B"});
    CHECK(t.names == std::vector<std::string>{"age", "income"});
    CHECK(t.rows[1][1] == 4.5);

    std::istringstream ragged("cluster_id,age\nA,1,2\n");
    CHECK_THROWS_AS(read_covariate_csv(ragged), InputError);
    std::istringstream missing("cluster_id,age\nA,\n");
    CHECK_THROWS_AS(read_covariate_csv(missing), InputError);
    std::istringstream nocols("cluster_id\nA\n");
    CHECK_THROWS_AS(read_covariate_csv(nocols), InputError);
}
