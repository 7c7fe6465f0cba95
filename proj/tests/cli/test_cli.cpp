#include "pairsim/manifest.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
    int status = -1;
    std::string output;
};

fs::path workdir(const std::string& name) {
    const fs::path dir = fs::path(PAIRSIM_TEST_TMP) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Run run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + PAIRSIM_CLI_PATH + "\" " + args + " > \"" +
                            log.string() + "\" 2>&1";
    const int raw = std::system(cmd.c_str());
    Run r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.output = slurp(log);
    return r;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

}  // namespace

TEST_CASE("version banner") {
    const auto dir = workdir("version");
    const auto r = run_cli("--version", dir / "log.txt");
    CHECK(r.status == 0);
    CHECK(r.output.find("pairsim " PAIRSIM_VERSION) != std::string::npos);
}

TEST_CASE("no subcommand and unknown flags are usage errors") {
    const auto dir = workdir("usage");
    CHECK(run_cli("", dir / "a.txt").status == 2);
    CHECK(run_cli("estimate x.csv --bogus", dir / "b.txt").status == 2);
}

TEST_CASE("generate then estimate") {
    const auto dir = workdir("generate");
    write_file(dir / "config.json", R"({"pairs": 4, "mean_cluster_size": 6, "scenario": "post_treatment_linear"})");
    const auto g = run_cli("--seed 9 --out \"" + dir.string() + "\" generate --config \"" +
                               (dir / "config.json").string() + "\"",
                           dir / "gen.txt");
    REQUIRE_MESSAGE(g.status == 0, g.output);
    CHECK(fs::exists(dir / "data.csv"));
    CHECK(fs::exists(dir / "truth.csv"));
    CHECK(fs::exists(dir / "manifest.json"));

    const auto first = slurp(dir / "data.csv");
    const auto again = run_cli("--seed 9 --out \"" + dir.string() + "\" generate --config \"" +
                                   (dir / "config.json").string() + "\"",
                               dir / "gen2.txt");
    CHECK(again.status == 0);
    CHECK(slurp(dir / "data.csv") == first);

    for (const std::string e : {"design", "hier", "hier-cov", "pretest"}) {
        const auto r = run_cli("--out \"" + dir.string() + "\" estimate \"" +
                                   (dir / "data.csv").string() + "\" --estimator " + e,
                               dir / ("est_" + e + ".txt"));
        CHECK_MESSAGE(r.status == 0, r.output);
        CHECK(slurp(dir / "estimate.csv").rfind("estimator,tau_hat,se,ci_lo,ci_hi,branch,converged\n", 0) == 0);
    }
    const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest.at("command") == "estimate");
    CHECK(manifest.at("outputs")[0].at("sha256") == pairsim::sha256_file(dir / "estimate.csv"));
}

TEST_CASE("single pair has no standard error") {
    const auto dir = workdir("single_pair");
    write_file(dir / "data.csv",
               "pair_id,cluster_id,treatment,size,covariate,outcome\n"
               "1,1,1,2,,3\n1,1,1,2,,5\n1,2,0,2,,1\n1,2,0,2,,3\n");
    const auto r = run_cli("--out \"" + dir.string() + "\" estimate \"" + (dir / "data.csv").string() + "\"",
                           dir / "log.txt");
    REQUIRE_MESSAGE(r.status == 0, r.output);
    CHECK(slurp(dir / "estimate.csv") ==
          "estimator,tau_hat,se,ci_lo,ci_hi,branch,converged\ndesign,2,NA,NA,NA,NA,true\n");
}

TEST_CASE("malformed input exits with status 1") {
    const auto dir = workdir("malformed");
    write_file(dir / "data.csv", "pair_id,cluster_id,treatment,size,covariate,outcome\n1,1,1,x,,3\n");
    const auto r = run_cli("--out \"" + dir.string() + "\" estimate \"" + (dir / "data.csv").string() + "\"",
                           dir / "log.txt");
    CHECK(r.status == 1);
    CHECK(r.output.find("data.csv") != std::string::npos);
}

TEST_CASE("match writes pairs and balance") {
    const auto dir = workdir("match");
    write_file(dir / "cov.csv", "cluster_id,x,y\nA,0,0\nB,1,0.2\nC,0.1,0.4\nD,1.2,0.9\nE,5,3\nF,5.5,2.1\n");
    for (const std::string m : {"optimal", "greedy", "cem"}) {
        const auto r = run_cli("--out \"" + dir.string() + "\" match \"" + (dir / "cov.csv").string() +
                                   "\" --method " + m,
                               dir / ("log_" + m + ".txt"));
        REQUIRE_MESSAGE(r.status == 0, r.output);
        CHECK(slurp(dir / "pairs.csv").rfind("pair_id,cluster_id_a,cluster_id_b,distance\n", 0) == 0);
        CHECK(fs::exists(dir / "balance.csv"));
    }
    CHECK(fs::exists(dir / "unmatched.csv"));
}

TEST_CASE("match rejects an odd number of clusters") {
    const auto dir = workdir("match_odd");
    write_file(dir / "cov.csv", "cluster_id,x\nA,0\nB,1\nC,2\n");
    const auto r = run_cli("--out \"" + dir.string() + "\" match \"" + (dir / "cov.csv").string() + "\"",
                           dir / "log.txt");
    CHECK(r.status == 1);
    CHECK(r.output.find("cannot pair an odd number of clusters (3)") != std::string::npos);
}

TEST_CASE("simulate honours the plan and the worker count") {
    const auto dir = workdir("simulate");
    write_file(dir / "plan.json", R"({
  "dgp": {"pairs": 5, "mean_cluster_size": 6, "scenario": "post_treatment_nonlinear"},
  "sigma_delta_grid": [0, 1],
  "estimators": ["design", "hier-cov"],
  "iterations": 20,
  "master_seed": 3
})");
    std::string digest;
    for (const std::string w : {"1", "3"}) {
        const auto out = dir / ("w" + w);
        const auto r = run_cli("--workers " + w + " --out \"" + out.string() + "\" simulate --plan \"" +
                                   (dir / "plan.json").string() + "\"",
                               dir / ("log" + w + ".txt"));
        REQUIRE_MESSAGE(r.status == 0, r.output);
        CHECK(fs::exists(out / "figure1.svg"));
        const auto d = pairsim::sha256_file(out / "metrics.csv");
        if (digest.empty()) digest = d;
        CHECK(d == digest);
    }
    const auto metrics = slurp(dir / "w1" / "metrics.csv");
    CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 5);
}

TEST_CASE("figure1 output is reproducible") {
    const auto dir = workdir("figure1");
    std::string svg_digest, csv_digest;
    int run = 0;
    for (const std::string w : {"1", "4", "4"}) {
        const auto out = dir / ("run" + std::to_string(++run) + "_w" + w);
        const auto r = run_cli("--workers " + w + " --out \"" + out.string() +
                                   "\" figure1 --iterations 8 --grid 0,2",
                               dir / "log.txt");
        REQUIRE_MESSAGE(r.status == 0, r.output);
        const auto s = pairsim::sha256_file(out / "figure1.svg");
        const auto c = pairsim::sha256_file(out / "metrics.csv");
        if (svg_digest.empty()) {
            svg_digest = s;
            csv_digest = c;
        }
        CHECK(s == svg_digest);
        CHECK(c == csv_digest);
        const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
        CHECK(manifest.at("master_seed") == 42);
    }
}
