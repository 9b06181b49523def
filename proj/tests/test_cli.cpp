#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pclab/fourier.hpp"
#include "pclab/graph.hpp"
#include "pclab/hardcore.hpp"

using nlohmann::json;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
};

CliResult run_cli(const std::string& args,
                  const std::string& env = "PCLAB_DETERMINISTIC_TIME=1") {
    const std::string cmd = env + " " + PCLAB_CLI_PATH + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[4096];
    std::size_t got = 0;
    while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, got);
    const int status = pclose(pipe);
    CliResult res;
    res.out = std::move(out);
    res.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

}  // namespace

TEST_CASE("report schema and closed-form values") {
    const auto res = run_cli("lowdeg --n 100 --k 5 --d 1");
    REQUIRE(res.code == 0);
    const json rep = json::parse(res.out);
    for (const char* key : {"experiment", "version", "params", "estimate", "stderr",
                            "samples", "seed", "elapsed_ms", "extra"})
        CHECK(rep.contains(key));
    CHECK(rep["experiment"] == "lowdeg");
    CHECK(rep["version"] == "0.1.0");
    CHECK(rep["params"]["n"] == 100);
    CHECK(rep["estimate"].get<double>() == Catch::Approx(0.17589).margin(1e-5));
    CHECK(rep["stderr"].get<double>() == 0.0);
    CHECK(rep["elapsed_ms"].get<double>() == 0.0);
    CHECK(rep["seed"] == 0);

    const auto oracle = run_cli("oracle --n 4 --k 1 --d 1");
    REQUIRE(oracle.code == 0);
    const json orep = json::parse(oracle.out);
    CHECK(orep["estimate"].get<double>() ==
          Catch::Approx(0.15309310892394862).epsilon(1e-9));
    CHECK(orep["extra"]["ratio"].get<double>() == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("byte determinism for identical config and seed") {
    const auto a = run_cli("adv --n 20 --k 3 --samples 2000 --seed 5");
    const auto b = run_cli("adv --n 20 --k 3 --samples 2000 --seed 5");
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);

    const auto c = run_cli("lowdeg --n 50 --k 4 --d 2");
    const auto d = run_cli("lowdeg --n 50 --k 4 --d 2");
    CHECK(c.out == d.out);
}

TEST_CASE("worker count changes nothing but its own record") {
    const auto a = run_cli("adv --n 20 --k 3 --samples 2000 --seed 5 --workers 1");
    const auto b = run_cli("adv --n 20 --k 3 --samples 2000 --seed 5 --workers 2");
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    json ja = json::parse(a.out), jb = json::parse(b.out);
    ja["params"].erase("workers");
    jb["params"].erase("workers");
    CHECK(ja == jb);
}

TEST_CASE("error paths map to distinct codes") {
    CHECK(run_cli("adv --n 20 --k 3 --samples 100").code == 2);  // seed required
    CHECK(run_cli("bogus --n 2").code == 2);
    CHECK(run_cli("").code == 2);  // subcommand required

    const auto domain = run_cli("adv --n 10 --k 20 --samples 100 --seed 1");
    CHECK(domain.code == 2);
    CHECK(json::parse(domain.out)["error"]["type"] == "argument");

    const auto cap = run_cli("oracle --n 7 --k 2 --d 1");
    CHECK(cap.code == 3);
    CHECK(json::parse(cap.out)["error"]["type"] == "resource");

    CHECK(run_cli("--help").code == 0);
    CHECK(run_cli("--version").code == 0);
}

TEST_CASE("csv projection") {
    const auto res = run_cli("lowdeg --n 100 --k 5 --d 1 --format csv");
    REQUIRE(res.code == 0);
    std::istringstream ss(res.out);
    std::string header, row, rest;
    REQUIRE(std::getline(ss, header));
    REQUIRE(std::getline(ss, row));
    CHECK(!std::getline(ss, rest));
    CHECK(header.find("estimate") != std::string::npos);
    CHECK(header.find("params.n") != std::string::npos);
    CHECK(header.find("experiment") != std::string::npos);
    CHECK(row.find("lowdeg") != std::string::npos);
}

TEST_CASE("output file lands in the directory from the environment") {
    const auto dir = std::filesystem::temp_directory_path() / "pclab-cli-out";
    std::filesystem::create_directories(dir);
    const auto res = run_cli("lowdeg --n 30 --k 3 --d 1 --out rep.json",
                             "PCLAB_DETERMINISTIC_TIME=1 PCLAB_OUTPUT_DIR=" +
                                 dir.string());
    REQUIRE(res.code == 0);
    CHECK(res.out.empty());
    std::ifstream is(dir / "rep.json");
    REQUIRE(is.good());
    const json rep = json::parse(is);
    CHECK(rep["experiment"] == "lowdeg");
    std::filesystem::remove_all(dir);
}

TEST_CASE("sample emits parseable graph records") {
    const auto planted = run_cli("sample --n 5 --k 2 --count 2 --seed 9 --clique");
    REQUIRE(planted.code == 0);
    std::istringstream ss(planted.out);
    std::string line;
    for (int rec = 0; rec < 2; ++rec) {
        REQUIRE(std::getline(ss, line));
        CHECK(line == "5");
        REQUIRE(std::getline(ss, line));
        CHECK(line.size() == 10);
        CHECK(line.find_first_not_of("01") == std::string::npos);
        REQUIRE(std::getline(ss, line));
        CHECK(line.size() == 5);
        CHECK(line.find_first_not_of("01") == std::string::npos);
    }
    CHECK(!std::getline(ss, line));

    const auto null_out = run_cli("sample --n 4 --seed 3");
    REQUIRE(null_out.code == 0);
    std::istringstream gs(null_out.out);
    const pclab::Graph g = pclab::read_graph_text(gs);
    CHECK(g.n == 4);
}

TEST_CASE("noise-verify agrees with the eigenvalue law") {
    const auto res = run_cli("noise-verify --n 4 --p 0.3 --samples 4000 --seed 2");
    REQUIRE(res.code == 0);
    const json rep = json::parse(res.out);
    CHECK(rep["extra"]["exact_ok"] == true);
    CHECK(rep["extra"]["exact_residual"].get<double>() < 1e-10);
    CHECK(rep["extra"]["mc_ok"] == true);
    CHECK(rep["extra"]["expected"].get<double>() == Catch::Approx(0.09));
}

TEST_CASE("anticonc subcommands") {
    const auto cl = run_cli("anticonc claim65 --n 6 --p 0.5 --q 0.2 --samples 400 "
                            "--probes 3 --seed 4");
    REQUIRE(cl.code == 0);
    const json crep = json::parse(cl.out);
    CHECK(crep["extra"]["factor"].get<double>() ==
          Catch::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(crep["extra"]["probes_ok"] == true);
    CHECK(crep["extra"]["bound_ok"] == true);

    const auto hy = run_cli("anticonc hyper --mode bonami --dims 8 --d 2 --trials 30 "
                            "--seed 6");
    REQUIRE(hy.code == 0);
    CHECK(json::parse(hy.out)["extra"]["pass4"] == true);

    const auto lm = run_cli("anticonc lemma62 --n 16 --k 3 --p 0.6 --d 1 --b 0.5 "
                            "--outer 400 --inner 16 --seed 8");
    REQUIRE(lm.code == 0);
    const json lrep = json::parse(lm.out);
    CHECK(lrep["extra"]["survival_floor"].get<double>() == Catch::Approx(0.6));
    CHECK(lrep["estimate"].get<double>() > 0.0);
}

TEST_CASE("hardcore build and eval round trip through files") {
    const auto dir = std::filesystem::temp_directory_path() / "pclab-cli-hc";
    std::filesystem::create_directories(dir);
    const std::string sol = (dir / "sol.txt").string();

    // delta above the measured advantage: the zero solution is returned as-is
    const auto build = run_cli("hardcore build --n 200 --k 3 --d 1 --delta 1 --seed 7 "
                               "--out-solution " +
                               sol);
    REQUIRE(build.code == 0);
    const json brep = json::parse(build.out);
    CHECK(brep["extra"]["shortcut"] == true);
    CHECK(brep["extra"]["converged"] == true);

    const auto eval = run_cli("hardcore eval --solution " + sol +
                              " --samples 2000 --d 1 --seed 8");
    REQUIRE(eval.code == 0);
    const json erep = json::parse(eval.out);
    // sigma'(1, 1) = 2/3 acceptance at the zero solution
    CHECK(erep["extra"]["acceptance"].get<double>() ==
          Catch::Approx(2.0 / 3.0).margin(1e-12));
    CHECK(erep["estimate"].get<double>() < 0.1);

    // the mild-hardness gate refuses loud, pointing at --force
    const auto gated = run_cli("hardcore build --n 30 --k 12 --d 1 --delta 0.1 "
                               "--seed 1 --out-solution " +
                               (dir / "gated.txt").string());
    CHECK(gated.code == 2);
    CHECK(gated.out.find("force") != std::string::npos);

    std::filesystem::remove_all(dir);
}

TEST_CASE("hardcore eval refuses an unconverged solution") {
    const auto dir = std::filesystem::temp_directory_path() / "pclab-cli-unconv";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "sol.txt").string();

    pclab::DualSolution sol;
    sol.basis = std::make_shared<const pclab::BasisIndex>(
        pclab::enumerate_monomials(4, 1));
    sol.coeffs.assign(sol.basis->size() - 1, 0.0);
    sol.delta = 0.1;
    sol.converged = false;
    pclab::save_dual_solution(sol, {4, 2.0}, path);

    const auto refused = run_cli("hardcore eval --solution " + path +
                                 " --samples 100 --seed 1");
    CHECK(refused.code == 4);
    const json err = json::parse(refused.out);
    CHECK(err["error"]["type"] == "convergence");
    CHECK(err["error"]["message"].get<std::string>().find("allow-unconverged") !=
          std::string::npos);

    const auto allowed = run_cli("hardcore eval --solution " + path +
                                 " --samples 100 --seed 1 --allow-unconverged");
    CHECK(allowed.code == 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("amplify subcommand end to end") {
    const auto res = run_cli("amplify --alpha 0.9 --beta 1 --d 1 --n 12 --k 3 --p 0.7 "
                             "--z-count 4000 --y-count 32 --samples 200 --unpaired 100 "
                             "--seed 11");
    REQUIRE(res.code == 0);
    const json rep = json::parse(res.out);
    CHECK(rep["experiment"] == "amplify");
    CHECK(rep["params"]["n"] == 12);
    CHECK(rep["samples"] == 200);
    CHECK(rep["extra"]["threshold_used"].get<double>() > 0.0);
    CHECK(rep["extra"]["threshold_calibrated"] == true);
    CHECK(rep["extra"]["gamma_log10"].get<double>() < 0.0);
}

TEST_CASE("selftest negative control fails loudly") {
    const auto res = run_cli("selftest --corrupt");
    CHECK(res.code != 0);
    CHECK(res.out.find("FAIL") != std::string::npos);
    CHECK(res.out.find("[1]") != std::string::npos);
}
