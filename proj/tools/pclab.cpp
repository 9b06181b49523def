// pclab command-line harness: every experiment in the library behind one
// binary with deterministic seeding and machine-readable reports.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pclab/amplify.hpp"
#include "pclab/anticonc.hpp"
#include "pclab/distinguish.hpp"
#include "pclab/fourier.hpp"
#include "pclab/graph.hpp"
#include "pclab/hardcore.hpp"
#include "pclab/noise.hpp"
#include "pclab/oracle.hpp"
#include "pclab/rng.hpp"
#include "pclab/stats.hpp"

namespace {

using nlohmann::json;
using namespace pclab;

constexpr const char* kVersion = "0.1.0";

bool deterministic_time() {
    const char* v = std::getenv("PCLAB_DETERMINISTIC_TIME");
    return v != nullptr && *v != '\0' && std::string(v) != "0";
}

// Relative --out paths land in PCLAB_OUTPUT_DIR when it is set.
std::string resolve_out(const std::string& path) {
    if (path.empty() || path.front() == '/') return path;
    const char* dir = std::getenv("PCLAB_OUTPUT_DIR");
    if (dir == nullptr || *dir == '\0') return path;
    std::string full(dir);
    if (full.back() != '/') full += '/';
    return full + path;
}

json make_report(const std::string& experiment, json params, double estimate, double se,
                 std::int64_t samples, std::uint64_t seed, json extra) {
    return json{{"experiment", experiment}, {"version", kVersion},
                {"params", std::move(params)}, {"estimate", estimate},
                {"stderr", se},              {"samples", samples},
                {"seed", seed},              {"extra", std::move(extra)}};
}

std::string csv_cell(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

// One row per report; columns are the flattened key paths in sorted order.
std::string to_csv(const json& rep) {
    const json flat = rep.flatten();
    std::string header, row;
    for (auto it = flat.begin(); it != flat.end(); ++it) {
        std::string key = it.key();  // "/params/n" -> "params.n"
        key.erase(0, 1);
        for (auto& c : key)
            if (c == '/') c = '.';
        if (!header.empty()) {
            header += ',';
            row += ',';
        }
        header += key;
        row += csv_cell(it.value());
    }
    return header + "\n" + row + "\n";
}

void emit(const json& rep, const std::string& format, const std::string& out_path) {
    const std::string body = format == "csv" ? to_csv(rep) : rep.dump(2) + "\n";
    if (out_path.empty()) {
        std::cout << body;
        return;
    }
    const std::string full = resolve_out(out_path);
    std::ofstream os(full);
    if (!os) throw argument_error("cannot open output file " + full);
    os << body;
    if (!os) throw argument_error("write failed for " + full);
}

struct RunResult {
    std::optional<json> report;  // absent for subcommands with bespoke output
    int exit_code = 0;
};

// ---- selftest ---------------------------------------------------------

struct CheckLine {
    std::string label;
    bool pass = false;
    std::string detail;
};

// Fast verification battery: chain eigenvalue law, planted character
// moments, the tiny-instance exact optimum with its sampled counterpart,
// and the hypercontractivity suites. `corrupt` flips the chain's keep/drop
// convention in this battery's own simulations (prediction untouched), a
// negative control that must turn the first check red.
std::vector<CheckLine> run_selftest(std::uint64_t seed, bool corrupt) {
    std::vector<CheckLine> out;

    {  // [1] eigenvalue law: exact at n=4, sampled at n=50
        double worst = 0.0;
        for (const double p : {0.3, 0.5, 0.9}) {
            const double p_sim = corrupt ? 1.0 - p : p;
            for (const std::uint64_t mask : {0x1ULL, 0x7ULL}) {  // one edge, triangle
                std::vector<double> table(64);
                Monomial s;
                std::vector<std::int64_t> slots;
                for (int b = 0; b < 6; ++b)
                    if ((mask >> b) & 1) slots.push_back(b);
                s = make_monomial(slots, 4);
                for (std::uint64_t code = 0; code < 64; ++code)
                    table[code] = chi(s, graph_from_code(code, 4));
                const auto got = exact_apply_T(table, 4, p_sim);
                const double lam = std::pow(p, static_cast<double>(s.vertex_support.size()));
                for (std::uint64_t code = 0; code < 64; ++code)
                    worst = std::max(worst, std::abs(got[code] - lam * table[code]));
            }
        }
        bool ok = worst <= 1e-10;

        RngStream rng(RngStream::derive(seed, "selftest-eig", 0));
        const Monomial edge = make_monomial({edge_index(0, 1, 50)}, 50);
        MeanVar mv;
        for (int i = 0; i < 100000; ++i) {
            const Graph g = sample_null(50, rng);
            const Graph h = step(g, {0.5, false}, rng);
            mv.push(chi(edge, h) * chi(edge, g));
        }
        const double dev = std::abs(mv.mean() - 0.25);
        ok = ok && dev <= 4.0 * mv.stderr_mean();
        std::ostringstream d;
        d << "exact residual " << worst << ", sampled |mean-0.25| " << dev;
        out.push_back({"[1] chain eigenvalue law", ok, d.str()});
    }

    {  // [2] planted character moments at n=100, k=5
        const ModelParams mp{100, 5.0};
        const double q = 0.05;
        const std::vector<Monomial> sets = {
            make_monomial({edge_index(0, 1, 100)}, 100),
            make_monomial({edge_index(0, 1, 100), edge_index(0, 2, 100)}, 100),
            make_monomial({edge_index(0, 1, 100), edge_index(0, 2, 100),
                           edge_index(1, 2, 100)},
                          100)};
        std::vector<MeanVar> mv(sets.size());
        RngStream rng(RngStream::derive(seed, "selftest-moments", 0));
        for (int i = 0; i < 1000000; ++i) {
            const auto smp = sample_planted(mp, rng);
            for (std::size_t j = 0; j < sets.size(); ++j)
                mv[j].push(chi(sets[j], smp.graph));
        }
        bool ok = true;
        double worst_z = 0.0;
        for (std::size_t j = 0; j < sets.size(); ++j) {
            const double expect =
                std::pow(q, static_cast<double>(sets[j].vertex_support.size()));
            const double z = std::abs(mv[j].mean() - expect) / mv[j].stderr_mean();
            worst_z = std::max(worst_z, z);
            ok = ok && z <= 4.0;
        }
        std::ostringstream d;
        d << "worst |z| " << worst_z << " over " << sets.size() << " characters";
        out.push_back({"[2] planted character moments", ok, d.str()});
    }

    {  // [4] tiny-instance exact optimum and its split-sample estimate
        const double exact = exact_low_degree_optimum({4, 1.0}, 1);
        bool ok = std::abs(exact - 0.15309310892394862) <= 1e-9;

        const auto basis =
            std::make_shared<const BasisIndex>(enumerate_monomials(4, 1));
        RngStream rng(RngStream::derive(seed, "selftest-claim25", 0));
        const auto est =
            claim_2_5_estimate(basis, make_planted_sampler({4, 2.0}), 100000, rng);
        const double v_exact = 6.0 * std::pow(0.5, 4);  // six edges, q = 1/2
        ok = ok && std::abs(est.v - v_exact) <= 4.0 * est.v_se;
        std::ostringstream d;
        d << "exact " << exact << ", sampled v " << est.v << " vs " << v_exact;
        out.push_back({"[4] degree-1 optimum, exact and sampled", ok, d.str()});
    }

    {  // [9] hypercontractivity suites
        RngStream rng(RngStream::derive(seed, "selftest-hyper", 0));
        bool ok = true;
        double min_margin = 1.0;
        for (int d = 0; d <= 3; ++d) {
            const auto rep = hypercontract_suite(HyperMode::bonami, 10, d, 100, rng);
            ok = ok && rep.pass4 && rep.pass8 && rep.pass_logconvex;
            min_margin = std::min({min_margin, rep.min_margin4, rep.min_margin8});
        }
        const auto sym =
            hypercontract_suite(HyperMode::biased_symmetric, 12, 3, 100, rng, 0.3);
        ok = ok && sym.pass4 && sym.pass_logconvex;
        min_margin = std::min(min_margin, sym.min_margin4);
        std::ostringstream d;
        d << "min margin " << min_margin;
        out.push_back({"[9] hypercontractivity suites", ok, d.str()});
    }

    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"planted-clique distinguisher lab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string format = "json";
    std::string out_path;
    app.add_option("--format", format, "report format")
        ->check(CLI::IsMember({"json", "csv"}));
    app.add_option("--out", out_path,
                   "output file (relative paths land in PCLAB_OUTPUT_DIR)");

    std::function<RunResult()> runner;

    {  // sample: emit graph records in the text or binary format
        auto* sc = app.add_subcommand("sample", "draw null or planted graphs");
        auto n = std::make_shared<int>(0);
        auto k = std::make_shared<double>(0.0);
        auto count = std::make_shared<int>(1);
        auto seed = std::make_shared<std::uint64_t>(0);
        auto binary = std::make_shared<bool>(false);
        auto clique = std::make_shared<bool>(false);
        sc->add_option("--n", *n, "vertex count")->required();
        sc->add_option("--k", *k, "expected clique size (0: null model)");
        sc->add_option("--count", *count, "number of draws");
        sc->add_option("--seed", *seed, "master seed")->required();
        sc->add_flag("--binary", *binary, "binary graph records");
        sc->add_flag("--clique", *clique,
                     "append the clique indicator line (text planted draws)");
        sc->callback([&runner, n, k, count, seed, binary, clique, &out_path] {
            runner = [=, &out_path]() -> RunResult {
                if (*count < 1) throw argument_error("sample: --count must be >= 1");
                std::ostringstream body;
                RngStream rng(RngStream::derive(*seed, "sample", 0));
                for (int i = 0; i < *count; ++i) {
                    Graph g;
                    CliqueIndicator x;
                    if (*k > 0.0) {
                        auto smp = sample_planted({*n, *k}, rng);
                        g = std::move(smp.graph);
                        x = std::move(smp.clique);
                    } else {
                        g = sample_null(*n, rng);
                    }
                    if (*binary) {
                        write_graph_binary(g, body);
                    } else {
                        write_graph_text(g, body);
                        if (*clique && *k > 0.0) {
                            for (int v = 0; v < g.n; ++v)
                                body << (x.bits[static_cast<std::size_t>(v)] ? '1' : '0');
                            body << '\n';
                        }
                    }
                }
                if (out_path.empty()) {
                    std::cout << body.str();
                } else {
                    const std::string full = resolve_out(out_path);
                    std::ofstream os(full, std::ios::binary);
                    if (!os) throw argument_error("cannot open output file " + full);
                    os << body.str();
                }
                return {};
            };
        });
    }

    {  // adv: edge-majority advantage by direct graph sampling
        auto* sc = app.add_subcommand("adv", "sampled advantage of the edge-majority test");
        auto n = std::make_shared<int>(0);
        auto k = std::make_shared<double>(0.0);
        auto m = std::make_shared<std::int64_t>(100000);
        auto seed = std::make_shared<std::uint64_t>(0);
        auto workers = std::make_shared<unsigned>(1);
        sc->add_option("--n", *n)->required();
        sc->add_option("--k", *k)->required();
        sc->add_option("--samples", *m, "draws per distribution");
        sc->add_option("--seed", *seed)->required();
        sc->add_option("--workers", *workers);
        sc->callback([&runner, n, k, m, seed, workers] {
            runner = [=]() -> RunResult {
                RngStream rng(RngStream::derive(*seed, "adv", 0));
                const auto est =
                    adv_montecarlo(edge_count_test(), make_planted_sampler({*n, *k}),
                                   make_null_sampler(*n), *m, rng, *workers);
                json params{{"n", *n}, {"k", *k}, {"samples", *m}, {"workers", *workers}};
                json extra{{"signed_diff", est.signed_diff},
                           {"mean_planted", est.mean_planted},
                           {"se_planted", est.se_planted},
                           {"mean_null", est.mean_null},
                           {"se_null", est.se_null}};
                return {make_report("adv", std::move(params), est.estimate, est.se,
                                    est.samples, *seed, std::move(extra)),
                        0};
            };
        });
    }

    {  // edge-test: the same advantage via exact edge-count simulation
        auto* sc = app.add_subcommand("edge-test",
                                      "edge-majority advantage, counts-only fast path");
        auto n = std::make_shared<int>(0);
        auto k = std::make_shared<double>(0.0);
        auto m = std::make_shared<std::int64_t>(1000000);
        auto seed = std::make_shared<std::uint64_t>(0);
        auto workers = std::make_shared<unsigned>(1);
        sc->add_option("--n", *n)->required();
        sc->add_option("--k", *k)->required();
        sc->add_option("--samples", *m, "draws per distribution");
        sc->add_option("--seed", *seed)->required();
        sc->add_option("--workers", *workers);
        sc->callback([&runner, n, k, m, seed, workers] {
            runner = [=]() -> RunResult {
                RngStream rng(RngStream::derive(*seed, "edge-test", 0));
                const auto est = edge_count_experiment({*n, *k}, *m, rng, *workers);
                json params{{"n", *n}, {"k", *k}, {"samples", *m}, {"workers", *workers}};
                json extra{{"signed_diff", est.signed_diff},
                           {"mean_planted", est.mean_planted},
                           {"mean_null", est.mean_null}};
                return {make_report("edge-test", std::move(params), est.estimate, est.se,
                                    est.samples, *seed, std::move(extra)),
                        0};
            };
        });
    }

    {  // lowdeg: closed-form degree-d advantage
        auto* sc = app.add_subcommand("lowdeg", "closed-form low-degree advantage");
        auto n = std::make_shared<std::int64_t>(0);
        auto k = std::make_shared<double>(0.0);
        auto d = std::make_shared<int>(1);
        sc->add_option("--n", *n)->required();
        sc->add_option("--k", *k)->required();
        sc->add_option("--d", *d)->required();
        sc->callback([&runner, n, k, d] {
            runner = [=]() -> RunResult {
                const auto adv = low_degree_advantage_closed_form(*n, *k, *d);
                json params{{"n", *n}, {"k", *k}, {"d", *d}};
                const double nn = static_cast<double>(*n);
                json extra{{"r2", static_cast<double>(adv.r2)},
                           {"lower_bound_r2", adv.lower_bound_r2},
                           {"corollary_ref", *k * *k / (std::sqrt(2.0) * nn)}};
                return {make_report("lowdeg", std::move(params), adv.r, 0.0, 0, 0,
                                    std::move(extra)),
                        0};
            };
        });
    }

    {  // noise-verify: eigenvalue law, exact when the oracle cap allows
        auto* sc = app.add_subcommand("noise-verify", "chain eigenvalue-law checks");
        auto n = std::make_shared<int>(0);
        auto p = std::make_shared<double>(0.5);
        auto m = std::make_shared<std::int64_t>(100000);
        auto seed = std::make_shared<std::uint64_t>(0);
        sc->add_option("--n", *n)->required();
        sc->add_option("--p", *p, "keep probability")->required();
        sc->add_option("--samples", *m);
        sc->add_option("--seed", *seed)->required();
        sc->callback([&runner, n, p, m, seed] {
            runner = [=]() -> RunResult {
                if (*n < 2) throw argument_error("noise-verify: --n must be >= 2");
                if (*m < 2) throw argument_error("noise-verify: --samples must be >= 2");
                RngStream rng(RngStream::derive(*seed, "noise-verify", 0));
                const Monomial edge = make_monomial({edge_index(0, 1, *n)}, *n);
                MeanVar mv;
                for (std::int64_t i = 0; i < *m; ++i) {
                    const Graph g = sample_null(*n, rng);
                    const Graph h = step(g, {*p, false}, rng);
                    mv.push(chi(edge, h) * chi(edge, g));
                }
                const double expected = *p * *p;
                const bool mc_ok =
                    std::abs(mv.mean() - expected) <= 4.0 * mv.stderr_mean();

                json extra{{"expected", expected}, {"mc_ok", mc_ok}};
                if (*n <= kDefaultOracleCap) {
                    const auto codes = std::uint64_t{1} << edge_slot_count(*n);
                    std::vector<double> table(codes);
                    for (std::uint64_t c = 0; c < codes; ++c)
                        table[c] = chi(edge, graph_from_code(c, *n));
                    const auto got = exact_apply_T(table, *n, *p);
                    double worst = 0.0;
                    for (std::uint64_t c = 0; c < codes; ++c)
                        worst = std::max(worst, std::abs(got[c] - expected * table[c]));
                    extra["exact_residual"] = worst;
                    extra["exact_ok"] = worst <= 1e-10;
                }
                json params{{"n", *n}, {"p", *p}, {"samples", *m}};
                return {make_report("noise-verify", std::move(params), mv.mean(),
                                    mv.stderr_mean(), *m, *seed, std::move(extra)),
                        0};
            };
        });
    }

    {  // oracle: exact tiny-instance optimum vs the closed form
        auto* sc = app.add_subcommand("oracle", "exact enumeration comparisons");
        auto n = std::make_shared<int>(0);
        auto k = std::make_shared<double>(0.0);
        auto d = std::make_shared<int>(1);
        auto cap = std::make_shared<int>(kDefaultOracleCap);
        sc->add_option("--n", *n)->required();
        sc->add_option("--k", *k)->required();
        sc->add_option("--d", *d)->required();
        sc->add_option("--cap", *cap, "exact-enumeration vertex cap");
        sc->callback([&runner, n, k, d, cap] {
            runner = [=]() -> RunResult {
                const double exact =
                    exact_low_degree_optimum({*n, *k}, *d, DegreeMode::edge_count, *cap);
                const auto closed = low_degree_advantage_closed_form(*n, *k, *d);
                json params{{"n", *n}, {"k", *k}, {"d", *d}, {"cap", *cap}};
                json extra{{"closed_form", closed.r},
                           {"ratio", closed.r > 0.0 ? exact / closed.r : 1.0}};
                return {make_report("oracle", std::move(params), exact, 0.0, 0, 0,
                                    std::move(extra)),
                        0};
            };
        });
    }

    {  // hardcore build | eval
        auto* hc = app.add_subcommand("hardcore", "hard-core planted distribution");
        hc->require_subcommand(1);

        auto* bd = hc->add_subcommand("build", "optimize the smoothed dual");
        auto bn = std::make_shared<int>(0);
        auto bk = std::make_shared<double>(0.0);
        auto bdg = std::make_shared<int>(1);
        auto bdelta = std::make_shared<double>(0.0);
        auto bseed = std::make_shared<std::uint64_t>(0);
        auto bout = std::make_shared<std::string>();
        auto bforce = std::make_shared<bool>(false);
        auto bphases = std::make_shared<std::string>();
        auto bval = std::make_shared<std::int64_t>(2000000);
        auto bvalf = std::make_shared<std::int64_t>(4000000);
        auto bcheck = std::make_shared<std::int64_t>(20000);
        bd->add_option("--n", *bn)->required();
        bd->add_option("--k", *bk)->required();
        bd->add_option("--d", *bdg)->required();
        bd->add_option("--delta", *bdelta)->required();
        bd->add_option("--seed", *bseed)->required();
        bd->add_option("--out-solution", *bout, "solution file path")->required();
        bd->add_flag("--force", *bforce, "override the mild-hardness gate");
        bd->add_option("--phases", *bphases,
                       "schedule eta:batch:iters[,eta:batch:iters...]");
        bd->add_option("--m-validation", *bval);
        bd->add_option("--m-validation-final", *bvalf);
        bd->add_option("--check-every", *bcheck);
        bd->callback([&runner, bn, bk, bdg, bdelta, bseed, bout, bforce, bphases, bval,
                      bvalf, bcheck] {
            runner = [=]() -> RunResult {
                SgdConfig cfg;
                cfg.m_validation = *bval;
                cfg.m_validation_final = *bvalf;
                cfg.check_every = *bcheck;
                if (!bphases->empty()) {
                    std::istringstream ss(*bphases);
                    std::string tok;
                    while (std::getline(ss, tok, ',')) {
                        SgdPhase ph;
                        char c1 = 0, c2 = 0;
                        std::istringstream ts(tok);
                        if (!(ts >> ph.eta >> c1 >> ph.batch >> c2 >> ph.iterations) ||
                            c1 != ':' || c2 != ':')
                            throw argument_error("hardcore build: bad --phases entry '" +
                                                 tok + "'");
                        cfg.phases.push_back(ph);
                    }
                }
                RngStream rng(RngStream::derive(*bseed, "hardcore-build", 0));
                const auto built =
                    build_hardcore({*bn, *bk}, *bdg, *bdelta, cfg, rng, *bforce);
                save_dual_solution(built.solution, {*bn, *bk}, resolve_out(*bout));
                json params{{"n", *bn},         {"k", *bk},
                            {"d", *bdg},        {"delta", *bdelta},
                            {"force", *bforce}, {"solution", *bout}};
                json extra{{"converged", built.solution.converged},
                           {"iterations", built.solution.iterations},
                           {"shortcut", built.shortcut},
                           {"gate_product", built.gate_product},
                           {"adv_d", built.adv_d},
                           {"adv_4d", built.adv_4d}};
                return {make_report("hardcore-build", std::move(params),
                                    built.solution.grad_norm, built.solution.grad_norm_se,
                                    built.solution.iterations, *bseed, std::move(extra)),
                        0};
            };
        });

        auto* ev = hc->add_subcommand("eval", "verification report for a solution");
        auto epath = std::make_shared<std::string>();
        auto em = std::make_shared<std::int64_t>(100000);
        auto ed = std::make_shared<int>(1);
        auto eseed = std::make_shared<std::uint64_t>(0);
        auto eworkers = std::make_shared<unsigned>(1);
        auto eallow = std::make_shared<bool>(false);
        ev->add_option("--solution", *epath, "solution file path")->required();
        ev->add_option("--samples", *em);
        ev->add_option("--d", *ed, "degree for the induced advantage");
        ev->add_option("--seed", *eseed)->required();
        ev->add_option("--workers", *eworkers);
        ev->add_flag("--allow-unconverged", *eallow);
        ev->callback([&runner, epath, em, ed, eseed, eworkers, eallow] {
            runner = [=]() -> RunResult {
                auto loaded = load_dual_solution(resolve_out(*epath));
                if (!loaded.solution.converged && !*eallow)
                    throw convergence_error(
                        "hardcore eval: stored solution is not converged "
                        "(pass --allow-unconverged to evaluate anyway)");
                const auto sampler = make_hardcore_sampler(
                    loaded.solution, make_planted_sampler(loaded.model));
                RngStream rng(RngStream::derive(*eseed, "hardcore-eval", 0));
                const auto rep =
                    hardcore_report(sampler, loaded.model, *ed, *em, rng, *eworkers);
                json params{{"solution", *epath},
                            {"samples", *em},
                            {"d", *ed},
                            {"workers", *eworkers},
                            {"n", loaded.model.n},
                            {"k", loaded.model.k},
                            {"delta", loaded.solution.delta}};
                json extra{{"acceptance", rep.acceptance},
                           {"acceptance_se", rep.acceptance_se},
                           {"sup_density_bound", rep.sup_density_bound},
                           {"grad_norm", rep.gradient.norm},
                           {"grad_norm_se", rep.gradient.norm_se},
                           {"r_induced_v", rep.r_induced.v},
                           {"r_induced_v_se", rep.r_induced.v_se}};
                return {make_report("hardcore-eval", std::move(params),
                                    rep.r_induced.estimate, rep.r_induced.se, rep.samples,
                                    *eseed, std::move(extra)),
                        0};
            };
        });
    }

    {  // amplify: end-to-end reduction run
        auto* sc = app.add_subcommand("amplify", "black-box advantage reduction");
        auto alpha = std::make_shared<double>(0.9);
        auto beta = std::make_shared<double>(1.0);
        auto d = std::make_shared<int>(1);
        auto n = std::make_shared<std::int64_t>(0);
        auto k = std::make_shared<double>(0.0);
        auto p = std::make_shared<double>(0.0);
        auto threshold = std::make_shared<double>(0.0);
        auto tsigma = std::make_shared<double>(1.45);
        auto z_count = std::make_shared<std::int64_t>(100000);
        auto y_count = std::make_shared<std::int64_t>(200);
        auto replicates = std::make_shared<int>(1);
        auto pool_fit = std::make_shared<bool>(false);
        auto pairs = std::make_shared<std::int64_t>(2000);
        auto unpaired = std::make_shared<std::int64_t>(1000);
        auto seed = std::make_shared<std::uint64_t>(0);
        auto workers = std::make_shared<unsigned>(1);
        sc->add_option("--alpha", *alpha)->required();
        sc->add_option("--beta", *beta)->required();
        sc->add_option("--d", *d)->required();
        sc->add_option("--n", *n)->required();
        sc->add_option("--k", *k, "clique parameter of the planted model")->required();
        sc->add_option("--p", *p, "chain keep probability (0: use n^(alpha-beta))");
        sc->add_option("--threshold", *threshold, "decision threshold (0: calibrate)");
        sc->add_option("--threshold-sigma", *tsigma,
                       "calibrated threshold in null sds of C");
        sc->add_option("--z-count", *z_count, "projection-fit sample count");
        sc->add_option("--y-count", *y_count, "chain moves per estimate");
        sc->add_option("--b-replicates", *replicates, "B draws averaged per pair arm");
        sc->add_flag("--symmetrize-fit", *pool_fit, "pool edge coefficients (d=1)");
        sc->add_option("--samples", *pairs, "paired evaluations of the built test");
        sc->add_option("--unpaired", *unpaired, "independent evaluations");
        sc->add_option("--seed", *seed)->required();
        sc->add_option("--workers", *workers);
        sc->callback([&runner, alpha, beta, d, n, k, p, threshold, tsigma, z_count,
                      y_count, replicates, pool_fit, pairs, unpaired, seed, workers] {
            runner = [=]() -> RunResult {
                auto params_sym = derive_params(*alpha, *beta, *d, *n);
                const double keep = *p > 0.0 ? *p : params_sym.keep_prob;
                EvalConfig cfg;
                cfg.threshold = *threshold;
                cfg.threshold_sigma = *tsigma;
                cfg.z_count = *z_count;
                cfg.y_count = *y_count;
                cfg.b_replicates = *replicates;
                cfg.symmetrize_fit = *pool_fit;
                cfg.m_pairs = *pairs;
                cfg.m_unpaired = *unpaired;
                cfg.d = *d;
                cfg.workers = *workers;
                const ModelParams mp{static_cast<int>(*n), *k};
                RngStream rng(RngStream::derive(*seed, "amplify", 0));
                const auto rep =
                    evaluate_reduction(edge_count_test(), {keep, true},
                                       make_planted_sampler(mp), mp, cfg, rng, params_sym);
                json params{{"alpha", *alpha},     {"beta", *beta},
                            {"d", *d},             {"n", *n},
                            {"k", *k},             {"p", keep},
                            {"threshold", *threshold},
                            {"threshold_sigma", *tsigma}, {"z_count", *z_count},
                            {"y_count", *y_count}, {"b_replicates", *replicates},
                            {"symmetrize_fit", *pool_fit},
                            {"samples", *pairs},   {"unpaired", *unpaired},
                            {"workers", *workers}};
                json extra{{"threshold_used", rep.threshold_used},
                           {"threshold_calibrated", rep.threshold_calibrated},
                           {"null_c_sd", rep.null_c_sd},
                           {"adv_a", rep.adv_a_pstar.estimate},
                           {"adv_a_se", rep.adv_a_pstar.se},
                           {"r_lowdeg", rep.r_lowdeg_pstar.estimate},
                           {"r_lowdeg_se", rep.r_lowdeg_pstar.se},
                           {"adv_b_unpaired", rep.adv_b_unpaired.estimate},
                           {"adv_b_unpaired_se", rep.adv_b_unpaired.se},
                           {"eps", params_sym.eps},
                           {"gamma_log10", params_sym.gamma_log10},
                           {"delta_log10", params_sym.delta_log10},
                           {"query_budget", params_sym.query_budget}};
                return {make_report("amplify", std::move(params), rep.adv_b_paired.estimate,
                                    rep.adv_b_paired.se, rep.adv_b_paired.pairs, *seed,
                                    std::move(extra)),
                        0};
            };
        });
    }

    {  // anticonc claim65 | hyper | lemma62
        auto* ac = app.add_subcommand("anticonc", "anticoncentration tool chest");
        ac->require_subcommand(1);

        auto* cl = ac->add_subcommand("claim65", "one-step contraction check");
        auto cn = std::make_shared<int>(0);
        auto cp = std::make_shared<double>(0.5);
        auto cq = std::make_shared<double>(0.2);
        auto cm = std::make_shared<std::int64_t>(4000);
        auto cprobes = std::make_shared<int>(20);
        auto cseed = std::make_shared<std::uint64_t>(0);
        cl->add_option("--n", *cn)->required();
        cl->add_option("--p", *cp)->required();
        cl->add_option("--q", *cq)->required();
        cl->add_option("--samples", *cm);
        cl->add_option("--probes", *cprobes);
        cl->add_option("--seed", *cseed)->required();
        cl->callback([&runner, cn, cp, cq, cm, cprobes, cseed] {
            runner = [=]() -> RunResult {
                if (*cn < 3) throw argument_error("anticonc claim65: --n must be >= 3");
                SubspaceElement w;
                w.edge_part = make_monomial({edge_index(0, 1, *cn)}, *cn);
                w.vertex_part = {2};
                w.r = {1.0, 1.0, 1.0, 1.0};
                w.side = SubspaceSide::shrunk;
                RngStream rng(RngStream::derive(*cseed, "anticonc-claim65", 0));
                const auto rep =
                    claim_6_5_check(w, *cn, *cp, *cq, *cm, rng, *cprobes);
                double worst = 0.0, worst_se = 0.0;
                for (const auto& probe : rep.probes) {
                    worst = std::max(worst, std::abs(probe.mc - probe.closed));
                    worst_se = std::max(worst_se, probe.se);
                }
                json params{{"n", *cn},        {"p", *cp},
                            {"q", *cq},        {"samples", *cm},
                            {"probes", *cprobes}};
                json extra{{"factor", rep.factor},
                           {"factor_variant", rep.factor_variant},
                           {"bound", rep.bound},
                           {"norm_ratio", rep.norm_ratio},
                           {"probes_ok", rep.probes_ok},
                           {"bound_ok", rep.bound_ok}};
                return {make_report("anticonc-claim65", std::move(params), worst, worst_se,
                                    *cm, *cseed, std::move(extra)),
                        0};
            };
        });

        auto* hy = ac->add_subcommand("hyper", "hypercontractivity suite");
        auto hmode = std::make_shared<std::string>("bonami");
        auto hdims = std::make_shared<int>(10);
        auto hd = std::make_shared<int>(3);
        auto htrials = std::make_shared<std::int64_t>(100);
        auto hbias = std::make_shared<double>(0.5);
        auto hseed = std::make_shared<std::uint64_t>(0);
        hy->add_option("--mode", *hmode)->check(CLI::IsMember({"bonami", "biased"}));
        hy->add_option("--dims", *hdims);
        hy->add_option("--d", *hd);
        hy->add_option("--trials", *htrials);
        hy->add_option("--bias", *hbias);
        hy->add_option("--seed", *hseed)->required();
        hy->callback([&runner, hmode, hdims, hd, htrials, hbias, hseed] {
            runner = [=]() -> RunResult {
                const auto mode = *hmode == "bonami" ? HyperMode::bonami
                                                     : HyperMode::biased_symmetric;
                RngStream rng(RngStream::derive(*hseed, "anticonc-hyper", 0));
                const auto rep =
                    hypercontract_suite(mode, *hdims, *hd, *htrials, rng, *hbias);
                json params{{"mode", *hmode}, {"dims", *hdims},     {"d", *hd},
                            {"trials", *htrials}, {"bias", *hbias}};
                json extra{{"pass4", rep.pass4},
                           {"pass8", rep.pass8},
                           {"pass_logconvex", rep.pass_logconvex},
                           {"bound4", rep.bound4},
                           {"bound8", rep.bound8},
                           {"min_margin8", rep.min_margin8},
                           {"min_margin_log", rep.min_margin_log}};
                return {make_report("anticonc-hyper", std::move(params), rep.min_margin4,
                                    0.0, rep.trials, *hseed, std::move(extra)),
                        0};
            };
        });

        auto* lm = ac->add_subcommand("lemma62", "norm survival under one step");
        auto ln = std::make_shared<int>(0);
        auto lk = std::make_shared<double>(0.0);
        auto lp = std::make_shared<double>(0.5);
        auto ld = std::make_shared<int>(1);
        auto lb = std::make_shared<double>(0.5);
        auto louter = std::make_shared<std::int64_t>(2000);
        auto linner = std::make_shared<std::int64_t>(64);
        auto lseed = std::make_shared<std::uint64_t>(0);
        auto lworkers = std::make_shared<unsigned>(1);
        lm->add_option("--n", *ln)->required();
        lm->add_option("--k", *lk)->required();
        lm->add_option("--p", *lp)->required();
        lm->add_option("--d", *ld);
        lm->add_option("--b", *lb);
        lm->add_option("--outer", *louter);
        lm->add_option("--inner", *linner);
        lm->add_option("--seed", *lseed)->required();
        lm->add_option("--workers", *lworkers);
        lm->callback([&runner, ln, lk, lp, ld, lb, louter, linner, lseed, lworkers] {
            runner = [=]() -> RunResult {
                RngStream rng(RngStream::derive(*lseed, "anticonc-lemma62", 0));
                const auto rep =
                    lemma_6_2_experiment(edge_count_test(), {*ln, *lk}, *lp, *ld, *lb,
                                         *louter, *linner, rng, *lworkers);
                json params{{"n", *ln},      {"k", *lk},       {"p", *lp},
                            {"d", *ld},      {"b", *lb},       {"outer", *louter},
                            {"inner", *linner}, {"workers", *lworkers}};
                json extra{{"f_norm2", rep.f_norm2},
                           {"f_norm2_se", rep.f_norm2_se},
                           {"tf_norm2", rep.tf_norm2},
                           {"survival_floor", rep.survival_floor},
                           {"survived", rep.survived},
                           {"degenerate", rep.degenerate},
                           {"tail_prob", rep.anticonc.prob},
                           {"tail_prob_se", rep.anticonc.prob_se}};
                return {make_report("anticonc-lemma62", std::move(params),
                                    rep.survival_ratio, rep.survival_ratio_se, *louter,
                                    *lseed, std::move(extra)),
                        0};
            };
        });
    }

    {  // selftest: fast verification battery with a pass/fail table
        auto* sc = app.add_subcommand("selftest", "fast verification battery");
        auto seed = std::make_shared<std::uint64_t>(20260815);
        auto corrupt = std::make_shared<bool>(false);
        sc->add_option("--seed", *seed, "master seed (fixed default)");
        sc->add_flag("--corrupt", *corrupt,
                     "negative control: flip the chain keep/drop convention");
        sc->callback([&runner, seed, corrupt] {
            runner = [=]() -> RunResult {
                const auto lines = run_selftest(*seed, *corrupt);
                bool all_ok = true;
                for (const auto& line : lines) {
                    all_ok = all_ok && line.pass;
                    std::cout << (line.pass ? "PASS  " : "FAIL  ") << line.label << " — "
                              << line.detail << "\n";
                }
                std::cout << (all_ok ? "selftest: all checks passed"
                                     : "selftest: FAILURES above")
                          << "\n";
                return {std::nullopt, all_ok ? 0 : 1};
            };
        });
    }

    // let --format/--out land after a subcommand too
    for (auto* sc : app.get_subcommands([](CLI::App*) { return true; })) {
        sc->fallthrough();
        for (auto* nested : sc->get_subcommands([](CLI::App*) { return true; }))
            nested->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const auto t0 = std::chrono::steady_clock::now();
    try {
        RunResult res = runner();
        if (res.report) {
            const auto t1 = std::chrono::steady_clock::now();
            const double ms =
                deterministic_time()
                    ? 0.0
                    : std::chrono::duration<double, std::milli>(t1 - t0).count();
            (*res.report)["elapsed_ms"] = ms;
            emit(*res.report, format, out_path);
        }
        return res.exit_code;
    } catch (const argument_error& e) {
        std::cout << json{{"error", {{"code", 2}, {"type", "argument"},
                                     {"message", e.what()}}}}
                         .dump(2)
                  << "\n";
        return 2;
    } catch (const resource_error& e) {
        std::cout << json{{"error", {{"code", 3}, {"type", "resource"},
                                     {"message", e.what()}}}}
                         .dump(2)
                  << "\n";
        return 3;
    } catch (const convergence_error& e) {
        std::cout << json{{"error", {{"code", 4}, {"type", "convergence"},
                                     {"message", e.what()}}}}
                         .dump(2)
                  << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cout << json{{"error", {{"code", 1}, {"type", "internal"},
                                     {"message", e.what()}}}}
                         .dump(2)
                  << "\n";
        return 1;
    }
}
