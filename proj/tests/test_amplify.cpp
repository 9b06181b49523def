#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <vector>

#include "helpers.hpp"
#include "pclab/amplify.hpp"
#include "pclab/oracle.hpp"

using namespace pclab;

namespace {

// exact projection of a 64-entry table onto {constant, single edges} at n=4
ProjectionFit exact_degree1_fit(const std::vector<double>& table) {
    const auto coeffs = exact_fourier_coeffs(table);
    ProjectionFit fit;
    fit.basis = std::make_shared<BasisIndex>(enumerate_monomials(4, 1));
    fit.chat.assign(7, 0.0);
    fit.chat[0] = coeffs[0];
    for (int e = 0; e < 6; ++e) fit.chat[static_cast<std::size_t>(e) + 1] = coeffs[1u << e];
    fit.fast = EdgeCoeffs::from(std::vector<double>(fit.chat.begin() + 1, fit.chat.end()), 6);
    fit.z_count = 64;
    return fit;
}

std::vector<double> residual_table(const std::vector<double>& table) {
    auto coeffs = exact_fourier_coeffs(table);
    coeffs[0] = 0.0;
    for (int e = 0; e < 6; ++e) coeffs[1u << e] = 0.0;
    return exact_table_from_coeffs(std::move(coeffs));
}

}  // namespace

TEST_CASE("parameter derivation") {
    CHECK(kGammaBaseDefault == std::ldexp(1.0, -99) / 1853020188851841.0);

    const auto rp = derive_params(0.9, 1.0, 100, 1000);
    CHECK(rp.keep_prob == Catch::Approx(std::pow(1000.0, -0.1)).epsilon(1e-14));
    // p^sqrt(d) = n^{(alpha-beta) sqrt(d)} = n^{-1} at these parameters
    CHECK(rp.eps == Catch::Approx(1e-3).epsilon(1e-12));
    CHECK(rp.gamma_exponent == Catch::Approx(1.6e7).epsilon(1e-12));
    CHECK(rp.gamma_log10 < -7.0e8);
    CHECK(rp.gamma_log10 > -7.5e8);
    CHECK(rp.delta_log10 > 1e8);  // delta = 400 eps / gamma is astronomically large
    CHECK(rp.query_budget > 1e300);

    const auto small = derive_params(0.5, 1.0, 2, 64);
    CHECK(small.keep_prob == Catch::Approx(0.125).epsilon(1e-14));
    CHECK(small.query_budget == Catch::Approx(std::pow(64.0, 4.0)).epsilon(1e-14));

    CHECK_THROWS_AS(derive_params(1.0, 0.9, 2, 64), argument_error);
    CHECK_THROWS_AS(derive_params(0.0, 1.0, 2, 64), argument_error);
    CHECK_THROWS_AS(derive_params(0.5, 1.0, 0, 64), argument_error);
    CHECK_THROWS_AS(derive_params(0.5, 1.0, 2, 1), argument_error);
    CHECK_THROWS_AS(derive_params(0.5, 1.0, 2, 64, 400.0, 1.5), argument_error);
    CHECK_THROWS_AS(derive_params(0.5, 1.0, 2, 64, 0.0), argument_error);
}

TEST_CASE("projection fit picks up the aligned coordinate exactly") {
    TestFunction A{"slot0-sign",
                   [](const Graph& g, RngStream&) { return g.sign(0) > 0 ? 1.0 : -1.0; }};
    auto basis = std::make_shared<BasisIndex>(enumerate_monomials(8, 1));
    RngStream rng(2718);
    const auto fit = fit_projection(A, basis, 4096, rng);
    REQUIRE(fit.chat.size() == basis->size());
    CHECK(fit.z_count == 4096);
    REQUIRE(fit.fast.has_value());
    CHECK(fit.chat[1] == 1.0);  // <chi_0, A> is 1 on every sample
    CHECK(std::abs(fit.chat[0]) < 0.1);
    for (std::size_t i = 2; i < fit.chat.size(); ++i) CHECK(std::abs(fit.chat[i]) < 0.1);

    TestFunction one{"const", [](const Graph&, RngStream&) { return 1.0; }};
    RngStream rng2(3);
    const auto cfit = fit_projection(one, basis, 1000, rng2);
    CHECK(cfit.chat[0] == 1.0);

    CHECK_THROWS_AS(fit_projection(A, basis, 0, rng), argument_error);
}

TEST_CASE("projection fit fast path equals the generic path") {
    auto fast_basis = std::make_shared<BasisIndex>(enumerate_monomials(6, 1));
    auto slow_basis = std::make_shared<BasisIndex>(
        enumerate_monomials(6, 2, DegreeMode::vertex_count));
    REQUIRE(slow_basis->size() == fast_basis->size());
    const TestFunction A = edge_count_test();
    RngStream a(606), b(606), c(606);
    const auto ff = fit_projection(A, fast_basis, 10000, a);
    const auto fg = fit_projection(A, slow_basis, 10000, b);
    REQUIRE(ff.fast.has_value());
    REQUIRE(!fg.fast.has_value());
    for (std::size_t i = 0; i < ff.chat.size(); ++i) CHECK(ff.chat[i] == fg.chat[i]);

    const auto fw = fit_projection(A, fast_basis, 10000, c, 3);
    for (std::size_t i = 0; i < ff.chat.size(); ++i) CHECK(ff.chat[i] == fw.chat[i]);
}

TEST_CASE("residual estimate vanishes when the fit is exact") {
    // A is exactly its own degree-1 projection, so every sampled y cancels
    TestFunction A{"slot0-sign",
                   [](const Graph& g, RngStream&) { return g.sign(0) > 0 ? 1.0 : -1.0; }};
    ProjectionFit fit;
    fit.basis = std::make_shared<BasisIndex>(enumerate_monomials(10, 1));
    fit.chat.assign(46, 0.0);
    fit.chat[1] = 1.0;
    fit.fast = EdgeCoeffs::from(std::vector<double>(fit.chat.begin() + 1, fit.chat.end()),
                                45);
    RngStream rng(11);
    const Graph x = sample_null(10, rng);
    const auto c = estimate_C(x, A, fit, {0.5, false}, 100, rng);
    CHECK(c.value == 0.0);
    CHECK(c.se == 0.0);
    CHECK(c.y_count == 100);

    CHECK_THROWS_AS(estimate_C(x, A, fit, {0.5, false}, 0, rng), argument_error);
    const Graph wrong = sample_null(4, rng);
    CHECK_THROWS_AS(estimate_C(wrong, A, fit, {0.5, false}, 10, rng), argument_error);
}

TEST_CASE("residual estimate recovers the noise eigenvalue on a triangle") {
    // chi of a triangle is orthogonal to the degree-1 span; C(x) then
    // estimates (T chi)(x) = p^3 chi(x)
    const int n = 10;
    const Monomial tri = make_monomial(
        {edge_index(0, 1, n), edge_index(0, 2, n), edge_index(1, 2, n)}, n);
    TestFunction A{"triangle",
                   [tri](const Graph& g, RngStream&) { return static_cast<double>(chi(tri, g)); }};
    ProjectionFit fit;
    fit.basis = std::make_shared<BasisIndex>(enumerate_monomials(n, 1));
    fit.chat.assign(46, 0.0);  // exact projection is zero

    RngStream rng(12);
    const Graph x = sample_null(n, rng);
    const double p = 0.6;
    const auto c = estimate_C(x, A, fit, {p, false}, 20000, rng);
    CHECK(c.se > 0.0);
    CHECK(std::abs(c.value - p * p * p * chi(tri, x)) < 4.0 * c.se);

    // keep_prob 1: the chain is the identity and C is exact with no spread
    const auto ident = estimate_C(x, A, fit, {1.0, false}, 50, rng);
    CHECK(ident.value == chi(tri, x));
    CHECK(ident.se == 0.0);
}

TEST_CASE("thresholded test endpoints and validation") {
    TestFunction A = edge_count_test();
    auto fit = std::make_shared<const ProjectionFit>([] {
        ProjectionFit f;
        f.basis = std::make_shared<BasisIndex>(enumerate_monomials(6, 1));
        f.chat.assign(16, 0.0);
        return f;
    }());
    RngStream rng(21);
    const Graph g = sample_null(6, rng);

    auto always = build_test_B(A, fit, {0.5, false}, 0.0, 8);
    CHECK(always.label == "threshold-C");
    CHECK(always.fn(g, rng) == 1.0);
    auto never = build_test_B(A, fit, {0.5, false},
                              std::numeric_limits<double>::infinity(), 8);
    CHECK(never.fn(g, rng) == -1.0);
    auto mid = build_test_B(A, fit, {0.5, false}, 0.3, 8);
    for (int t = 0; t < 5; ++t) {
        const double v = mid.fn(sample_null(6, rng), rng);
        CHECK((v == 1.0 || v == -1.0));
    }

    CHECK_THROWS_AS(build_test_B(A, fit, {0.5, false}, -0.1, 8), argument_error);
    CHECK_THROWS_AS(build_test_B(A, fit, {0.5, false},
                                 std::numeric_limits<double>::quiet_NaN(), 8),
                    argument_error);
    CHECK_THROWS_AS(build_test_B(A, fit, {0.5, false}, 0.1, 0), argument_error);
    CHECK_THROWS_AS(build_test_B(A, nullptr, {0.5, false}, 0.1, 8), argument_error);
}

TEST_CASE("residual estimator tracks the exact noised residual at n=4") {
    // exact residual f- of the edge-majority test, noised by T at p = 1/2;
    // quadrupling the sample budget shrinks the mean absolute error
    const TestFunction A = edge_count_test();
    std::vector<double> table(64);
    for (std::uint64_t code = 0; code < 64; ++code) {
        RngStream dummy(0);
        table[code] = A.fn(graph_from_code(code, 4), dummy);
    }
    const auto fit = exact_degree1_fit(table);
    const auto fminus = residual_table(table);
    const auto exact_tf = exact_apply_T(fminus, 4, 0.5);

    RngStream rng(31);
    auto mean_abs_err = [&](std::int64_t y_count) {
        double acc = 0.0;
        for (std::uint64_t code = 0; code < 64; ++code) {
            const Graph x = graph_from_code(code, 4);
            const auto c = estimate_C(x, A, fit, {0.5, false}, y_count, rng);
            acc += std::abs(c.value - exact_tf[code]);
        }
        return acc / 64.0;
    };
    const double coarse = mean_abs_err(16);
    const double fine = mean_abs_err(4096);
    CHECK(fine <= 0.05);
    CHECK(coarse > fine);
}

TEST_CASE("single-relabeling estimates average to the symmetrized chain") {
    const TestFunction A = edge_count_test();
    std::vector<double> table(64);
    for (std::uint64_t code = 0; code < 64; ++code) {
        RngStream dummy(0);
        table[code] = A.fn(graph_from_code(code, 4), dummy);
    }
    const auto fit = exact_degree1_fit(table);
    const auto fminus = residual_table(table);
    const auto exact_sym = exact_apply_T(fminus, 4, 0.5, true);

    const Graph x = graph_from_code(0b001011, 4);
    RngStream rng(32);
    MeanVar mv;
    for (int call = 0; call < 3000; ++call)
        mv.push(estimate_C(x, A, fit, {0.5, true}, 4, rng).value);
    CHECK(std::abs(mv.mean() - exact_sym[x.bits[0]]) < 4.0 * mv.stderr_mean());
}

TEST_CASE("end-to-end reduction on a small instance") {
    const ModelParams mp{20, 3.0};
    const ChainParams chain{0.7, true};
    EvalConfig cfg;
    cfg.z_count = 20000;
    cfg.y_count = 200;
    cfg.m_pairs = 600;
    cfg.m_unpaired = 400;
    cfg.m_adv_a = 20000;
    cfg.m_rlow = 40000;
    cfg.calibration_count = 300;
    RngStream rng(404);
    const auto params = derive_params(0.9, 1.0, 1, 20);
    const auto rep = evaluate_reduction(edge_count_test(), chain,
                                        make_planted_sampler(mp), mp, cfg, rng, params);

    // one chain step thins the planted model to k' = 0.7 * 3 = 2.1
    const double exact_adv = ref::edge_sign_advantage(20, 2.1);
    CHECK(std::abs(rep.adv_a_pstar.signed_diff - exact_adv) < 4.0 * rep.adv_a_pstar.se);

    const auto closed = low_degree_advantage_closed_form(20, 2.1, 1);
    CHECK(std::abs(rep.r_lowdeg_pstar.v - static_cast<double>(closed.r2)) <
          4.0 * rep.r_lowdeg_pstar.v_se);

    CHECK(rep.threshold_calibrated);
    CHECK(rep.null_c_sd > 0.0);
    CHECK(rep.threshold_used == std::max(1.45 * rep.null_c_sd, 1e-12));
    CHECK(rep.adv_b_paired.pairs == 600);
    CHECK(std::abs(rep.adv_b_paired.estimate) <= 2.0);
    CHECK(rep.adv_b_unpaired.samples == 400);
    CHECK(std::abs(rep.adv_b_paired.estimate - rep.adv_b_unpaired.signed_diff) <
          4.0 * (rep.adv_b_paired.se + rep.adv_b_unpaired.se));
    REQUIRE(rep.params.has_value());
    CHECK(rep.params->alpha == 0.9);

    // preset threshold skips calibration; unpaired leg can be disabled
    EvalConfig quick = cfg;
    quick.threshold = 0.25;
    quick.z_count = 2000;
    quick.m_adv_a = 200;
    quick.m_rlow = 400;
    quick.m_pairs = 50;
    quick.m_unpaired = 0;
    quick.y_count = 20;
    RngStream rng2(405);
    const auto rep2 = evaluate_reduction(edge_count_test(), chain,
                                         make_planted_sampler(mp), mp, quick, rng2);
    CHECK(!rep2.threshold_calibrated);
    CHECK(rep2.threshold_used == 0.25);
    CHECK(rep2.adv_b_unpaired.samples == 0);
    CHECK(!rep2.params.has_value());

    EvalConfig bad = cfg;
    bad.m_pairs = 1;
    CHECK_THROWS_AS(evaluate_reduction(edge_count_test(), chain, make_planted_sampler(mp),
                                       mp, bad, rng),
                    argument_error);
    bad = cfg;
    bad.d = 0;
    CHECK_THROWS_AS(evaluate_reduction(edge_count_test(), chain, make_planted_sampler(mp),
                                       mp, bad, rng),
                    argument_error);
    bad = cfg;
    bad.calibration_count = 1;
    CHECK_THROWS_AS(evaluate_reduction(edge_count_test(), chain, make_planted_sampler(mp),
                                       mp, bad, rng),
                    argument_error);
}

TEST_CASE("fast chain evaluator agrees with estimate_C draw for draw") {
    const int n = 16;
    const TestFunction A = edge_count_test();
    auto basis = std::make_shared<BasisIndex>(enumerate_monomials(n, 1));
    RngStream fr(4040);
    const auto fit = fit_projection(A, basis, 20000, fr);
    detail::FastC ev(A, fit, 0.6);

    RngStream rng(808);
    for (int t = 0; t < 5; ++t) {
        const Graph x = sample_null(n, rng);
        RngStream r1(919u + static_cast<unsigned>(t)), r2(919u + static_cast<unsigned>(t));
        const auto slow = estimate_C(x, A, fit, {0.6, false}, 64, r1);
        const double fast = ev.value(x, 64, r2);
        CHECK(std::abs(slow.value - fast) < 2e-3);  // same draws, only rounding differs
        CHECK(r1.next_u64() == r2.next_u64());      // identical stream consumption
    }
}

TEST_CASE("replicate-averaged pairs estimate the same advantage") {
    const ModelParams mp{24, 3.0};
    const ChainParams chain{0.7, true};
    EvalConfig cfg;
    cfg.z_count = 4000;
    cfg.y_count = 16;
    cfg.m_pairs = 1500;
    cfg.m_unpaired = 0;
    cfg.m_adv_a = 200;
    cfg.m_rlow = 400;
    cfg.calibration_count = 400;
    EvalConfig cfg3 = cfg;
    cfg3.b_replicates = 3;

    // same master seed: identical fit and threshold, only the pair loop differs
    RngStream r1(7117), r3(7117);
    const auto rep1 = evaluate_reduction(edge_count_test(), chain, make_planted_sampler(mp),
                                         mp, cfg, r1);
    const auto rep3 = evaluate_reduction(edge_count_test(), chain, make_planted_sampler(mp),
                                         mp, cfg3, r3);
    CHECK(rep1.b_replicates == 1);
    CHECK(rep3.b_replicates == 3);
    CHECK(rep3.threshold_used == rep1.threshold_used);
    CHECK(std::abs(rep1.adv_b_paired.estimate - rep3.adv_b_paired.estimate) <=
          4.0 * (rep1.adv_b_paired.se + rep3.adv_b_paired.se) + 1e-12);
    // averaging fresh draws inside each arm cannot widen the pair spread
    CHECK(rep3.adv_b_paired.se <= rep1.adv_b_paired.se * 1.1);
}

TEST_CASE("pooling the fit averages the edge slots and nothing else") {
    const int n = 12;
    const TestFunction A = edge_count_test();
    auto basis = std::make_shared<BasisIndex>(enumerate_monomials(n, 1));
    RngStream fr(5151);
    auto fit = fit_projection(A, basis, 4000, fr);
    const double c0 = fit.chat[0];
    const double mean = std::accumulate(fit.chat.begin() + 1, fit.chat.end(), 0.0) /
                        static_cast<double>(fit.chat.size() - 1);
    symmetrize_edge_fit(fit);
    CHECK(fit.chat[0] == c0);
    for (std::size_t i = 1; i < fit.chat.size(); ++i) CHECK(fit.chat[i] == mean);

    ProjectionFit quad;
    quad.basis = std::make_shared<BasisIndex>(enumerate_monomials(8, 2));
    quad.chat.assign(quad.basis->size(), 0.0);
    CHECK_THROWS_AS(symmetrize_edge_fit(quad), argument_error);
}

TEST_CASE("pooled evaluator matches estimate_C through the popcount shortcut") {
    const int n = 16;
    const TestFunction A = edge_count_test();
    auto basis = std::make_shared<BasisIndex>(enumerate_monomials(n, 1));
    RngStream fr(6262);
    auto fit = fit_projection(A, basis, 20000, fr);
    symmetrize_edge_fit(fit);
    detail::FastC ev(A, fit, 0.6);
    REQUIRE(ev.pooled.has_value());

    RngStream rng(909);
    for (int t = 0; t < 5; ++t) {
        const Graph x = sample_null(n, rng);
        RngStream r1(929u + static_cast<unsigned>(t)), r2(929u + static_cast<unsigned>(t));
        const auto slow = estimate_C(x, A, fit, {0.6, false}, 64, r1);
        const double fast = ev.value(x, 64, r2);
        // same draws; the reference rounds coefficients to float, the pooled
        // popcount path carries the exact double
        CHECK(std::abs(slow.value - fast) < 5e-6);
        CHECK(r1.next_u64() == r2.next_u64());
    }
}

TEST_CASE("evaluate_reduction pools the fit on request") {
    const ModelParams mp{20, 3.0};
    const ChainParams chain{0.7, true};
    EvalConfig cfg;
    cfg.z_count = 3000;
    cfg.y_count = 12;
    cfg.m_pairs = 300;
    cfg.m_unpaired = 0;
    cfg.m_adv_a = 100;
    cfg.m_rlow = 200;
    cfg.calibration_count = 200;
    cfg.symmetrize_fit = true;
    RngStream r(3434);
    const auto rep = evaluate_reduction(edge_count_test(), chain, make_planted_sampler(mp),
                                        mp, cfg, r);
    CHECK(rep.fit_symmetrized);
    CHECK(rep.threshold_used > 0.0);
    CHECK(std::isfinite(rep.adv_b_paired.estimate));

    EvalConfig bad = cfg;
    bad.d = 2;
    RngStream rb(3434);
    CHECK_THROWS_AS(evaluate_reduction(edge_count_test(), chain, make_planted_sampler(mp),
                                       mp, bad, rb),
                    argument_error);
}
