#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>

#include "helpers.hpp"
#include "pclab/distinguish.hpp"
#include "pclab/oracle.hpp"

using namespace pclab;

TEST_CASE("closed form equals brute-force enumeration") {
    const auto c8 = low_degree_advantage_closed_form(8, 2.0, 3);
    const long double b8 = ref::brute_force_r2(8, 2.0, 3);
    CHECK(std::abs(static_cast<double>(c8.r2 - b8)) < 1e-12 * static_cast<double>(b8));

    const auto c7 = low_degree_advantage_closed_form(7, 3.0, 3);
    const long double b7 = ref::brute_force_r2(7, 3.0, 3);
    CHECK(std::abs(static_cast<double>(c7.r2 - b7)) < 1e-11 * static_cast<double>(b7));

    // small-d spot checks: d=1 has the closed value sqrt(C(n,2)) q^2
    const auto c1 = low_degree_advantage_closed_form(4, 1.0, 1);
    CHECK(std::abs(c1.r - std::sqrt(6.0) / 16.0) < 1e-15);
}

TEST_CASE("closed-form anchor values") {
    CHECK(std::abs(low_degree_advantage_closed_form(4, 1.0, 1).r -
                   0.15309310892394862) < 1e-12);
    CHECK(std::abs(low_degree_advantage_closed_form(200, 3.0, 1).r -
                   0.031740155954248235) < 1e-12);
    CHECK(std::abs(low_degree_advantage_closed_form(200, 3.0, 4).r -
                   0.032759132971015251) < 1e-12);
    CHECK(std::abs(low_degree_advantage_closed_form(200, 4.2, 1).r -
                   0.062210705670326556) < 1e-12);
    CHECK(std::abs(low_degree_advantage_closed_form(200, 6.0, 1).r -
                   0.12696062381699294) < 1e-12);
}

TEST_CASE("closed form edge cases and domain") {
    CHECK(low_degree_advantage_closed_form(100, 5.0, 0).r == 0.0);
    CHECK(low_degree_advantage_closed_form(100, 0.0, 3).r == 0.0);
    const auto out = low_degree_advantage_closed_form(100, 5.0, 2);
    CHECK(out.lower_bound_r2 == 625.0 / 20000.0);
    CHECK_THROWS_AS(low_degree_advantage_closed_form(0, 0.0, 1), argument_error);
    CHECK_THROWS_AS(low_degree_advantage_closed_form(100, -1.0, 1), argument_error);
    CHECK_THROWS_AS(low_degree_advantage_closed_form(100, 101.0, 1), argument_error);
    CHECK_THROWS_AS(low_degree_advantage_closed_form(100, 5.0, -1), argument_error);
}

TEST_CASE("squared advantage sits in the k^4/(2n^2) envelope") {
    const auto out = low_degree_advantage_closed_form(10000, 10.0, 4);
    const double lb = out.lower_bound_r2;
    const double r2 = static_cast<double>(out.r2);
    CHECK(r2 >= lb);
    CHECK(r2 <= 1.1 * lb);

    // deep in the subcritical regime the d>=2 value collapses onto k^2/(sqrt2 n)
    const auto big = low_degree_advantage_closed_form(1000000, 30.0, 3);
    const double approx = 30.0 * 30.0 / (std::sqrt(2.0) * 1e6);
    CHECK(std::abs(big.r / approx - 1.0) < 0.01);
}

TEST_CASE("edge-sign test advantage matches the exact law") {
    // the enumeration oracle reproduces independently computed values
    REQUIRE(std::abs(ref::edge_sign_advantage(200, 4.2) - 0.04948011004046604) < 1e-9);
    REQUIRE(std::abs(ref::edge_sign_advantage(200, 6.0) - 0.10036803705312858) < 1e-9);

    const double exact = 0.10036803705312858;
    const ModelParams mp{200, 6.0};
    RngStream rng(2024);
    const auto est = adv_montecarlo(edge_count_test(), make_planted_sampler(mp),
                                    make_null_sampler(200), 200000, rng);
    CHECK(est.samples == 200000);
    CHECK(est.se > 0.0);
    CHECK(std::abs(est.signed_diff - exact) < 4.0 * est.se);

    RngStream rng2(2025);
    const auto fast = edge_count_experiment(mp, 200000, rng2);
    CHECK(std::abs(fast.signed_diff - exact) < 4.0 * fast.se);
}

TEST_CASE("monte carlo advantage is worker invariant") {
    const ModelParams mp{50, 4.0};
    RngStream a(31), b(31);
    const auto e1 = adv_montecarlo(edge_count_test(), make_planted_sampler(mp),
                                   make_null_sampler(50), 20000, a, 1);
    const auto e3 = adv_montecarlo(edge_count_test(), make_planted_sampler(mp),
                                   make_null_sampler(50), 20000, b, 3);
    CHECK(e1.estimate == e3.estimate);
    CHECK(e1.mean_planted == e3.mean_planted);
    CHECK(e1.se == e3.se);
    CHECK(e1.seed == e3.seed);
}

TEST_CASE("r-ratio replays the advantage stream for sign tests") {
    // identical draw order and a denominator of exactly 1 for +-1 tests
    const ModelParams mp{60, 5.0};
    RngStream a(91), b(91);
    const auto adv = adv_montecarlo(edge_count_test(), make_planted_sampler(mp),
                                    make_null_sampler(60), 30000, a);
    const auto rr = r_ratio_montecarlo(edge_count_test(), make_planted_sampler(mp),
                                       make_null_sampler(60), 30000, b);
    CHECK(rr.denom == 1.0);
    CHECK(rr.numerator == adv.signed_diff);
    CHECK(rr.estimate == adv.signed_diff);
    CHECK(rr.samples == adv.samples);
}

TEST_CASE("split-sample estimator recovers the exact squared-mean sum") {
    // n=4, k=2: six single-edge means of q^2 = 1/4, so v = 6/16 = 0.375
    const ModelParams mp{4, 2.0};
    auto basis = std::make_shared<BasisIndex>(enumerate_monomials(4, 1));
    RngStream rng(555);
    const auto est = claim_2_5_estimate(basis, make_planted_sampler(mp), 100000, rng);
    CHECK(est.samples == 100000);
    CHECK(est.v_se > 0.0);
    CHECK(std::abs(est.v - 0.375) < 4.0 * est.v_se);
    CHECK(std::abs(est.estimate - std::sqrt(0.375)) < 4.0 * est.se);
}

TEST_CASE("split-sample fast path equals the generic path") {
    // the vertex-degree basis at d=2 lists exactly the single edges but does
    // not satisfy the fast-path shape test, forcing the generic loop
    const ModelParams mp{4, 2.0};
    auto fast_basis = std::make_shared<BasisIndex>(enumerate_monomials(4, 1));
    auto slow_basis = std::make_shared<BasisIndex>(
        enumerate_monomials(4, 2, DegreeMode::vertex_count));
    REQUIRE(detail::is_full_edge_basis(*fast_basis));
    REQUIRE(!detail::is_full_edge_basis(*slow_basis));
    REQUIRE(slow_basis->size() == fast_basis->size());

    RngStream a(808), b(808);
    const auto ef = claim_2_5_estimate(fast_basis, make_planted_sampler(mp), 20000, a);
    const auto eg = claim_2_5_estimate(slow_basis, make_planted_sampler(mp), 20000, b);
    CHECK(ef.v == eg.v);
    CHECK(ef.v_se == eg.v_se);
    CHECK(ef.estimate == eg.estimate);

    RngStream c(808);
    const auto ew = claim_2_5_estimate(fast_basis, make_planted_sampler(mp), 20000, c, 3);
    CHECK(ew.v == ef.v);
}

TEST_CASE("estimator argument checks") {
    const ModelParams mp{10, 2.0};
    RngStream rng(1);
    CHECK_THROWS_AS(adv_montecarlo(edge_count_test(), make_planted_sampler(mp),
                                   make_null_sampler(10), 1, rng),
                    argument_error);
    CHECK_THROWS_AS(edge_count_experiment(mp, 1, rng), argument_error);
    CHECK_THROWS_AS(edge_count_experiment({10, 11.0}, 100, rng), argument_error);
    auto basis = std::make_shared<BasisIndex>(enumerate_monomials(4, 1));
    CHECK_THROWS_AS(claim_2_5_estimate(basis, make_planted_sampler({4, 2.0}), 101, rng),
                    argument_error);
    CHECK_THROWS_AS(claim_2_5_estimate(basis, make_planted_sampler({4, 2.0}), 2, rng),
                    argument_error);
    auto empty = std::make_shared<BasisIndex>(enumerate_monomials(4, 0));
    CHECK_THROWS_AS(claim_2_5_estimate(empty, make_planted_sampler({4, 2.0}), 100, rng),
                    argument_error);
}
