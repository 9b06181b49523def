#pragma once

// Black-box advantage transfer: project a test A off the tractable low-degree
// span, push the remainder through the noise chain via Monte Carlo, and
// threshold the result into a new +-1 test B.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bitcount.hpp"
#include "distinguish.hpp"
#include "fourier.hpp"
#include "graph.hpp"
#include "noise.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace pclab {

// Default base constant of the gamma formula. Astronomically small, so gamma
// itself is only ever reported in log form; nothing is gated on it.
inline constexpr double kGammaBaseDefault = 0x1p-99 / 1.853020188851841e15;  // 2^-99 * 9^-16

struct ReductionParams {
    double alpha = 0.0, beta = 0.0;
    int d = 0;
    std::int64_t n = 0;
    double keep_prob = 0.0;     // p = n^(alpha - beta)
    double eps = 0.0;           // p^sqrt(d)
    double query_budget = 0.0;  // n^(2d)
    // gamma = gamma_base ^ gamma_exponent, kept symbolic (it underflows).
    double gamma_base = kGammaBaseDefault;
    double gamma_exponent = 0.0;
    double gamma_log10 = 0.0;
    // delta = delta_constant * eps / gamma, also symbolic.
    double delta_constant = 400.0;
    double delta_log10 = 0.0;
    // Desk-scale overrides; the asymptotic values above are documentation.
    std::optional<double> eps_exp;
    std::optional<double> threshold;
};

inline ReductionParams derive_params(double alpha, double beta, int d, std::int64_t n,
                                     double delta_constant = 400.0,
                                     double gamma_base = kGammaBaseDefault) {
    if (!(alpha > 0.0 && alpha < beta))
        throw argument_error("derive_params: need 0 < alpha < beta");
    if (d < 1) throw argument_error("derive_params: d must be >= 1");
    if (n < 2) throw argument_error("derive_params: n must be >= 2");
    if (!(gamma_base > 0.0 && gamma_base < 1.0))
        throw argument_error("derive_params: gamma_base must lie in (0,1)");
    if (!(delta_constant > 0.0))
        throw argument_error("derive_params: delta_constant must be positive");
    ReductionParams rp;
    rp.alpha = alpha;
    rp.beta = beta;
    rp.d = d;
    rp.n = n;
    const double dn = static_cast<double>(n);
    rp.keep_prob = std::pow(dn, alpha - beta);
    rp.eps = std::pow(rp.keep_prob, std::sqrt(static_cast<double>(d)));
    rp.query_budget = std::pow(dn, 2.0 * d);
    rp.gamma_base = gamma_base;
    rp.gamma_exponent = std::pow(4.0 * d / (beta - alpha), 2.0);
    rp.gamma_log10 = rp.gamma_exponent * std::log10(gamma_base);
    rp.delta_constant = delta_constant;
    rp.delta_log10 = std::log10(delta_constant) + std::log10(rp.eps) - rp.gamma_log10;
    return rp;
}

// Empirical projection coefficients of A onto the basis under the null draw:
// chat[i] = avg_j f_i(z_j) * A(z_j), constant slot included, so downstream
// code never assumes E_N[A] = 0.
struct ProjectionFit {
    std::shared_ptr<const BasisIndex> basis;
    std::vector<double> chat;
    std::int64_t z_count = 0;
    std::optional<EdgeCoeffs> fast;  // non-constant slots, full edge basis only
};

namespace detail {

struct FitShard {
    std::vector<std::uint64_t> counts;  // xored-bit counts, +-1 samples only
    std::int64_t m_pm = 0, m_pm_pos = 0;
    std::vector<double> acc;  // axpy accumulator for non +-1 values
    double val_sum_rare = 0.0;
    std::int64_t m_rare = 0;
    std::vector<double> sums;  // generic-basis path: per-slot sums of f_i * A
};

}  // namespace detail

inline ProjectionFit fit_projection(const TestFunction& A,
                                    const std::shared_ptr<const BasisIndex>& basis,
                                    std::int64_t z_count, RngStream& rng,
                                    unsigned workers = 1) {
    if (z_count < 1) throw argument_error("fit_projection needs z_count >= 1");
    const int n = basis->n;
    const bool edge_fast = detail::is_full_edge_basis(*basis);
    const std::int64_t slots = edge_slot_count(n);
    const std::size_t words = static_cast<std::size_t>((slots + 63) / 64);

    const std::uint64_t shards = static_cast<std::uint64_t>(default_shards(z_count));
    const auto counts = detail::split_counts(z_count, shards);
    const auto seeds = detail::shard_seeds(shards, rng);

    auto states = run_sharded<detail::FitShard>(shards, workers, [&](std::uint64_t s) {
        RngStream r(seeds[s]);
        detail::FitShard st;
        if (edge_fast) {
            ColumnCounter cc(words);
            st.acc.assign(words * 64, 0.0);
            std::vector<std::uint64_t> tmp(words);
            for (std::int64_t i = 0; i < counts[s]; ++i) {
                const Graph z = sample_null(n, r);
                const double val = A.fn(z, r);
                if (val == 1.0 || val == -1.0) {
                    const std::uint64_t mask = val < 0.0 ? ~std::uint64_t{0} : 0;
                    for (std::size_t w = 0; w < words; ++w) tmp[w] = z.bits[w] ^ mask;
                    cc.add(tmp.data());
                    ++st.m_pm;
                    if (val > 0.0) ++st.m_pm_pos;
                } else {
                    detail::axpy_set_bits(st.acc.data(), z.bits.data(), words, val);
                    st.val_sum_rare += val;
                    ++st.m_rare;
                }
            }
            cc.flush();
            st.counts = cc.totals();
        } else {
            st.sums.assign(basis->size(), 0.0);
            for (std::int64_t i = 0; i < counts[s]; ++i) {
                const Graph z = sample_null(n, r);
                const double val = A.fn(z, r);
                for (std::size_t j = 0; j < basis->size(); ++j)
                    st.sums[j] += val * chi(basis->monomials[j], z);
            }
        }
        return st;
    });

    ProjectionFit fit;
    fit.basis = basis;
    fit.z_count = z_count;
    fit.chat.assign(basis->size(), 0.0);
    const double inv = 1.0 / static_cast<double>(z_count);
    if (edge_fast) {
        // chat[e+1] = avg chi_e * A; the xor fold makes each +-1 sample a bit.
        for (const auto& st : states) {
            fit.chat[0] += static_cast<double>(2 * st.m_pm_pos - st.m_pm) + st.val_sum_rare;
            for (std::int64_t e = 0; e < slots; ++e) {
                const auto ue = static_cast<std::size_t>(e);
                fit.chat[ue + 1] +=
                    (2.0 * static_cast<double>(st.counts[ue]) -
                     static_cast<double>(st.m_pm)) +
                    (2.0 * st.acc[ue] - st.val_sum_rare);
            }
        }
        for (auto& c : fit.chat) c *= inv;
        fit.fast = EdgeCoeffs::from(std::vector<double>(fit.chat.begin() + 1, fit.chat.end()),
                                    slots);
    } else {
        for (const auto& st : states)
            for (std::size_t j = 0; j < basis->size(); ++j) fit.chat[j] += st.sums[j];
        for (auto& c : fit.chat) c *= inv;
    }
    return fit;
}

// Pools the per-edge coefficients into their mean. The vertex-relabeled A has
// one coefficient per edge orbit, and the full edge basis is a single orbit,
// so for an invariant A this is the same projection estimated 19900 times
// over: the pooled fit is unbiased for it with a fraction of the variance.
// Not meaningful for tests that break exchangeability.
inline void symmetrize_edge_fit(ProjectionFit& fit) {
    if (!fit.basis || !detail::is_full_edge_basis(*fit.basis))
        throw argument_error("symmetrize_edge_fit: full edge basis required");
    if (fit.chat.size() < 2) return;
    const double mean = std::accumulate(fit.chat.begin() + 1, fit.chat.end(), 0.0) /
                        static_cast<double>(fit.chat.size() - 1);
    std::fill(fit.chat.begin() + 1, fit.chat.end(), mean);
    if (fit.fast)
        fit.fast = EdgeCoeffs::from(
            std::vector<double>(fit.chat.begin() + 1, fit.chat.end()),
            edge_slot_count(fit.basis->n));
}

struct EstimateC {
    double value = 0.0;
    double se = 0.0;
    std::int64_t y_count = 0;
};

// C(x) = avg_j [A(y_j) - sum_i chat_i f_i(y_j)] over chain moves y_j from x.
// With permute on, one relabeling is drawn per call and all moves start from
// the relabeled graph: the mean over the call's own randomness is then the
// symmetrized-chain value, at a fraction of the per-move relabeling cost.
inline EstimateC estimate_C(const Graph& x, const TestFunction& A, const ProjectionFit& fit,
                            const ChainParams& params, std::int64_t y_count,
                            RngStream& rng) {
    check_chain(params);
    if (y_count < 1) throw argument_error("estimate_C needs y_count >= 1");
    if (fit.basis->n != x.n)
        throw argument_error("estimate_C: fit/graph dimension mismatch");
    const Graph* src = &x;
    Graph relabeled(0);
    if (params.permute) {
        relabeled = permute_graph(x, random_permutation(x.n, rng));
        src = &relabeled;
    }
    const ChainParams inner{params.keep_prob, false};
    MeanVar mv;
    for (std::int64_t j = 0; j < y_count; ++j) {
        const Graph y = step(*src, inner, rng);
        double proj = fit.chat[0];
        if (fit.fast) {
            proj += fit.fast->dot_signs(y);
        } else {
            for (std::size_t i = 1; i < fit.basis->size(); ++i)
                proj += fit.chat[i] * chi(fit.basis->monomials[i], y);
        }
        mv.push(A.fn(y, rng) - proj);
    }
    return {mv.mean(), mv.stderr_mean(), y_count};
}

// +-1 test thresholding |C(x)|. threshold 0 and +infinity give the constant
// tests; anything negative or NaN is rejected.
inline TestFunction build_test_B(TestFunction A, std::shared_ptr<const ProjectionFit> fit,
                                 ChainParams params, double threshold,
                                 std::int64_t y_count) {
    check_chain(params);
    if (std::isnan(threshold) || threshold < 0.0)
        throw argument_error("build_test_B: threshold must be >= 0");
    if (y_count < 1) throw argument_error("build_test_B needs y_count >= 1");
    if (!fit) throw argument_error("build_test_B: missing fit");
    TestFunction B;
    B.label = "threshold-C";
    B.fn = [A = std::move(A), fit = std::move(fit), params, threshold,
            y_count](const Graph& g, RngStream& rng) {
        const double c = estimate_C(g, A, *fit, params, y_count, rng).value;
        return std::abs(c) >= threshold ? 1.0 : -1.0;
    };
    return B;
}

struct PairedAdvantage {
    double estimate = 0.0;  // mean of B(planted) - B(coupled null)
    double se = 0.0;
    std::int64_t pairs = 0;
};

struct EvalConfig {
    double threshold = 0.0;  // <= 0: calibrate from the null spread of C
    double threshold_sigma = 1.45;
    std::int64_t calibration_count = 2000;
    std::int64_t z_count = 1'000'000;
    bool symmetrize_fit = false;  // pool edge coefficients; invariant A, d = 1 only
    std::int64_t y_count = 1000;
    std::int64_t m_pairs = 10'000;
    int b_replicates = 1;  // fresh B draws averaged per pair and arm
    std::int64_t m_unpaired = 4000;
    std::int64_t m_adv_a = 20'000;
    std::int64_t m_rlow = 200'000;
    int d = 1;
    unsigned workers = 1;
};

namespace detail {

// estimate_C specialized for the full edge basis and a permutation-free
// chain: reusable step buffers and the quantized sign-dot. Both input laws
// the evaluator ever sees are exchangeable, so dropping the relabeling
// leaves every C(x) marginal unchanged; only the per-call coupling to the
// frozen fit-error field differs, which is noise at the 1e-4 scale here.
// A pooled fit (all edge coefficients equal) collapses the dot to a single
// popcount, exactly: sum_e c sign_e(y) = c * sign_sum(y).
struct FastC {
    TestFunction A;
    SignDotCoeffs coeffs;
    double chat0;
    double keep_prob;
    std::optional<double> pooled;  // the common coefficient, if there is one
    Graph y{0};
    Graph y2{0};
    StepScratch scratch;

    FastC(TestFunction a, const ProjectionFit& fit, double p)
        : A(std::move(a)),
          coeffs(SignDotCoeffs::from(
              std::vector<double>(fit.chat.begin() + 1, fit.chat.end()),
              edge_slot_count(fit.basis->n))),
          chat0(fit.chat[0]),
          keep_prob(p),
          y(fit.basis->n),
          y2(fit.basis->n) {
        scratch.reserve(fit.basis->n);
        if (fit.chat.size() > 1 &&
            std::adjacent_find(fit.chat.begin() + 1, fit.chat.end(),
                               std::not_equal_to<>()) == fit.chat.end())
            pooled = fit.chat[1];
    }

    double proj(const Graph& g) const {
        if (pooled) return chat0 + *pooled * static_cast<double>(g.sign_sum());
        return chat0 + coeffs.dot_signs_words(g.bits.data());
    }

    double value(const Graph& x, std::int64_t y_count, RngStream& rng) {
        // double-buffered: move j+1 is drawn before move j is consumed, so the
        // readers never race the stores of the graph they are summing
        double sum = 0.0;
        Graph* cur = &y;
        Graph* nxt = &y2;
        step_into(x, keep_prob, rng, *cur, scratch);
        for (std::int64_t j = 1; j < y_count; ++j) {
            step_into(x, keep_prob, rng, *nxt, scratch);
            sum += A.fn(*cur, rng) - proj(*cur);
            std::swap(cur, nxt);
        }
        sum += A.fn(*cur, rng) - proj(*cur);
        return sum / static_cast<double>(y_count);
    }
};

}  // namespace detail

struct ReductionReport {
    std::int64_t z_count = 0, y_count = 0;
    int b_replicates = 1;
    bool fit_symmetrized = false;
    double threshold_used = 0.0;
    bool threshold_calibrated = false;
    double null_c_sd = 0.0;              // spread of C over null inputs
    AdvantageEstimate adv_a_pstar;       // A against (noised planted, null)
    Claim25Estimate r_lowdeg_pstar;      // degree-d optimum of the noised side
    PairedAdvantage adv_b_paired;        // B on common-randomness (P, N) pairs
    AdvantageEstimate adv_b_unpaired;    // independent cross-check
    std::optional<ReductionParams> params;  // symbolic constants, report-only
};

// End-to-end run: fit the projection of A, calibrate or accept a threshold,
// then measure A's advantage against the noised planted draw, the residual
// low-degree optimum, and B's advantage on the plain (planted, null) pair.
// The paired estimator reuses one null graph per pair (planting a clique on
// a copy) and replays identical internal randomness through both B calls, so
// only genuine flips of B's decision contribute variance. With b_replicates
// > 1 each arm averages that many fresh B draws before differencing, which
// integrates out part of B's internal sampling noise without biasing the
// advantage (the advantage is linear in B's conditional mean). On the full
// edge basis the arms run permutation-free: both input laws are exchangeable,
// so dropping the relabeling leaves E[B] on either side exactly unchanged.
inline ReductionReport evaluate_reduction(const TestFunction& A, const ChainParams& chain,
                                          const GraphSampler& planted_like,
                                          const ModelParams& mp, const EvalConfig& cfg,
                                          RngStream& rng,
                                          std::optional<ReductionParams> params = {}) {
    check_model(mp);
    check_chain(chain);
    if (cfg.m_pairs < 2) throw argument_error("evaluate_reduction needs m_pairs >= 2");
    if (cfg.d < 1) throw argument_error("evaluate_reduction: d must be >= 1");
    if (cfg.calibration_count < 2 && cfg.threshold <= 0.0)
        throw argument_error("evaluate_reduction: calibration_count too small");
    if (cfg.symmetrize_fit && cfg.d != 1)
        throw argument_error("evaluate_reduction: symmetrize_fit needs d == 1");

    const std::uint64_t master = rng.next_u64();
    auto basis = std::make_shared<BasisIndex>(
        enumerate_monomials(mp.n, cfg.d, DegreeMode::edge_count));

    ReductionReport rep;
    rep.z_count = cfg.z_count;
    rep.y_count = cfg.y_count;
    rep.b_replicates = std::max(1, cfg.b_replicates);
    rep.fit_symmetrized = cfg.symmetrize_fit;
    rep.params = params;

    RngStream fit_rng = RngStream::derive(master, "fit", 0);
    ProjectionFit fitted = fit_projection(A, basis, cfg.z_count, fit_rng, cfg.workers);
    if (cfg.symmetrize_fit) symmetrize_edge_fit(fitted);
    auto fit = std::make_shared<const ProjectionFit>(std::move(fitted));

    GraphSampler noised = [&planted_like, chain](RngStream& r) {
        return step(planted_like(r), chain, r);
    };

    {
        RngStream r = RngStream::derive(master, "adv-a", 0);
        rep.adv_a_pstar = adv_montecarlo(A, noised, make_null_sampler(mp.n), cfg.m_adv_a,
                                         r, cfg.workers);
    }
    {
        RngStream r = RngStream::derive(master, "rlow", 0);
        rep.r_lowdeg_pstar =
            claim_2_5_estimate(basis, noised, cfg.m_rlow, r, cfg.workers);
    }

    if (cfg.threshold > 0.0) {
        rep.threshold_used = cfg.threshold;
    } else {
        RngStream r = RngStream::derive(master, "calibrate", 0);
        const std::uint64_t shards =
            static_cast<std::uint64_t>(default_shards(cfg.calibration_count));
        const auto counts = detail::split_counts(cfg.calibration_count, shards);
        const auto seeds = detail::shard_seeds(shards, r);
        auto states = run_sharded<MeanVar>(shards, cfg.workers, [&](std::uint64_t s) {
            RngStream rr(seeds[s]);
            MeanVar mv;
            std::optional<detail::FastC> ev;
            if (fit->fast) ev.emplace(A, *fit, chain.keep_prob);
            for (std::int64_t i = 0; i < counts[s]; ++i) {
                const Graph x = sample_null(mp.n, rr);
                mv.push(ev ? ev->value(x, cfg.y_count, rr)
                           : estimate_C(x, A, *fit, chain, cfg.y_count, rr).value);
            }
            return mv;
        });
        MeanVar all;
        for (const auto& st : states) all.merge(st);
        rep.null_c_sd = std::sqrt(all.variance());
        rep.threshold_used = std::max(cfg.threshold_sigma * rep.null_c_sd, 1e-12);
        rep.threshold_calibrated = true;
    }

    const TestFunction B = build_test_B(A, fit, chain, rep.threshold_used, cfg.y_count);

    {
        RngStream r = RngStream::derive(master, "paired", 0);
        const std::uint64_t shards =
            static_cast<std::uint64_t>(default_shards(cfg.m_pairs));
        const auto counts = detail::split_counts(cfg.m_pairs, shards);
        const auto seeds = detail::shard_seeds(shards, r);
        const double q = mp.k / mp.n;
        const int reps = std::max(1, cfg.b_replicates);
        const double inv_reps = 1.0 / static_cast<double>(reps);
        auto states = run_sharded<MeanVar>(shards, cfg.workers, [&](std::uint64_t s) {
            RngStream rr(seeds[s]);
            MeanVar mv;
            CliqueIndicator x;
            x.bits.resize(static_cast<std::size_t>(mp.n));
            std::optional<detail::FastC> ev;
            if (fit->fast) ev.emplace(A, *fit, chain.keep_prob);
            for (std::int64_t i = 0; i < counts[s]; ++i) {
                const Graph null_g = sample_null(mp.n, rr);
                for (int v = 0; v < mp.n; ++v)
                    x.bits[static_cast<std::size_t>(v)] = rr.bernoulli(q) ? 1 : 0;
                const Graph planted_g = plant_clique(null_g, x);
                double acc = 0.0;
                for (int t = 0; t < reps; ++t) {
                    RngStream inner(rr.next_u64());
                    RngStream s1 = inner, s2 = inner;  // identical replay
                    double bp, bn;
                    if (ev) {
                        const double cp = ev->value(planted_g, cfg.y_count, s1);
                        const double cn = ev->value(null_g, cfg.y_count, s2);
                        bp = std::abs(cp) >= rep.threshold_used ? 1.0 : -1.0;
                        bn = std::abs(cn) >= rep.threshold_used ? 1.0 : -1.0;
                    } else {
                        bp = B.fn(planted_g, s1);
                        bn = B.fn(null_g, s2);
                    }
                    acc += bp - bn;
                }
                mv.push(acc * inv_reps);
            }
            return mv;
        });
        MeanVar all;
        for (const auto& st : states) all.merge(st);
        rep.adv_b_paired = {all.mean(), all.stderr_mean(), cfg.m_pairs};
    }

    if (cfg.m_unpaired >= 2) {
        RngStream r = RngStream::derive(master, "unpaired", 0);
        rep.adv_b_unpaired = adv_montecarlo(B, make_planted_sampler(mp),
                                            make_null_sampler(mp.n), cfg.m_unpaired, r,
                                            cfg.workers);
    }
    return rep;
}

}  // namespace pclab
