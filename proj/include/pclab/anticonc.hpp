#pragma once

// Structured elements of the lifted (clique bits, graph) space, the noise
// chain's exact contraction on them, empirical anticoncentration, and exact
// hypercontractivity property suites.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "distinguish.hpp"
#include "fourier.hpp"
#include "graph.hpp"
#include "noise.hpp"
#include "oracle.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace pclab {

// Which product measure the clique bits carry: the base side uses bias q,
// the shrunk side (one chain step later) uses bias p*q.
enum class SubspaceSide { base, shrunk };

// w(x, G) = G_A * chi^bias_B(x) * r(x restricted to V(A)). The r table is
// indexed with bit t = x at the t-th smallest vertex of V(A).
struct SubspaceElement {
    Monomial edge_part;            // A
    std::vector<int> vertex_part;  // B, strictly increasing, disjoint from V(A)
    std::vector<double> r;
    SubspaceSide side = SubspaceSide::base;
};

inline void check_subspace_element(const SubspaceElement& w, int n) {
    const auto& va = w.edge_part.vertex_support;
    if (!va.empty() && (va.front() < 0 || va.back() >= n))
        throw argument_error("subspace element: edge part out of range");
    for (std::size_t i = 0; i < w.vertex_part.size(); ++i) {
        const int v = w.vertex_part[i];
        if (v < 0 || v >= n)
            throw argument_error("subspace element: vertex part out of range");
        if (i > 0 && v <= w.vertex_part[i - 1])
            throw argument_error("subspace element: vertex part must be strictly increasing");
        if (std::binary_search(va.begin(), va.end(), v))
            throw argument_error("subspace element: vertex part meets the edge support");
    }
    if (va.size() >= 26)
        throw argument_error("subspace element: edge support too large for an r table");
    if (w.r.size() != (std::size_t{1} << va.size()))
        throw argument_error("subspace element: r table needs 2^|V(A)| entries");
}

inline double eval_subspace_element(const SubspaceElement& w, const CliqueIndicator& x,
                                    const Graph& g, double p, double q) {
    if (!(p > 0.0 && p <= 1.0)) throw argument_error("eval_subspace_element: p must lie in (0,1]");
    if (!(q > 0.0 && q < 1.0)) throw argument_error("eval_subspace_element: q must lie in (0,1)");
    check_subspace_element(w, g.n);
    if (x.n() != g.n)
        throw argument_error("eval_subspace_element: vertex set and graph disagree on n");
    const double bias = w.side == SubspaceSide::base ? q : p * q;
    const double ga = chi(w.edge_part, g);
    const double cb = chi_biased(w.vertex_part, x, bias);
    std::size_t idx = 0;
    const auto& va = w.edge_part.vertex_support;
    for (std::size_t t = 0; t < va.size(); ++t)
        if (x.bits[static_cast<std::size_t>(va[t])]) idx |= std::size_t{1} << t;
    return ga * cb * w.r[idx];
}

namespace detail {

// E[r(pattern)^2] when each of the |V(A)| bits is independently Ber(bias).
inline double pattern_second_moment(const std::vector<double>& r, std::size_t nbits,
                                    double bias) {
    KahanSum acc;
    for (std::size_t idx = 0; idx < r.size(); ++idx) {
        double wgt = 1.0;
        for (std::size_t t = 0; t < nbits; ++t)
            wgt *= ((idx >> t) & 1) ? bias : 1.0 - bias;
        acc.add(wgt * r[idx] * r[idx]);
    }
    return acc.value();
}

}  // namespace detail

struct Claim65Probe {
    double closed = 0.0;  // scalar factor times the base-side element's value
    double mc = 0.0;      // empirical mean over chain moves
    double se = 0.0;
    bool ok = false;      // |mc - closed| <= 4 se
};

struct Claim65Report {
    double factor = 0.0;          // p^{|V(A)|+|B|/2} * ((1-q)/(1-pq))^{|B|/2}
    double factor_variant = 0.0;  // the (1-p) reading, reported for comparison
    double bound = 0.0;           // p^{(|V(A)|+|B|)/2}
    double norm_ratio = 0.0;      // exact, from analytic second moments
    std::vector<Claim65Probe> probes;
    bool probes_ok = true;
    bool bound_ok = false;  // norm_ratio <= bound
    std::int64_t m = 0;     // chain draws per probe
};

// One chain step averages a shrunk-side element into the base-side element
// with the same (A, B, r), scaled by a fixed factor. Checks the factor by
// Monte Carlo at random probe states and the exact norm ratio against the
// contraction bound. The (1-p) variant of the factor fails the p -> 1
// identity limit and is reported only for reference.
inline Claim65Report claim_6_5_check(const SubspaceElement& w, int n, double p, double q,
                                     std::int64_t m, RngStream& rng, int probe_count = 20,
                                     unsigned workers = 1) {
    if (w.side != SubspaceSide::shrunk)
        throw argument_error("claim_6_5_check: element must live on the shrunk side");
    if (!(p > 0.0 && p <= 1.0)) throw argument_error("claim_6_5_check: p must lie in (0,1]");
    if (!(q > 0.0 && q < 1.0)) throw argument_error("claim_6_5_check: q must lie in (0,1)");
    if (m < 2) throw argument_error("claim_6_5_check needs m >= 2");
    if (probe_count < 1) throw argument_error("claim_6_5_check needs probe_count >= 1");
    check_subspace_element(w, n);

    const auto vc = static_cast<double>(w.edge_part.vertex_support.size());
    const auto nb = static_cast<double>(w.vertex_part.size());
    Claim65Report rep;
    rep.m = m;
    rep.factor = std::pow(p, vc + nb / 2.0) * std::pow((1.0 - q) / (1.0 - p * q), nb / 2.0);
    rep.factor_variant =
        std::pow(p, vc + nb / 2.0) * std::pow((1.0 - p) / (1.0 - p * q), nb / 2.0);
    rep.bound = std::pow(p, (vc + nb) / 2.0);

    const std::size_t nbits = w.edge_part.vertex_support.size();
    const double e2_base = detail::pattern_second_moment(w.r, nbits, q);
    const double e2_shrunk = detail::pattern_second_moment(w.r, nbits, p * q);
    rep.norm_ratio = e2_shrunk > 0.0 ? rep.factor * std::sqrt(e2_base / e2_shrunk) : 0.0;
    rep.bound_ok = rep.norm_ratio <= rep.bound + 1e-12;

    SubspaceElement w_base = w;
    w_base.side = SubspaceSide::base;

    rep.probes.reserve(static_cast<std::size_t>(probe_count));
    for (int t = 0; t < probe_count; ++t) {
        CliqueIndicator x;
        x.bits.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) x.bits[static_cast<std::size_t>(i)] = rng.bernoulli(q) ? 1 : 0;
        const Graph g = sample_null(n, rng);

        Claim65Probe probe;
        probe.closed = rep.factor * eval_subspace_element(w_base, x, g, p, q);

        const std::uint64_t shards = static_cast<std::uint64_t>(default_shards(m));
        const auto counts = detail::split_counts(m, shards);
        const auto seeds = detail::shard_seeds(shards, rng);
        auto states = run_sharded<MeanVar>(shards, workers, [&](std::uint64_t s) {
            RngStream r(seeds[s]);
            MeanVar mv;
            for (std::int64_t i = 0; i < counts[s]; ++i) {
                const auto [y, h] = step_lifted(x, g, p, r);
                mv.push(eval_subspace_element(w, y, h, p, q));
            }
            return mv;
        });
        MeanVar all;
        for (const auto& st : states) all.merge(st);
        probe.mc = all.mean();
        probe.se = all.stderr_mean();
        probe.ok = std::abs(probe.mc - probe.closed) <= 4.0 * probe.se + 1e-12;
        rep.probes_ok = rep.probes_ok && probe.ok;
        rep.probes.push_back(probe);
    }
    return rep;
}

struct AnticoncentrationReport {
    double b = 0.0;
    double prob = 0.0, prob_se = 0.0;    // Pr[|f| >= b * norm2]
    double norm2 = 0.0, norm2_se = 0.0;  // sqrt of the first-pass E[f^2]
    std::int64_t samples = 0;
    bool degenerate = false;  // first pass saw f identically zero
};

// Two independent passes: one pins the scale E[f^2], the other measures the
// tail probability at b times that scale.
inline AnticoncentrationReport anticonc_estimate(const TestFunction& f,
                                                 const GraphSampler& sampler, double b,
                                                 std::int64_t m, RngStream& rng,
                                                 unsigned workers = 1) {
    if (m < 2) throw argument_error("anticonc_estimate needs m >= 2");
    if (!(b > 0.0)) throw argument_error("anticonc_estimate needs b > 0");
    AnticoncentrationReport rep;
    rep.b = b;
    rep.samples = m;

    auto run_pass = [&](std::int64_t count, auto&& value) {
        const std::uint64_t shards = static_cast<std::uint64_t>(default_shards(count));
        const auto counts = detail::split_counts(count, shards);
        const auto seeds = detail::shard_seeds(shards, rng);
        auto states = run_sharded<MeanVar>(shards, workers, [&](std::uint64_t s) {
            RngStream r(seeds[s]);
            MeanVar mv;
            for (std::int64_t i = 0; i < counts[s]; ++i) {
                const Graph g = sampler(r);
                mv.push(value(g, r));
            }
            return mv;
        });
        MeanVar all;
        for (const auto& st : states) all.merge(st);
        return all;
    };

    const std::int64_t m1 = m / 2;
    const MeanVar pass1 = run_pass(m1, [&](const Graph& g, RngStream& r) {
        const double v = f.fn(g, r);
        return v * v;
    });
    const double f2 = pass1.mean();
    rep.norm2 = std::sqrt(std::max(0.0, f2));
    rep.norm2_se = rep.norm2 > 0.0 ? pass1.stderr_mean() / (2.0 * rep.norm2) : 0.0;
    if (!(f2 > 0.0)) {
        rep.degenerate = true;
        return rep;
    }

    const double cut = b * rep.norm2;
    const MeanVar pass2 = run_pass(m - m1, [&](const Graph& g, RngStream& r) {
        return std::abs(f.fn(g, r)) >= cut ? 1.0 : 0.0;
    });
    rep.prob = pass2.mean();
    rep.prob_se = pass2.stderr_mean();
    return rep;
}

enum class HyperMode { bonami, biased_symmetric };

struct HyperReport {
    HyperMode mode = HyperMode::bonami;
    int dims = 0, d = 0;
    double bias = 0.5;
    std::int64_t trials = 0;
    double bound4 = 0.0;  // sqrt(3)^d uniform, 8^d biased symmetric
    double bound8 = 0.0;  // sqrt(7)^d, asserted in the uniform mode only
    bool pass4 = true, pass8 = true, pass_logconvex = true;
    // smallest relative slack observed: 1 - lhs/rhs of each inequality
    double min_margin4 = 1.0, min_margin8 = 1.0, min_margin_log = 1.0;
};

// Random degree-<= d polynomials with exact norms by (weighted) enumeration:
// uniform-cube trials check the 4- and 8-norm contraction against sqrt(3)^d
// and sqrt(7)^d; biased symmetric trials (coefficients constant on each
// monomial-size class of biased characters) check the 8^d form. Both modes
// check the moment log-convexity ||f||_1 >= ||f||_2^3 / ||f||_4^2.
inline HyperReport hypercontract_suite(HyperMode mode, int dims, int d, std::int64_t trials,
                                       RngStream& rng, double bias = 0.5) {
    if (dims < 1 || dims > 20)
        throw argument_error("hypercontract_suite: dims must lie in [1,20]");
    if (d < 0) throw argument_error("hypercontract_suite: d must be >= 0");
    if (trials < 1) throw argument_error("hypercontract_suite: trials must be >= 1");
    if (mode == HyperMode::bonami) {
        if (d > dims) throw argument_error("hypercontract_suite: d exceeds dims");
    } else {
        if (!(bias > 0.0 && bias < 1.0))
            throw argument_error("hypercontract_suite: bias must lie in (0,1)");
        if (static_cast<double>(d) > static_cast<double>(dims) * bias)
            throw argument_error("hypercontract_suite: biased mode needs d <= dims * bias");
    }

    HyperReport rep;
    rep.mode = mode;
    rep.dims = dims;
    rep.d = d;
    rep.bias = bias;
    rep.trials = trials;
    rep.bound4 = mode == HyperMode::bonami ? std::pow(std::sqrt(3.0), d) : std::pow(8.0, d);
    rep.bound8 = std::pow(std::sqrt(7.0), d);

    const std::size_t npts = std::size_t{1} << dims;
    const double chi1 = std::sqrt((1.0 - bias) / bias);
    const double chi0 = -std::sqrt(bias / (1.0 - bias));

    std::vector<double> table(npts);
    std::vector<double> esym(static_cast<std::size_t>(d) + 1);
    for (std::int64_t t = 0; t < trials; ++t) {
        if (mode == HyperMode::bonami) {
            std::vector<double> coeffs(npts, 0.0);
            for (std::size_t mask = 0; mask < npts; ++mask)
                if (std::popcount(mask) <= d) coeffs[mask] = rng.normal();
            table = exact_table_from_coeffs(std::move(coeffs));
        } else {
            std::vector<double> a(static_cast<std::size_t>(d) + 1);
            for (auto& v : a) v = rng.normal();
            for (int s = 0; s <= d; ++s)
                a[static_cast<std::size_t>(s)] /=
                    std::sqrt(static_cast<double>(choose_i64(dims, s)));
            for (std::size_t pat = 0; pat < npts; ++pat) {
                std::fill(esym.begin(), esym.end(), 0.0);
                esym[0] = 1.0;
                for (int i = 0; i < dims; ++i) {
                    const double c = ((pat >> i) & 1) ? chi1 : chi0;
                    for (int s = std::min(d, i + 1); s >= 1; --s)
                        esym[static_cast<std::size_t>(s)] +=
                            c * esym[static_cast<std::size_t>(s - 1)];
                }
                double val = 0.0;
                for (int s = 0; s <= d; ++s)
                    val += a[static_cast<std::size_t>(s)] * esym[static_cast<std::size_t>(s)];
                table[pat] = val;
            }
        }

        KahanSum w1, w2, w4, w8, wsum;
        for (std::size_t pat = 0; pat < npts; ++pat) {
            double wgt = 1.0;
            if (mode == HyperMode::biased_symmetric) {
                const int pc = std::popcount(pat);
                wgt = std::pow(bias, pc) * std::pow(1.0 - bias, dims - pc);
            }
            const double v = std::abs(table[pat]);
            const double v2 = v * v, v4 = v2 * v2;
            wsum.add(wgt);
            w1.add(wgt * v);
            w2.add(wgt * v2);
            w4.add(wgt * v4);
            w8.add(wgt * v4 * v4);
        }
        const double tot = mode == HyperMode::bonami ? static_cast<double>(npts) : wsum.value();
        const double n1 = w1.value() / tot;
        const double n2 = std::sqrt(w2.value() / tot);
        const double n4 = std::pow(w4.value() / tot, 0.25);
        const double n8 = std::pow(w8.value() / tot, 0.125);
        if (!(n2 > 0.0)) continue;  // measure-zero event; inequalities vacuous

        const double m4 = 1.0 - n4 / (rep.bound4 * n2);
        rep.min_margin4 = std::min(rep.min_margin4, m4);
        rep.pass4 = rep.pass4 && m4 >= -1e-9;
        if (mode == HyperMode::bonami) {
            const double m8 = 1.0 - n8 / (rep.bound8 * n2);
            rep.min_margin8 = std::min(rep.min_margin8, m8);
            rep.pass8 = rep.pass8 && m8 >= -1e-9;
        }
        const double mlog = 1.0 - (n2 * n2 * n2) / (n1 * n4 * n4);
        rep.min_margin_log = std::min(rep.min_margin_log, mlog);
        rep.pass_logconvex = rep.pass_logconvex && mlog >= -1e-9;
    }
    return rep;
}

struct Lemma62Report {
    double f_norm2 = 0.0, f_norm2_se = 0.0;    // under the shrunk planted model
    double tf_norm2 = 0.0, tf_norm2_se = 0.0;  // noised f under the planted model
    double survival_ratio = 0.0, survival_ratio_se = 0.0;
    double survival_floor = 0.0;  // p^d
    bool survived = false;        // ratio >= floor (point estimates)
    bool degenerate = false;      // f vanished on the shrunk side
    AnticoncentrationReport anticonc;  // of the noised f under the planted model
    std::int64_t m_outer = 0, m_inner = 0;
};

// Measures how much 2-norm f keeps after one symmetrized chain step from the
// planted model (whose step output matches the shrunk planted model), and the
// anticoncentration of the noised value. Constants are reported, not gated.
inline Lemma62Report lemma_6_2_experiment(const TestFunction& f, const ModelParams& mp,
                                          double keep_prob, int d, double b,
                                          std::int64_t m_outer, std::int64_t m_inner,
                                          RngStream& rng, unsigned workers = 1) {
    check_model(mp);
    check_chain({keep_prob, true});
    if (d < 0) throw argument_error("lemma_6_2_experiment: d must be >= 0");
    if (m_outer < 2 || m_inner < 2)
        throw argument_error("lemma_6_2_experiment needs m_outer and m_inner >= 2");

    Lemma62Report rep;
    rep.m_outer = m_outer;
    rep.m_inner = m_inner;
    rep.survival_floor = std::pow(keep_prob, d);

    const ModelParams shrunk{mp.n, keep_prob * mp.k};
    const ChainParams cp{keep_prob, true};

    auto run_pass = [&](const GraphSampler& sampler, auto&& value) {
        const std::uint64_t shards = static_cast<std::uint64_t>(default_shards(m_outer));
        const auto counts = detail::split_counts(m_outer, shards);
        const auto seeds = detail::shard_seeds(shards, rng);
        auto states = run_sharded<MeanVar>(shards, workers, [&](std::uint64_t s) {
            RngStream r(seeds[s]);
            MeanVar mv;
            for (std::int64_t i = 0; i < counts[s]; ++i) {
                const Graph g = sampler(r);
                mv.push(value(g, r));
            }
            return mv;
        });
        MeanVar all;
        for (const auto& st : states) all.merge(st);
        return all;
    };

    const MeanVar fpass =
        run_pass(make_planted_sampler(shrunk), [&](const Graph& g, RngStream& r) {
            const double v = f.fn(g, r);
            return v * v;
        });
    const double f2 = fpass.mean();
    rep.f_norm2 = std::sqrt(std::max(0.0, f2));
    rep.f_norm2_se = rep.f_norm2 > 0.0 ? fpass.stderr_mean() / (2.0 * rep.f_norm2) : 0.0;
    if (!(f2 > 0.0)) {
        rep.degenerate = true;
        rep.anticonc.degenerate = true;
        rep.anticonc.b = b;
        return rep;
    }

    // Unbiased (Tf)^2 per outer draw: product of two independent half-means.
    const std::int64_t half = m_inner / 2;
    const MeanVar tpass =
        run_pass(make_planted_sampler(mp), [&](const Graph& g, RngStream& r) {
            auto wrapped = [&](const Graph& h) { return f.fn(h, r); };
            const double a = apply_T_montecarlo(wrapped, g, cp, half, r).mean;
            const double bm = apply_T_montecarlo(wrapped, g, cp, m_inner - half, r).mean;
            return a * bm;
        });
    const double tf2 = tpass.mean();
    rep.tf_norm2 = std::sqrt(std::max(0.0, tf2));
    rep.tf_norm2_se = rep.tf_norm2 > 0.0 ? tpass.stderr_mean() / (2.0 * rep.tf_norm2) : 0.0;
    if (tf2 > 0.0) {
        rep.survival_ratio = rep.tf_norm2 / rep.f_norm2;
        rep.survival_ratio_se =
            rep.survival_ratio * 0.5 *
            std::sqrt(std::pow(tpass.stderr_mean() / tf2, 2.0) +
                      std::pow(fpass.stderr_mean() / f2, 2.0));
    }
    rep.survived = rep.survival_ratio >= rep.survival_floor;

    TestFunction noised;
    noised.label = "noised:" + f.label;
    noised.fn = [fn = f.fn, cp, m_inner](const Graph& g, RngStream& r) {
        auto wrapped = [&](const Graph& h) { return fn(h, r); };
        return apply_T_montecarlo(wrapped, g, cp, m_inner, r).mean;
    };
    rep.anticonc = anticonc_estimate(noised, make_planted_sampler(mp), b, m_outer, rng,
                                     workers);
    return rep;
}

}  // namespace pclab
