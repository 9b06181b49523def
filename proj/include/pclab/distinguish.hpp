#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bitcount.hpp"
#include "fourier.hpp"
#include "graph.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace pclab {

using GraphSampler = std::function<Graph(RngStream&)>;

inline GraphSampler make_null_sampler(int n) {
    return [n](RngStream& rng) { return sample_null(n, rng); };
}

inline GraphSampler make_planted_sampler(const ModelParams& mp) {
    check_model(mp);
    return [mp](RngStream& rng) { return sample_planted(mp, rng).graph; };
}

// A (possibly randomized) +-1 or real-valued test.
struct TestFunction {
    std::string label;
    std::function<double(const Graph&, RngStream&)> fn;
};

inline TestFunction edge_count_test() {
    return {"edge-count",
            [](const Graph& g, RngStream&) { return g.sign_sum() > 0 ? 1.0 : -1.0; }};
}

struct AdvantageEstimate {
    double estimate = 0.0;  // |mean_planted - mean_null|
    double se = 0.0;
    double signed_diff = 0.0;
    double mean_planted = 0.0, se_planted = 0.0;
    double mean_null = 0.0, se_null = 0.0;
    std::int64_t samples = 0;   // per distribution
    std::uint64_t seed = 0;     // first shard stream id
};

namespace detail {

inline std::vector<std::int64_t> split_counts(std::int64_t total, std::uint64_t shards) {
    std::vector<std::int64_t> out(shards, total / static_cast<std::int64_t>(shards));
    for (std::int64_t i = 0; i < total % static_cast<std::int64_t>(shards); ++i) ++out[i];
    return out;
}

inline std::vector<std::uint64_t> shard_seeds(std::uint64_t shards, RngStream& rng) {
    std::vector<std::uint64_t> seeds(shards);
    for (auto& s : seeds) s = rng.next_u64();
    return seeds;
}

}  // namespace detail

inline AdvantageEstimate adv_montecarlo(const TestFunction& test, const GraphSampler& planted,
                                        const GraphSampler& null_side, std::int64_t m,
                                        RngStream& rng, unsigned workers = 1) {
    if (m < 2) throw argument_error("adv_montecarlo needs m >= 2");
    const std::uint64_t shards = default_shards(m);
    const auto counts = detail::split_counts(m, shards);
    const auto seeds = detail::shard_seeds(shards, rng);
    struct ShardState {
        MeanVar p, n;
    };
    auto states = run_sharded<ShardState>(shards, workers, [&](std::uint64_t s) {
        RngStream r(seeds[s]);
        ShardState st;
        for (std::int64_t i = 0; i < counts[s]; ++i) {
            const Graph gp = planted(r);
            st.p.push(test.fn(gp, r));
            const Graph gn = null_side(r);
            st.n.push(test.fn(gn, r));
        }
        return st;
    });
    MeanVar accp, accn;
    for (const auto& st : states) {
        accp.merge(st.p);
        accn.merge(st.n);
    }
    AdvantageEstimate est;
    est.mean_planted = accp.mean();
    est.se_planted = accp.stderr_mean();
    est.mean_null = accn.mean();
    est.se_null = accn.stderr_mean();
    est.signed_diff = est.mean_planted - est.mean_null;
    est.estimate = std::abs(est.signed_diff);
    est.se = std::sqrt(est.se_planted * est.se_planted + est.se_null * est.se_null);
    est.samples = m;
    est.seed = seeds[0];
    return est;
}

// (E_P[f] - E_N[f]) / ||f||_{2,N}; for +-1 tests this equals the advantage.
struct RRatioEstimate {
    double estimate = 0.0;
    double se = 0.0;
    double numerator = 0.0;
    double denom = 0.0;
    std::int64_t samples = 0;
};

inline RRatioEstimate r_ratio_montecarlo(const TestFunction& f, const GraphSampler& planted,
                                         const GraphSampler& null_side, std::int64_t m,
                                         RngStream& rng, unsigned workers = 1) {
    if (m < 2) throw argument_error("r_ratio_montecarlo needs m >= 2");
    const std::uint64_t shards = default_shards(m);
    const auto counts = detail::split_counts(m, shards);
    const auto seeds = detail::shard_seeds(shards, rng);
    struct ShardState {
        MeanVar p, n, nsq;
    };
    auto states = run_sharded<ShardState>(shards, workers, [&](std::uint64_t s) {
        RngStream r(seeds[s]);
        ShardState st;
        for (std::int64_t i = 0; i < counts[s]; ++i) {
            const Graph gp = planted(r);
            st.p.push(f.fn(gp, r));
            const Graph gn = null_side(r);
            const double v = f.fn(gn, r);
            st.n.push(v);
            st.nsq.push(v * v);
        }
        return st;
    });
    MeanVar accp, accn, accsq;
    for (const auto& st : states) {
        accp.merge(st.p);
        accn.merge(st.n);
        accsq.merge(st.nsq);
    }
    RRatioEstimate est;
    est.numerator = accp.mean() - accn.mean();
    est.denom = std::sqrt(std::max(0.0, accsq.mean()));
    est.samples = m;
    if (est.denom == 0.0) return est;  // degenerate: estimate stays 0, se 0
    est.estimate = est.numerator / est.denom;
    const double se_num = std::sqrt(accp.stderr_mean() * accp.stderr_mean() +
                                    accn.stderr_mean() * accn.stderr_mean());
    const double se_den = accsq.stderr_mean() / (2.0 * est.denom);
    est.se = se_num / est.denom +
             std::abs(est.numerator) * se_den / (est.denom * est.denom);
    return est;
}

// Edge-count baseline without materializing graphs: under null the count is
// Binomial(E, 1/2); under planted, C(w,2) forced edges plus a Binomial on the
// rest, w ~ Binomial(n, k/n). Distributionally exact and fast at large n.
inline AdvantageEstimate edge_count_experiment(const ModelParams& mp, std::int64_t m,
                                               RngStream& rng, unsigned workers = 1) {
    check_model(mp);
    if (m < 2) throw argument_error("edge_count_experiment needs m >= 2");
    const std::int64_t slots = edge_slot_count(mp.n);
    const double q = mp.n > 0 ? mp.k / mp.n : 0.0;
    const std::uint64_t shards = default_shards(m);
    const auto counts = detail::split_counts(m, shards);
    const auto seeds = detail::shard_seeds(shards, rng);
    struct ShardState {
        MeanVar p, n;
    };
    auto states = run_sharded<ShardState>(shards, workers, [&](std::uint64_t s) {
        RngStream r(seeds[s]);
        std::binomial_distribution<std::int64_t> binom;
        using Param = std::binomial_distribution<std::int64_t>::param_type;
        ShardState st;
        for (std::int64_t i = 0; i < counts[s]; ++i) {
            const std::int64_t w = binom(r, Param(mp.n, q));
            const std::int64_t forced = w * (w - 1) / 2;
            const std::int64_t cp = forced + binom(r, Param(slots - forced, 0.5));
            st.p.push(2 * cp > slots ? 1.0 : -1.0);
            const std::int64_t cn = binom(r, Param(slots, 0.5));
            st.n.push(2 * cn > slots ? 1.0 : -1.0);
        }
        return st;
    });
    MeanVar accp, accn;
    for (const auto& st : states) {
        accp.merge(st.p);
        accn.merge(st.n);
    }
    AdvantageEstimate est;
    est.mean_planted = accp.mean();
    est.se_planted = accp.stderr_mean();
    est.mean_null = accn.mean();
    est.se_null = accn.stderr_mean();
    est.signed_diff = est.mean_planted - est.mean_null;
    est.estimate = std::abs(est.signed_diff);
    est.se = std::sqrt(est.se_planted * est.se_planted + est.se_null * est.se_null);
    est.samples = m;
    est.seed = seeds[0];
    return est;
}

// --- closed-form best low-degree advantage ----------------------------------

// Number of s-edge graphs on v labeled vertices with no isolated vertex,
// by inclusion-exclusion over excluded vertices.
inline long double count_covering_edge_sets(int s, int v) {
    long double acc = 0.0L;
    for (int t = 0; t <= v; ++t) {
        const std::int64_t rem = static_cast<std::int64_t>(v - t) * (v - t - 1) / 2;
        const long double term = choose_ld(v, t) * choose_ld(rem, s);
        acc += (t & 1) ? -term : term;
    }
    return acc;
}

struct LowDegreeAdvantage {
    double r = 0.0;
    long double r2 = 0.0L;
    double lower_bound_r2 = 0.0;  // k^4 / (2 n^2) envelope
};

// Sum of (k/n)^{2|V(S)|} over nonempty edge subsets of size <= d, grouped by
// (edge count s, vertex count v): count = C(n,v) * #covering sets.
inline LowDegreeAdvantage low_degree_advantage_closed_form(std::int64_t n, double k, int d) {
    if (n < 1) throw argument_error("low_degree_advantage_closed_form: n >= 1 required");
    if (d < 0) throw argument_error("low_degree_advantage_closed_form: d >= 0 required");
    if (!(k >= 0.0 && k <= static_cast<double>(n)))
        throw argument_error("low_degree_advantage_closed_form: need 0 <= k <= n");
    LowDegreeAdvantage out;
    const double dn = static_cast<double>(n);
    out.lower_bound_r2 = k * k * k * k / (2.0 * dn * dn);
    const long double q = static_cast<long double>(k) / static_cast<long double>(n);
    long double acc = 0.0L, comp = 0.0L;
    const int vmax = static_cast<int>(std::min<std::int64_t>(2 * static_cast<std::int64_t>(d), n));
    for (int v = 2; v <= vmax; ++v) {
        long double sets = 0.0L;
        for (int s = (v + 1) / 2; s <= d; ++s) sets += count_covering_edge_sets(s, v);
        const long double term = choose_ld(n, v) * sets * powl(q, 2.0L * v);
        const long double y = term - comp;
        const long double t = acc + y;
        comp = (t - acc) - y;
        acc = t;
    }
    out.r2 = acc;
    out.r = static_cast<double>(sqrtl(acc < 0.0L ? 0.0L : acc));
    if (!std::isfinite(out.r))
        throw resource_error("low_degree_advantage_closed_form overflowed");
    return out;
}

// --- split-sample estimate of sqrt(sum_i E_P[f_i]^2) -------------------------

struct Claim25Estimate {
    double estimate = 0.0;  // sqrt(max(0, v))
    double se = 0.0;        // delta-method from v_se
    double v = 0.0;         // unbiased estimate of sum of squared means
    double v_se = 0.0;      // delete-one-shard jackknife
    std::int64_t samples = 0;
    std::uint64_t seed = 0;
};

namespace detail {

// True when the non-constant part of the basis is exactly the single-edge
// characters in slot order, which the bit-column fast path relies on.
inline bool is_full_edge_basis(const BasisIndex& basis) {
    if (basis.mode != DegreeMode::edge_count || basis.d != 1) return false;
    const std::int64_t slots = edge_slot_count(basis.n);
    if (static_cast<std::int64_t>(basis.monomials.size()) != slots + 1) return false;
    for (std::int64_t e = 0; e < slots; ++e) {
        const auto& mono = basis.monomials[static_cast<std::size_t>(e + 1)];
        if (mono.edges.size() != 1 || mono.edges[0] != e) return false;
    }
    return true;
}

struct Claim25Shard {
    std::vector<double> sum_a, sum_b;  // per non-constant monomial, sum of f_i
    std::int64_t count_a = 0, count_b = 0;
};

struct SplitProduct {
    double v = 0.0;
    double v_se = 0.0;
    std::int64_t count_a = 0, count_b = 0;
};

// Unbiased estimate of sum_i mu_i^2 from two disjoint halves (product of
// half-means per coordinate), with a delete-one-shard jackknife stderr.
inline SplitProduct reduce_split_product(const std::vector<Claim25Shard>& states) {
    const std::size_t dims = states.empty() ? 0 : states[0].sum_a.size();
    std::vector<double> tot_a(dims, 0.0), tot_b(dims, 0.0);
    SplitProduct out;
    for (const auto& st : states) {
        for (std::size_t j = 0; j < dims; ++j) {
            tot_a[j] += st.sum_a[j];
            tot_b[j] += st.sum_b[j];
        }
        out.count_a += st.count_a;
        out.count_b += st.count_b;
    }
    auto cross = [&](const std::vector<double>& a, const std::vector<double>& b, double na,
                     double nb) {
        KahanSum s;
        for (std::size_t j = 0; j < a.size(); ++j) s.add((a[j] / na) * (b[j] / nb));
        return s.value();
    };
    out.v = cross(tot_a, tot_b, static_cast<double>(out.count_a),
                  static_cast<double>(out.count_b));
    if (states.size() > 1) {
        std::vector<double> reps(states.size());
        std::vector<double> da(dims), db(dims);
        for (std::size_t s = 0; s < states.size(); ++s) {
            const auto& st = states[s];
            for (std::size_t j = 0; j < dims; ++j) {
                da[j] = tot_a[j] - st.sum_a[j];
                db[j] = tot_b[j] - st.sum_b[j];
            }
            reps[s] = cross(da, db, static_cast<double>(out.count_a - st.count_a),
                            static_cast<double>(out.count_b - st.count_b));
        }
        double mean_rep = 0.0;
        for (double r : reps) mean_rep += r;
        mean_rep /= static_cast<double>(reps.size());
        double ss = 0.0;
        for (double r : reps) ss += (r - mean_rep) * (r - mean_rep);
        const double g = static_cast<double>(reps.size());
        out.v_se = std::sqrt((g - 1.0) / g * ss);
    }
    return out;
}

}  // namespace detail

inline Claim25Estimate claim_2_5_estimate(const std::shared_ptr<const BasisIndex>& basis,
                                          const GraphSampler& planted, std::int64_t m,
                                          RngStream& rng, unsigned workers = 1) {
    if (m < 4 || m % 2 != 0)
        throw argument_error("claim_2_5_estimate needs m >= 4 and even");
    const std::size_t nmono = basis->monomials.size() - 1;
    if (nmono == 0) throw argument_error("claim_2_5_estimate: basis has no non-constant part");
    const std::int64_t pairs = m / 2;
    const std::uint64_t shards = static_cast<std::uint64_t>(std::min<std::int64_t>(32, pairs));
    const auto pair_counts = detail::split_counts(pairs, shards);
    const auto seeds = detail::shard_seeds(shards, rng);
    const bool fast = detail::is_full_edge_basis(*basis);
    const std::size_t gwords = Graph(basis->n).words();

    auto states = run_sharded<detail::Claim25Shard>(shards, workers, [&](std::uint64_t s) {
        RngStream r(seeds[s]);
        detail::Claim25Shard st;
        st.sum_a.assign(nmono, 0.0);
        st.sum_b.assign(nmono, 0.0);
        st.count_a = st.count_b = pair_counts[s];
        if (fast) {
            ColumnCounter ca(gwords), cb(gwords);
            for (std::int64_t i = 0; i < pair_counts[s]; ++i) {
                const Graph ga = planted(r);
                ca.add(ga.bits.data());
                const Graph gb = planted(r);
                cb.add(gb.bits.data());
            }
            ca.flush();
            cb.flush();
            for (std::size_t e = 0; e < nmono; ++e) {
                st.sum_a[e] = 2.0 * static_cast<double>(ca.count(e)) -
                              static_cast<double>(pair_counts[s]);
                st.sum_b[e] = 2.0 * static_cast<double>(cb.count(e)) -
                              static_cast<double>(pair_counts[s]);
            }
        } else {
            for (std::int64_t i = 0; i < pair_counts[s]; ++i) {
                const Graph ga = planted(r);
                for (std::size_t j = 0; j < nmono; ++j)
                    st.sum_a[j] += chi(basis->monomials[j + 1], ga);
                const Graph gb = planted(r);
                for (std::size_t j = 0; j < nmono; ++j)
                    st.sum_b[j] += chi(basis->monomials[j + 1], gb);
            }
        }
        return st;
    });

    const auto red = detail::reduce_split_product(states);
    Claim25Estimate est;
    est.v = red.v;
    est.v_se = red.v_se;
    est.estimate = std::sqrt(std::max(0.0, red.v));
    est.se = red.v_se / (2.0 * std::max(est.estimate, std::sqrt(std::max(red.v_se, 1e-300))));
    est.samples = m;
    est.seed = seeds[0];
    return est;
}

}  // namespace pclab
