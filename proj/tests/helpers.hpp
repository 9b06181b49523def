#pragma once

// Reference implementations for the tests, kept independent of the library's
// computation paths: direct-definition enumerations and classic closed forms.
// They share the Graph data model but never the estimators under test.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pclab/graph.hpp"
#include "pclab/stats.hpp"

namespace ref {

inline double log_choose(std::int64_t n, std::int64_t k) {
    return std::lgamma(static_cast<double>(n) + 1.0) -
           std::lgamma(static_cast<double>(k) + 1.0) -
           std::lgamma(static_cast<double>(n - k) + 1.0);
}

// Pr[Binomial(N, 1/2) > t]
inline double binom_tail_half(std::int64_t N, std::int64_t t) {
    if (t < 0) return 1.0;
    pclab::KahanSum s;
    const double ln2 = std::log(2.0);
    for (std::int64_t c = t + 1; c <= N; ++c)
        s.add(std::exp(log_choose(N, c) - static_cast<double>(N) * ln2));
    return s.value();
}

// Exact advantage of the sign-of-edge-count test: the null count is
// Binomial(M, 1/2); the planted count mixes over the clique size j with
// C(j,2) forced slots. Feasible up to n in the low thousands.
inline double edge_sign_advantage(int n, double k) {
    const std::int64_t M = pclab::edge_slot_count(n);
    const double q = k / n;
    const double pr_null = binom_tail_half(M, M / 2);
    pclab::KahanSum pr_p;
    for (int j = 0; j <= n; ++j) {
        const double lw = log_choose(n, j) + j * std::log(q) +
                          (n - j) * std::log1p(-q);
        const double w = std::exp(lw);
        if (w < 1e-18 && j > 3 * k) break;
        const std::int64_t f = static_cast<std::int64_t>(j) * (j - 1) / 2;
        const std::int64_t t = M / 2 - f;
        pr_p.add(w * (t < 0 ? 1.0 : binom_tail_half(M - f, t)));
    }
    return 2.0 * (pr_p.value() - pr_null);
}

// Sum over nonempty edge subsets S with |S| <= d of (k/n)^{2 |V(S)|}, by
// direct enumeration of the subsets. Usable for n <= 8, d <= 3 or so.
inline long double brute_force_r2(int n, double k, int d) {
    const std::int64_t total = pclab::edge_slot_count(n);
    const long double q = static_cast<long double>(k) / n;
    long double acc = 0.0L;
    std::vector<std::int64_t> idx;
    for (int s = 1; s <= d && s <= total; ++s) {
        idx.assign(static_cast<std::size_t>(s), 0);
        for (int i = 0; i < s; ++i) idx[static_cast<std::size_t>(i)] = i;
        for (;;) {
            std::uint32_t verts = 0;
            for (auto e : idx) {
                const auto [a, b] = pclab::edge_endpoints(e, n);
                verts |= (1u << a) | (1u << b);
            }
            acc += powl(q, 2.0L * std::popcount(verts));
            int i = s - 1;
            while (i >= 0 && idx[static_cast<std::size_t>(i)] == total - s + i) --i;
            if (i < 0) break;
            ++idx[static_cast<std::size_t>(i)];
            for (int j = i + 1; j < s; ++j)
                idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
        }
    }
    return acc;
}

// The resampling operator straight from its definition: enumerate the kept
// vertex set z (weight p^|z| (1-p)^(n-|z|)), copy the surviving slots, and
// average the function over every assignment of the dead slots. No Fourier
// anywhere. Symmetrized variant relabels the input first.
inline std::vector<double> apply_T_enumerated(const std::vector<double>& table, int n,
                                              double p, bool symmetrize = false) {
    const int slots = static_cast<int>(pclab::edge_slot_count(n));
    const std::size_t ncodes = std::size_t{1} << slots;

    auto plain = [&](const std::vector<double>& f) {
        std::vector<double> out(ncodes, 0.0);
        for (std::uint32_t z = 0; z < (1u << n); ++z) {
            double pz = 1.0;
            for (int i = 0; i < n; ++i) pz *= (z >> i) & 1 ? p : 1.0 - p;
            if (pz == 0.0) continue;
            std::uint64_t kept = 0;
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    if (((z >> i) & 1) && ((z >> j) & 1))
                        kept |= 1ull << pclab::edge_index(i, j, n);
            std::vector<int> dead;
            for (int e = 0; e < slots; ++e)
                if (!((kept >> e) & 1)) dead.push_back(e);
            const double inv = std::ldexp(1.0, -static_cast<int>(dead.size()));
            for (std::size_t code = 0; code < ncodes; ++code) {
                pclab::KahanSum acc;
                for (std::uint64_t fr = 0; fr < (std::uint64_t{1} << dead.size()); ++fr) {
                    std::uint64_t g2 = code & kept;
                    for (std::size_t t = 0; t < dead.size(); ++t)
                        if ((fr >> t) & 1) g2 |= 1ull << dead[static_cast<std::size_t>(t)];
                    acc.add(f[static_cast<std::size_t>(g2)]);
                }
                out[code] += pz * inv * acc.value();
            }
        }
        return out;
    };

    if (!symmetrize) return plain(table);

    // average T f over relabelings of the input
    const auto tf = plain(table);
    std::vector<int> pi(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pi[static_cast<std::size_t>(i)] = i;
    std::vector<pclab::KahanSum> acc(ncodes);
    std::size_t nperm = 0;
    do {
        for (std::size_t code = 0; code < ncodes; ++code) {
            std::uint64_t pcode = 0;
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    if ((code >> pclab::edge_index(i, j, n)) & 1) {
                        const int a = std::min(pi[static_cast<std::size_t>(i)],
                                               pi[static_cast<std::size_t>(j)]);
                        const int b = std::max(pi[static_cast<std::size_t>(i)],
                                               pi[static_cast<std::size_t>(j)]);
                        pcode |= 1ull << pclab::edge_index(a, b, n);
                    }
            acc[code].add(tf[static_cast<std::size_t>(pcode)]);
        }
        ++nperm;
    } while (std::next_permutation(pi.begin(), pi.end()));
    std::vector<double> out(ncodes);
    for (std::size_t c = 0; c < ncodes; ++c)
        out[c] = acc[c].value() / static_cast<double>(nperm);
    return out;
}

}  // namespace ref
