#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fourier.hpp"
#include "graph.hpp"
#include "stats.hpp"

namespace pclab {

inline constexpr int kDefaultOracleCap = 5;  // 2^C(5,2) = 1024 graphs

// Probability per graph, indexed by the sign pattern read as an integer
// (bit e of the index = bit e of the graph).
struct ExactDistribution {
    int n = 0;
    std::vector<double> weights;
};

inline void check_oracle_cap(int n, int cap = kDefaultOracleCap) {
    if (n > cap)
        throw resource_error("exact oracle capped at n <= " + std::to_string(cap));
}

inline Graph graph_from_code(std::uint64_t code, int n) {
    Graph g(n);
    if (!g.bits.empty()) g.bits[0] = code;
    g.mask_tail();
    return g;
}

inline ExactDistribution exact_null_distribution(int n, int cap = kDefaultOracleCap) {
    check_oracle_cap(n, cap);
    const std::size_t m = std::size_t{1} << edge_slot_count(n);
    return {n, std::vector<double>(m, 1.0 / static_cast<double>(m))};
}

inline ExactDistribution exact_planted_distribution(const ModelParams& mp,
                                                    int cap = kDefaultOracleCap) {
    check_model(mp);
    check_oracle_cap(mp.n, cap);
    const int n = mp.n;
    const std::int64_t slots = edge_slot_count(n);
    const double q = n > 0 ? mp.k / n : 0.0;
    const std::size_t ngraphs = std::size_t{1} << slots;
    std::vector<KahanSum> acc(ngraphs);
    for (std::uint32_t x = 0; x < (1u << n); ++x) {
        double px = 1.0;
        for (int i = 0; i < n; ++i) px *= (x >> i) & 1 ? q : 1.0 - q;
        if (px == 0.0) continue;
        std::uint64_t cliq = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (((x >> i) & 1) && ((x >> j) & 1))
                    cliq |= 1ull << edge_index(i, j, n);
        const int free_slots = static_cast<int>(slots) - std::popcount(cliq);
        const double w = px * std::ldexp(1.0, -free_slots);
        for (std::uint64_t code = 0; code < ngraphs; ++code)
            if ((code & cliq) == cliq) acc[code].add(w);
    }
    ExactDistribution d{n, std::vector<double>(ngraphs)};
    for (std::size_t i = 0; i < ngraphs; ++i) d.weights[i] = acc[i].value();
    return d;
}

inline double exact_expectation(const std::function<double(const Graph&)>& f,
                                const ExactDistribution& dist) {
    KahanSum s;
    for (std::size_t code = 0; code < dist.weights.size(); ++code)
        if (dist.weights[code] != 0.0)
            s.add(dist.weights[code] * f(graph_from_code(code, dist.n)));
    return s.value();
}

inline double exact_low_degree_optimum(const ModelParams& mp, int d,
                                       DegreeMode mode = DegreeMode::edge_count,
                                       int cap = kDefaultOracleCap) {
    const auto dist = exact_planted_distribution(mp, cap);
    const auto basis = enumerate_monomials(mp.n, d, mode);
    KahanSum total;
    for (std::size_t i = 1; i < basis.size(); ++i) {
        const auto& mono = basis.monomials[i];
        const double mean = exact_expectation(
            [&](const Graph& g) { return static_cast<double>(chi(mono, g)); }, dist);
        total.add(mean * mean);
    }
    return std::sqrt(std::max(0.0, total.value()));
}

// --- exact noise operator ---------------------------------------------------

// Walsh coefficients of a table over the sign cube: table[code] =
// sum_S coeff[S] * chi_S(code) with chi_S(code) = prod_{e in S} (+-1).
inline std::vector<double> exact_fourier_coeffs(std::vector<double> table) {
    const std::size_t m = table.size();
    for (std::size_t len = 1; len < m; len <<= 1)
        for (std::size_t i = 0; i < m; i += len << 1)
            for (std::size_t j = i; j < i + len; ++j) {
                const double lo = table[j];        // slot bit 0 -> sign -1
                const double hi = table[j + len];  // slot bit 1 -> sign +1
                table[j] = hi + lo;
                table[j + len] = hi - lo;
            }
    const double inv = 1.0 / static_cast<double>(m);
    for (auto& v : table) v *= inv;
    return table;
}

inline std::vector<double> exact_table_from_coeffs(std::vector<double> coeffs) {
    const std::size_t m = coeffs.size();
    for (std::size_t len = 1; len < m; len <<= 1)
        for (std::size_t i = 0; i < m; i += len << 1)
            for (std::size_t j = i; j < i + len; ++j) {
                const double c0 = coeffs[j];
                const double c1 = coeffs[j + len];
                coeffs[j] = c0 - c1;
                coeffs[j + len] = c0 + c1;
            }
    return coeffs;
}

inline int vertex_count_of_mask(std::uint64_t mask, int n) {
    std::uint32_t verts = 0;
    for (int e = 0; e < edge_slot_count(n); ++e)
        if ((mask >> e) & 1) {
            const auto [i, j] = edge_endpoints(e, n);
            verts |= (1u << i) | (1u << j);
        }
    return std::popcount(verts);
}

// Average of f over all n! relabelings of its input.
inline std::vector<double> exact_symmetrize(const std::vector<double>& table, int n) {
    std::vector<int> pi(n);
    for (int i = 0; i < n; ++i) pi[i] = i;
    std::vector<KahanSum> acc(table.size());
    std::size_t nperm = 0;
    do {
        // destination slot map under pi
        std::vector<int> slot_map(static_cast<std::size_t>(edge_slot_count(n)));
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const int a = std::min(pi[i], pi[j]);
                const int b = std::max(pi[i], pi[j]);
                slot_map[static_cast<std::size_t>(edge_index(i, j, n))] =
                    static_cast<int>(edge_index(a, b, n));
            }
        for (std::size_t code = 0; code < table.size(); ++code) {
            std::uint64_t pcode = 0;
            for (std::size_t e = 0; e < slot_map.size(); ++e)
                if ((code >> e) & 1) pcode |= 1ull << slot_map[e];
            acc[code].add(table[static_cast<std::size_t>(pcode)]);
        }
        ++nperm;
    } while (std::next_permutation(pi.begin(), pi.end()));
    std::vector<double> out(table.size());
    for (std::size_t i = 0; i < table.size(); ++i)
        out[i] = acc[i].value() / static_cast<double>(nperm);
    return out;
}

// Exact Tf: expand over the Walsh basis and scale the S-coefficient by
// p^{|V(S)|}. With symmetrize on, the relabeling average is applied first
// (the two operators commute; a unit test checks that).
inline std::vector<double> exact_apply_T(const std::vector<double>& table, int n,
                                         double p, bool symmetrize = false,
                                         int cap = kDefaultOracleCap) {
    check_oracle_cap(n, cap);
    if (table.size() != (std::size_t{1} << edge_slot_count(n)))
        throw argument_error("exact_apply_T: table size != 2^C(n,2)");
    std::vector<double> work = symmetrize ? exact_symmetrize(table, n) : table;
    auto coeffs = exact_fourier_coeffs(std::move(work));
    for (std::size_t mask = 1; mask < coeffs.size(); ++mask)
        coeffs[mask] *= std::pow(p, vertex_count_of_mask(mask, n));
    return exact_table_from_coeffs(std::move(coeffs));
}

inline std::vector<double> table_of_polynomial(const Polynomial& f) {
    const int n = f.basis->n;
    check_oracle_cap(n);
    const std::size_t m = std::size_t{1} << edge_slot_count(n);
    std::vector<double> table(m);
    for (std::size_t code = 0; code < m; ++code)
        table[code] = eval_polynomial(f, graph_from_code(code, n));
    return table;
}

}  // namespace pclab
