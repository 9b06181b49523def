#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "rng.hpp"
#include "stats.hpp"

namespace pclab {

inline std::int64_t edge_slot_count(int n) {
    return static_cast<std::int64_t>(n) * (n - 1) / 2;
}

// Lexicographic slot of the unordered pair {i,j}, i < j.
// Row i starts at i*n - i*(i+1)/2 - i + ... — folded below.
inline std::int64_t edge_index(int i, int j, int n) {
    if (i < 0 || i >= j || j >= n)
        throw argument_error("edge_index: need 0 <= i < j < n");
    const std::int64_t ii = i;
    return ii * n - ii * (ii + 1) / 2 + (j - i - 1);
}

inline std::pair<int, int> edge_endpoints(std::int64_t e, int n) {
    const std::int64_t total = edge_slot_count(n);
    if (e < 0 || e >= total) throw argument_error("edge_endpoints: slot out of range");
    // Closed-form guess for the row, then exact fixup.
    int i = static_cast<int>(
        n - 2 - std::int64_t((std::sqrt(8.0 * double(total - 1 - e) + 1.0) - 1.0) / 2.0));
    if (i < 0) i = 0;
    auto row_start = [n](int r) {
        return static_cast<std::int64_t>(r) * n - static_cast<std::int64_t>(r) * (r + 1) / 2;
    };
    while (i > 0 && row_start(i) > e) --i;
    while (row_start(i + 1) <= e) ++i;
    const int j = static_cast<int>(e - row_start(i)) + i + 1;
    return {i, j};
}

// Sign vector over the C(n,2) edge slots, one bit per slot (bit 1 <-> +1).
// Trailing bits of the last word are kept zero; popcount and the wordwise
// kernels rely on that.
struct Graph {
    int n = 0;
    std::vector<std::uint64_t> bits;

    Graph() = default;
    explicit Graph(int n_) : n(n_), bits((edge_slot_count(n_) + 63) / 64, 0) {}

    std::int64_t slots() const { return edge_slot_count(n); }
    std::size_t words() const { return bits.size(); }

    bool bit(std::int64_t e) const {
        return (bits[static_cast<std::size_t>(e >> 6)] >> (e & 63)) & 1u;
    }
    int sign(std::int64_t e) const { return bit(e) ? +1 : -1; }
    void set_bit(std::int64_t e, bool v) {
        auto& w = bits[static_cast<std::size_t>(e >> 6)];
        const std::uint64_t m = 1ull << (e & 63);
        w = v ? (w | m) : (w & ~m);
    }

    std::int64_t edge_count() const {
        std::int64_t c = 0;
        std::size_t w = 0;
#if defined(__AVX512VPOPCNTDQ__)
        // full-width loads match the stores of the wordwise producers, so
        // freshly written graphs forward cleanly from the store buffer
        __m512i acc = _mm512_setzero_si512();
        for (; w + 8 <= bits.size(); w += 8)
            acc = _mm512_add_epi64(
                acc, _mm512_popcnt_epi64(_mm512_loadu_si512(bits.data() + w)));
        c = static_cast<std::int64_t>(_mm512_reduce_add_epi64(acc));
#endif
        for (; w < bits.size(); ++w) c += std::popcount(bits[w]);
        return c;
    }

    // Sum of +-1 signs = 2*edges - slots.
    std::int64_t sign_sum() const { return 2 * edge_count() - slots(); }

    void mask_tail() {
        const std::int64_t total = slots();
        if (bits.empty()) return;
        const int used = static_cast<int>(total & 63);
        if (used) bits.back() &= (~0ull) >> (64 - used);
    }

    bool operator==(const Graph& o) const = default;
};

struct CliqueIndicator {
    std::vector<std::uint8_t> bits;
    int n() const { return static_cast<int>(bits.size()); }
    std::int64_t popcount() const {
        std::int64_t c = 0;
        for (auto b : bits) c += b;
        return c;
    }
};

struct ModelParams {
    int n = 0;
    double k = 0.0;  // expected clique size; bias q = k/n
};

inline void check_model(const ModelParams& mp) {
    if (mp.n < 0 || mp.k < 0.0 || mp.k > mp.n)
        throw argument_error("ModelParams: need 0 <= k <= n");
}

inline Graph sample_null(int n, RngStream& rng) {
    Graph g(n);
    for (auto& w : g.bits) w = rng.next_u64();
    g.mask_tail();
    return g;
}

inline Graph plant_clique(const Graph& g, const CliqueIndicator& x) {
    if (x.n() != g.n) throw argument_error("plant_clique: length mismatch");
    Graph out = g;
    std::vector<int> verts;
    for (int i = 0; i < g.n; ++i)
        if (x.bits[i]) verts.push_back(i);
    for (std::size_t a = 0; a < verts.size(); ++a)
        for (std::size_t b = a + 1; b < verts.size(); ++b)
            out.set_bit(edge_index(verts[a], verts[b], g.n), true);
    return out;
}

struct PlantedSample {
    Graph graph;
    CliqueIndicator clique;
};

inline PlantedSample sample_planted(const ModelParams& mp, RngStream& rng) {
    check_model(mp);
    const double q = mp.n > 0 ? mp.k / mp.n : 0.0;
    CliqueIndicator x;
    x.bits.resize(mp.n);
    for (int i = 0; i < mp.n; ++i) x.bits[i] = rng.bernoulli(q) ? 1 : 0;
    Graph g = sample_null(mp.n, rng);
    return {plant_clique(g, x), std::move(x)};
}

inline Graph permute_graph(const Graph& g, const std::vector<int>& pi) {
    if (static_cast<int>(pi.size()) != g.n)
        throw argument_error("permute_graph: permutation size mismatch");
    std::vector<char> seen(g.n, 0);
    for (int v : pi) {
        if (v < 0 || v >= g.n || seen[v])
            throw argument_error("permute_graph: not a bijection on [n]");
        seen[v] = 1;
    }
    Graph out(g.n);
    for (int i = 0; i < g.n; ++i) {
        for (int j = i + 1; j < g.n; ++j) {
            const int a = pi[i] < pi[j] ? pi[i] : pi[j];
            const int b = pi[i] < pi[j] ? pi[j] : pi[i];
            if (g.bit(edge_index(i, j, g.n))) out.set_bit(edge_index(a, b, g.n), true);
        }
    }
    return out;
}

inline std::vector<int> random_permutation(int n, RngStream& rng) {
    std::vector<int> pi(n);
    for (int i = 0; i < n; ++i) pi[i] = i;
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i) + 1));
        std::swap(pi[i], pi[j]);
    }
    return pi;
}

// --- file formats ---------------------------------------------------------
// Text: line 1 "n", line 2 a {0,1} string over the C(n,2) slots (1 <-> +1).
// Binary: 8-byte little-endian n, then the packed bits, low slot = low bit.

inline void write_graph_text(const Graph& g, std::ostream& os) {
    os << g.n << "\n";
    const std::int64_t total = g.slots();
    std::string row(static_cast<std::size_t>(total), '0');
    for (std::int64_t e = 0; e < total; ++e)
        if (g.bit(e)) row[static_cast<std::size_t>(e)] = '1';
    os << row << "\n";
}

inline Graph read_graph_text(std::istream& is) {
    std::int64_t n = -1;
    if (!(is >> n) || n < 0) throw argument_error("graph text: bad vertex count");
    std::string row;
    if (!(is >> row) && n > 1) throw argument_error("graph text: missing sign row");
    Graph g(static_cast<int>(n));
    if (static_cast<std::int64_t>(row.size()) != g.slots())
        throw argument_error("graph text: sign row length != n(n-1)/2");
    for (std::int64_t e = 0; e < g.slots(); ++e) {
        const char c = row[static_cast<std::size_t>(e)];
        if (c == '1')
            g.set_bit(e, true);
        else if (c != '0')
            throw argument_error("graph text: sign row must be over {0,1}");
    }
    return g;
}

inline void write_graph_binary(const Graph& g, std::ostream& os) {
    std::uint64_t n = static_cast<std::uint64_t>(g.n);
    char hdr[8];
    for (int b = 0; b < 8; ++b) hdr[b] = static_cast<char>((n >> (8 * b)) & 0xff);
    os.write(hdr, 8);
    const std::int64_t nbytes = (g.slots() + 7) / 8;
    for (std::int64_t i = 0; i < nbytes; ++i) {
        const auto w = g.bits[static_cast<std::size_t>(i / 8)];
        os.put(static_cast<char>((w >> (8 * (i % 8))) & 0xff));
    }
}

inline Graph read_graph_binary(std::istream& is) {
    char hdr[8];
    if (!is.read(hdr, 8)) throw argument_error("graph binary: truncated header");
    std::uint64_t n = 0;
    for (int b = 0; b < 8; ++b)
        n |= static_cast<std::uint64_t>(static_cast<unsigned char>(hdr[b])) << (8 * b);
    if (n > (1ull << 31)) throw argument_error("graph binary: implausible vertex count");
    Graph g(static_cast<int>(n));
    const std::int64_t nbytes = (g.slots() + 7) / 8;
    for (std::int64_t i = 0; i < nbytes; ++i) {
        const int c = is.get();
        if (c == EOF) throw argument_error("graph binary: truncated payload");
        g.bits[static_cast<std::size_t>(i / 8)] |=
            static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * (i % 8));
    }
    g.mask_tail();
    return g;
}

}  // namespace pclab
