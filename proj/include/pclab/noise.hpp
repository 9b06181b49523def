#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "fourier.hpp"
#include "graph.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace pclab {

// One step of the vertex-resampling chain. Each vertex survives with
// probability keep_prob; an edge slot keeps its sign iff both endpoints
// survive, otherwise it is redrawn uniformly. With permute set, the input
// is relabeled by a uniform permutation before the resampling step.
struct ChainParams {
    double keep_prob = 0.0;
    bool permute = false;
};

inline void check_chain(const ChainParams& cp) {
    if (!(cp.keep_prob >= 0.0 && cp.keep_prob <= 1.0))
        throw argument_error("keep_prob must lie in [0,1]");
}

namespace detail {

// OR len bits of src starting at src_off, ANDed with the broadcast and_mask,
// into dst starting at dst_off. The destination range must be pre-zeroed; src
// needs one readable word past its last data word (loads may touch it, its
// bits are masked off).
inline void or_bits_prezeroed(std::uint64_t* dst, std::size_t dst_off,
                              const std::uint64_t* src, std::size_t src_off,
                              std::size_t len, std::uint64_t and_mask) {
    std::size_t done = 0;
    while (done < len) {
        const std::size_t s = src_off + done;
        const unsigned sb = static_cast<unsigned>(s & 63);
        std::uint64_t w = src[s >> 6] >> sb;
        if (sb) w |= src[(s >> 6) + 1] << (64 - sb);
        w &= and_mask;
        const std::size_t d = dst_off + done;
        const std::size_t take = std::min<std::size_t>(64 - (d & 63), len - done);
        if (take != 64) w &= (1ull << take) - 1;
        dst[d >> 6] |= w << (d & 63);
        done += take;
    }
}

// Edge-slot mask with bit (i,j) set iff z_i and z_j. Row i of the slot
// layout is contiguous, so each surviving row is just a shifted copy of the
// z-suffix past position i. Walks the set bits of z directly (row offsets
// are closed-form), which keeps the loop free of data-dependent branches.
// z must carry a zeroed guard word at the end.
inline void survivor_mask_into(const std::uint64_t* z, int n, std::uint64_t* mask,
                               std::size_t mask_words) {
    std::fill(mask, mask + mask_words, 0);
    if (n < 2) return;
    const std::size_t rows = static_cast<std::size_t>(n) - 1;  // row n-1 is empty
    for (std::size_t w = 0; w * 64 < rows; ++w) {
        std::uint64_t bits = z[w];
        const std::size_t rem = rows - w * 64;
        if (rem < 64) bits &= (1ull << rem) - 1;
        while (bits) {
            const auto b = static_cast<unsigned>(std::countr_zero(bits));
            bits &= bits - 1;
            const std::size_t i = w * 64 + b;
            or_bits_prezeroed(mask, i * rows - i * (i - 1) / 2, z, i + 1, rows - i,
                              ~0ull);
        }
    }
}

inline std::vector<std::uint64_t> survivor_mask(const std::vector<std::uint64_t>& z, int n) {
    std::vector<std::uint64_t> zg = z;
    zg.push_back(0);  // guard word
    std::vector<std::uint64_t> mask((static_cast<std::size_t>(edge_slot_count(n)) + 63) / 64,
                                    0);
    survivor_mask_into(zg.data(), n, mask.data(), mask.size());
    return mask;
}

// 64 independent Bernoulli(p) bits from one stream, comparing each lane's
// uniform bit stream against the binary expansion of p most significant bit
// first; a lane is decided at the first differing bit. Expected draws are
// ~log2(64) + 2 words, and the comparison is exact for p as a binary64.
inline std::uint64_t bernoulli_word(double p, RngStream& rng) {
    std::uint64_t undecided = ~0ull, r = 0;
    for (int t = 0; t < 64 && undecided; ++t) {
        p += p;
        const bool pb = p >= 1.0;
        if (pb) p -= 1.0;
        const std::uint64_t w = rng.next_u64();
        if (pb) {
            r |= undecided & ~w;
            undecided &= w;
        } else {
            undecided &= ~w;
        }
        if (p == 0.0) break;  // remaining expansion is zero: undecided lanes lose
    }
    return r;
}

inline void sample_keep_bits_into(int n, double p, RngStream& rng, std::uint64_t* z) {
    const std::size_t words = (static_cast<std::size_t>(n) + 63) / 64;
    if (p <= 0.0) {
        std::fill(z, z + words, 0);
        return;
    }
    if (p >= 1.0) {
        std::fill(z, z + words, ~0ull);
        return;
    }
    for (std::size_t w = 0; w < words; ++w) z[w] = bernoulli_word(p, rng);
}

inline std::vector<std::uint64_t> sample_keep_bits(int n, double p, RngStream& rng) {
    std::vector<std::uint64_t> z((static_cast<std::size_t>(n) + 63) / 64, 0);
    sample_keep_bits_into(n, p, rng, z.data());
    return z;
}

}  // namespace detail

// Scratch space for allocation-free chain stepping; reusable across draws.
struct StepScratch {
    std::vector<std::uint64_t> z, mask, fresh;
    void reserve(int n) {
        z.assign((static_cast<std::size_t>(n) + 63) / 64 + 1, 0);  // +1 guard word
        mask.assign((static_cast<std::size_t>(edge_slot_count(n)) + 63) / 64, 0);
        fresh.assign(mask.size(), 0);
    }
};

// Permutation-free step writing into a caller-owned graph. Draws exactly the
// same randomness in the same order as step() below, so the two agree draw
// for draw on a shared stream. Fresh words are buffered in a generator-only
// loop, then combined with full-width stores the downstream dot products can
// load without forwarding stalls.
inline void step_into(const Graph& src, double keep_prob, RngStream& rng, Graph& out,
                      StepScratch& scratch) {
    if (out.n != src.n) out = Graph(src.n);
    if (scratch.mask.size() != src.bits.size()) scratch.reserve(src.n);
    detail::sample_keep_bits_into(src.n, keep_prob, rng, scratch.z.data());
    detail::survivor_mask_into(scratch.z.data(), src.n, scratch.mask.data(),
                               scratch.mask.size());
    const std::size_t nw = out.bits.size();
    std::uint64_t* fresh = scratch.fresh.data();
    for (std::size_t w = 0; w < nw; ++w) fresh[w] = rng.next_u64();
    const std::uint64_t* sb = src.bits.data();
    const std::uint64_t* mk = scratch.mask.data();
    std::uint64_t* ob = out.bits.data();
    std::size_t w = 0;
#if defined(__AVX512F__)
    for (; w + 8 <= nw; w += 8) {
        const __m512i s = _mm512_loadu_si512(sb + w);
        const __m512i m = _mm512_loadu_si512(mk + w);
        const __m512i f = _mm512_loadu_si512(fresh + w);
        // 0xE2: (s & m) | (f & ~m)
        _mm512_storeu_si512(ob + w, _mm512_ternarylogic_epi64(s, m, f, 0xE2));
    }
#endif
    for (; w < nw; ++w) ob[w] = (sb[w] & mk[w]) | (fresh[w] & ~mk[w]);
    out.mask_tail();
}

inline Graph step(const Graph& g, const ChainParams& cp, RngStream& rng) {
    check_chain(cp);
    const Graph* src = &g;
    Graph relabeled(0);
    if (cp.permute) {
        relabeled = permute_graph(g, random_permutation(g.n, rng));
        src = &relabeled;
    }
    Graph out(g.n);
    StepScratch scratch;
    step_into(*src, cp.keep_prob, rng, out, scratch);
    return out;
}

// Same step applied jointly to a vertex set and its graph: surviving
// membership bits are y = x AND z, and the graph sees the same z.
inline std::pair<CliqueIndicator, Graph> step_lifted(const CliqueIndicator& x, const Graph& g,
                                                     double keep_prob, RngStream& rng) {
    check_chain({keep_prob, false});
    if (static_cast<int>(x.bits.size()) != g.n)
        throw argument_error("step_lifted: vertex set and graph disagree on n");
    const auto z = detail::sample_keep_bits(g.n, keep_prob, rng);
    CliqueIndicator y;
    y.bits.resize(x.bits.size());
    for (int i = 0; i < g.n; ++i)
        y.bits[static_cast<std::size_t>(i)] =
            x.bits[static_cast<std::size_t>(i)] &
            static_cast<std::uint8_t>((z[static_cast<std::size_t>(i) >> 6] >> (i & 63)) & 1);
    const auto mask = detail::survivor_mask(z, g.n);
    Graph out(g.n);
    for (std::size_t w = 0; w < out.bits.size(); ++w)
        out.bits[w] = (g.bits[w] & mask[w]) | (rng.next_u64() & ~mask[w]);
    out.mask_tail();
    return {std::move(y), std::move(out)};
}

// chi_S is an eigenfunction of the chain with eigenvalue p^{|V(S)|}.
inline double eigenvalue(const Monomial& mono, double keep_prob) {
    return std::pow(keep_prob, mono.vertex_count());
}

struct MonteCarloValue {
    double mean = 0.0;
    double stderr_mean = 0.0;
    std::int64_t samples = 0;
};

// (Tf)(g) estimated by averaging f over independent one-step moves from g.
template <typename F>
MonteCarloValue apply_T_montecarlo(F&& f, const Graph& g, const ChainParams& cp,
                                   std::int64_t m, RngStream& rng) {
    if (m < 1) throw argument_error("apply_T_montecarlo needs m >= 1");
    MeanVar mv;
    for (std::int64_t t = 0; t < m; ++t) mv.push(f(step(g, cp, rng)));
    return {mv.mean(), mv.stderr_mean(), mv.count()};
}

}  // namespace pclab
