#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#if defined(__AVX512F__) || (defined(__AVX2__) && defined(__F16C__))
#include <immintrin.h>
#endif

#include "graph.hpp"
#include "stats.hpp"

namespace pclab {

// Edge subset S with its cached vertex support V(S).
struct Monomial {
    std::vector<std::int64_t> edges;   // sorted slot indices
    std::vector<int> vertex_support;   // sorted vertices touched by S

    int degree() const { return static_cast<int>(edges.size()); }
    int vertex_count() const { return static_cast<int>(vertex_support.size()); }
};

inline Monomial make_monomial(std::vector<std::int64_t> edges, int n) {
    Monomial m;
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    m.edges = std::move(edges);
    std::vector<int> vs;
    for (auto e : m.edges) {
        auto [i, j] = edge_endpoints(e, n);
        vs.push_back(i);
        vs.push_back(j);
    }
    std::sort(vs.begin(), vs.end());
    vs.erase(std::unique(vs.begin(), vs.end()), vs.end());
    m.vertex_support = std::move(vs);
    return m;
}

enum class DegreeMode {
    edge_count,    // |S| <= d
    vertex_count,  // |V(S)| <= d
};

// Enumeration of all monomials within the degree bound; index 0 is the
// constant (empty) monomial and indices are stable: ordered by (degree,
// lexicographic slots).
struct BasisIndex {
    int n = 0;
    int d = 0;
    DegreeMode mode = DegreeMode::edge_count;
    std::vector<Monomial> monomials;

    std::size_t size() const { return monomials.size(); }
};

namespace detail {

inline void enumerate_edge_subsets(int n, int d, std::size_t cap,
                                   std::vector<Monomial>& out) {
    const std::int64_t total = edge_slot_count(n);
    std::vector<std::int64_t> cur;
    // iterative k-combinations in lexicographic order, per degree
    for (int s = 1; s <= d; ++s) {
        if (s > total) break;
        std::vector<std::int64_t> idx(s);
        for (int i = 0; i < s; ++i) idx[i] = i;
        for (;;) {
            if (out.size() >= cap)
                throw resource_error("basis enumeration exceeds cap of " +
                                     std::to_string(cap) + " monomials");
            out.push_back(make_monomial(idx, n));
            int i = s - 1;
            while (i >= 0 && idx[i] == total - s + i) --i;
            if (i < 0) break;
            ++idx[i];
            for (int j = i + 1; j < s; ++j) idx[j] = idx[j - 1] + 1;
        }
    }
}

inline void enumerate_vertex_bounded(int n, int d, std::size_t cap,
                                     std::vector<Monomial>& out) {
    // All S with 0 < |V(S)| <= d: pick the support U, then every edge subset
    // of pairs(U) that covers all of U.
    auto emit_for_support = [&](const std::vector<int>& U) {
        const int v = static_cast<int>(U.size());
        std::vector<std::int64_t> pairs;
        for (int a = 0; a < v; ++a)
            for (int b = a + 1; b < v; ++b)
                pairs.push_back(edge_index(U[a], U[b], n));
        const int np = static_cast<int>(pairs.size());
        for (std::uint32_t mask = 1; mask < (1u << np); ++mask) {
            std::vector<std::int64_t> edges;
            std::uint32_t cover = 0;
            for (int t = 0; t < np; ++t)
                if (mask & (1u << t)) {
                    edges.push_back(pairs[t]);
                    auto [i, j] = edge_endpoints(pairs[t], n);
                    for (int a = 0; a < v; ++a)
                        if (U[a] == i || U[a] == j) cover |= 1u << a;
                }
            if (cover != (1u << v) - 1) continue;  // support smaller than U
            if (out.size() >= cap)
                throw resource_error("basis enumeration exceeds cap of " +
                                     std::to_string(cap) + " monomials");
            out.push_back(make_monomial(std::move(edges), n));
        }
    };
    // iterate supports of size 2..d
    for (int v = 2; v <= d && v <= n; ++v) {
        std::vector<int> idx(v);
        for (int i = 0; i < v; ++i) idx[i] = i;
        for (;;) {
            emit_for_support(idx);
            int i = v - 1;
            while (i >= 0 && idx[i] == n - v + i) --i;
            if (i < 0) break;
            ++idx[i];
            for (int j = i + 1; j < v; ++j) idx[j] = idx[j - 1] + 1;
        }
    }
    std::sort(out.begin() + 1, out.end(), [](const Monomial& a, const Monomial& b) {
        if (a.degree() != b.degree()) return a.degree() < b.degree();
        return a.edges < b.edges;
    });
}

}  // namespace detail

inline constexpr std::size_t kDefaultBasisCap = 4'000'000;

inline BasisIndex enumerate_monomials(int n, int d,
                                      DegreeMode mode = DegreeMode::edge_count,
                                      std::size_t cap = kDefaultBasisCap) {
    if (d < 0) throw argument_error("enumerate_monomials: d < 0");
    BasisIndex b;
    b.n = n;
    b.d = d;
    b.mode = mode;
    b.monomials.push_back(Monomial{});  // constant slot
    if (mode == DegreeMode::edge_count)
        detail::enumerate_edge_subsets(n, d, cap, b.monomials);
    else
        detail::enumerate_vertex_bounded(n, d, cap, b.monomials);
    return b;
}

inline int chi(const Monomial& s, const Graph& g) {
    int v = 1;
    for (auto e : s.edges) v *= g.sign(e);
    return v;
}

inline double chi_biased(const std::vector<int>& B, const CliqueIndicator& x,
                         double bias) {
    if (!(bias > 0.0 && bias < 1.0))
        throw argument_error("chi_biased: bias must lie in (0,1)");
    const double denom = std::sqrt(bias * (1.0 - bias));
    double v = 1.0;
    for (int i : B) v *= (static_cast<double>(x.bits[i]) - bias) / denom;
    return v;
}

struct Polynomial {
    std::shared_ptr<const BasisIndex> basis;
    std::vector<double> coeffs;
};

inline double eval_polynomial(const Polynomial& f, const Graph& g) {
    if (!f.basis || f.basis->n != g.n)
        throw argument_error("eval_polynomial: basis/graph dimension mismatch");
    if (f.coeffs.size() != f.basis->size())
        throw argument_error("eval_polynomial: coefficient length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < f.coeffs.size(); ++i) {
        const double c = f.coeffs[i];
        if (c != 0.0) acc += c * chi(f.basis->monomials[i], g);
    }
    return acc;
}

// --- fast degree-1 kernels -------------------------------------------------
// The hot experiments (SGD, projection fitting) work over the complete
// single-edge basis; there f(G) is a dense dot of a coefficient vector with
// the +-1 sign vector. Bits expand to {0,1} floats through a 2KB table and
// the products accumulate in 8 independent lanes, which GCC vectorizes.

namespace detail {

struct BitFloatLut {
    alignas(64) float f[256][8];
    BitFloatLut() {
        for (int b = 0; b < 256; ++b)
            for (int k = 0; k < 8; ++k) f[b][k] = static_cast<float>((b >> k) & 1);
    }
};
inline const BitFloatLut& bit_float_lut() {
    static const BitFloatLut lut;
    return lut;
}

// Sum of coeffs over SET bits. coeffs must be zero-padded to 64*words.
inline double dot_set_bits(const float* coeffs, const std::uint64_t* words,
                           std::size_t nwords) {
    const auto& lut = bit_float_lut();
    float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    double folded = 0.0;
    std::size_t t = 0;
    for (std::size_t w = 0; w < nwords; ++w) {
        const std::uint64_t x = words[w];
        const float* c = coeffs + 64 * w;
        for (int byte = 0; byte < 8; ++byte) {
            const float* l = lut.f[(x >> (8 * byte)) & 0xff];
            const float* cc = c + 8 * byte;
            for (int k = 0; k < 8; ++k) acc[k] += cc[k] * l[k];
        }
        // fold periodically to keep float accumulation error negligible
        if (++t == 1024) {
            for (auto& a : acc) {
                folded += a;
                a = 0.0f;
            }
            t = 0;
        }
    }
    for (auto a : acc) folded += a;
    return folded;
}

// Double-precision variant used where float rounding would bias estimates.
inline double dot_set_bits(const double* coeffs, const std::uint64_t* words,
                           std::size_t nwords) {
    const auto& lut = bit_float_lut();
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (std::size_t w = 0; w < nwords; ++w) {
        const std::uint64_t x = words[w];
        if (!x) continue;
        const double* c = coeffs + 64 * w;
        for (int byte = 0; byte < 8; ++byte) {
            const float* l = lut.f[(x >> (8 * byte)) & 0xff];
            const double* cc = c + 8 * byte;
            for (int k = 0; k < 8; ++k) acc[k] += cc[k] * static_cast<double>(l[k]);
        }
    }
    double out = 0.0;
    for (double a : acc) out += a;
    return out;
}

// out[e] += a for every SET bit e. out must be zero-padded to 64*words.
inline void axpy_set_bits(float* out, const std::uint64_t* words, std::size_t nwords,
                          float a) {
    const auto& lut = bit_float_lut();
    for (std::size_t w = 0; w < nwords; ++w) {
        const std::uint64_t x = words[w];
        if (!x) continue;
        float* o = out + 64 * w;
        for (int byte = 0; byte < 8; ++byte) {
            const float* l = lut.f[(x >> (8 * byte)) & 0xff];
            float* oo = o + 8 * byte;
            for (int k = 0; k < 8; ++k) oo[k] += a * l[k];
        }
    }
}

inline void axpy_set_bits(double* out, const std::uint64_t* words, std::size_t nwords,
                          double a) {
    const auto& lut = bit_float_lut();
    for (std::size_t w = 0; w < nwords; ++w) {
        const std::uint64_t x = words[w];
        if (!x) continue;
        double* o = out + 64 * w;
        for (int byte = 0; byte < 8; ++byte) {
            const float* l = lut.f[(x >> (8 * byte)) & 0xff];
            double* oo = o + 8 * byte;
            for (int k = 0; k < 8; ++k) oo[k] += a * static_cast<double>(l[k]);
        }
    }
}

}  // namespace detail

namespace detail {

// sum_e (bit_e ? +c_e : -c_e) over half-precision coefficients; the sign is
// applied by XOR on the float sign bit after widening. words needs the same
// 64-coefficient padding as dot_set_bits.
#if defined(__AVX2__) && defined(__F16C__)
inline double signed_dot_half(const std::uint16_t* coeffs, const std::uint64_t* words,
                              std::size_t nwords) {
    const __m256i lane_bit = _mm256_setr_epi32(1, 2, 4, 8, 16, 32, 64, 128);
    const __m256i sign_bit = _mm256_set1_epi32(static_cast<int>(0x80000000u));
    __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
    __m256 acc2 = _mm256_setzero_ps(), acc3 = _mm256_setzero_ps();
    for (std::size_t w = 0; w < nwords; ++w) {
        const std::uint64_t x = words[w];
        const std::uint16_t* c = coeffs + 64 * w;
        for (int half = 0; half < 2; ++half) {
            const std::uint32_t q = static_cast<std::uint32_t>(x >> (32 * half));
            auto lanes = [&](int byte, const std::uint16_t* cc) {
                const __m256i b = _mm256_set1_epi32(static_cast<int>((q >> (8 * byte)) & 0xff));
                const __m256i hit = _mm256_cmpeq_epi32(_mm256_and_si256(b, lane_bit), lane_bit);
                // clear bit -> flip the sign
                const __m256i flip = _mm256_andnot_si256(hit, sign_bit);
                const __m256 v = _mm256_cvtph_ps(
                    _mm_loadu_si128(reinterpret_cast<const __m128i*>(cc)));
                return _mm256_castsi256_ps(_mm256_xor_si256(_mm256_castps_si256(v), flip));
            };
            const std::uint16_t* cb = c + 32 * half;
            acc0 = _mm256_add_ps(acc0, lanes(0, cb));
            acc1 = _mm256_add_ps(acc1, lanes(1, cb + 8));
            acc2 = _mm256_add_ps(acc2, lanes(2, cb + 16));
            acc3 = _mm256_add_ps(acc3, lanes(3, cb + 24));
        }
    }
    const __m256 s = _mm256_add_ps(_mm256_add_ps(acc0, acc1), _mm256_add_ps(acc2, acc3));
    alignas(32) float lanes[8];
    _mm256_store_ps(lanes, s);
    double out = 0.0;
    for (float v : lanes) out += v;
    return out;
}
#endif

#if defined(__AVX512F__)
// Sum of the half-precision coefficients whose bit is set: graph words feed
// the lane masks directly, sixteen lanes per group. Combined with the total
// this gives the +-1 sign dot as 2*sum_set - total.
inline double masked_sum_half_512(const std::uint16_t* coeffs, const std::uint64_t* words,
                                  std::size_t nwords) {
    __m512 acc0 = _mm512_setzero_ps(), acc1 = _mm512_setzero_ps();
    __m512 acc2 = _mm512_setzero_ps(), acc3 = _mm512_setzero_ps();
    for (std::size_t w = 0; w < nwords; ++w) {
        const std::uint64_t x = words[w];
        const std::uint16_t* c = coeffs + 64 * w;
        auto cvt = [&](int g) {
            return _mm512_cvtph_ps(
                _mm256_loadu_si256(reinterpret_cast<const __m256i*>(c + 16 * g)));
        };
        acc0 = _mm512_mask_add_ps(acc0, static_cast<__mmask16>(x), acc0, cvt(0));
        acc1 = _mm512_mask_add_ps(acc1, static_cast<__mmask16>(x >> 16), acc1, cvt(1));
        acc2 = _mm512_mask_add_ps(acc2, static_cast<__mmask16>(x >> 32), acc2, cvt(2));
        acc3 = _mm512_mask_add_ps(acc3, static_cast<__mmask16>(x >> 48), acc3, cvt(3));
    }
    return static_cast<double>(_mm512_reduce_add_ps(
        _mm512_add_ps(_mm512_add_ps(acc0, acc1), _mm512_add_ps(acc2, acc3))));
}
#endif

}  // namespace detail

// Coefficient vector prepared for the fast sign-dot: float copy padded to the
// word boundary plus the total sum (dot over +-1 signs = 2*set_sum - total).
struct EdgeCoeffs {
    std::vector<float> padded;
    double total = 0.0;
    std::size_t words = 0;

    static EdgeCoeffs from(const std::vector<double>& c, std::int64_t slots) {
        EdgeCoeffs ec;
        ec.words = static_cast<std::size_t>((slots + 63) / 64);
        ec.padded.assign(ec.words * 64, 0.0f);
        KahanSum tot;
        for (std::int64_t e = 0; e < slots; ++e) {
            ec.padded[static_cast<std::size_t>(e)] = static_cast<float>(c[static_cast<std::size_t>(e)]);
            tot.add(c[static_cast<std::size_t>(e)]);
        }
        ec.total = tot.value();
        return ec;
    }

    // sum_e c_e * sign_e(G)
    double dot_signs(const Graph& g) const {
        return 2.0 * detail::dot_set_bits(padded.data(), g.bits.data(), words) - total;
    }
};

// Same dot with the coefficients quantized to half precision where the ISA
// allows; the quantization error is deterministic and orders of magnitude
// below the sampling noise of anything estimated from these dots.
struct SignDotCoeffs {
    EdgeCoeffs base;
#if defined(__F16C__) && (defined(__AVX512F__) || defined(__AVX2__))
    std::vector<std::uint16_t> half;
#endif

    static SignDotCoeffs from(const std::vector<double>& c, std::int64_t slots) {
        SignDotCoeffs sd;
        sd.base = EdgeCoeffs::from(c, slots);
#if defined(__F16C__) && (defined(__AVX512F__) || defined(__AVX2__))
        sd.half.assign(sd.base.padded.size(), 0);
        for (std::size_t i = 0; i < sd.base.padded.size(); ++i)
            sd.half[i] = _cvtss_sh(sd.base.padded[i], _MM_FROUND_TO_NEAREST_INT);
#endif
        return sd;
    }

    double dot_signs_words(const std::uint64_t* bits) const {
#if defined(__F16C__) && defined(__AVX512F__)
        return 2.0 * detail::masked_sum_half_512(half.data(), bits, base.words) -
               base.total;
#elif defined(__F16C__) && defined(__AVX2__)
        return detail::signed_dot_half(half.data(), bits, base.words);
#else
        return 2.0 * detail::dot_set_bits(base.padded.data(), bits, base.words) - base.total;
#endif
    }
};

// --- polynomial file format -------------------------------------------------
// header "n d", one line per non-constant monomial "s e_1 ... e_s coeff",
// final line "const coeff".

inline void write_polynomial(const Polynomial& f, std::ostream& os) {
    const auto& b = *f.basis;
    os << b.n << " " << b.d << "\n";
    std::ostringstream num;
    num.precision(17);
    for (std::size_t i = 1; i < b.size(); ++i) {
        const auto& m = b.monomials[i];
        os << m.degree();
        for (auto e : m.edges) os << " " << e;
        num.str("");
        num << f.coeffs[i];
        os << " " << num.str() << "\n";
    }
    num.str("");
    num << f.coeffs[0];
    os << "const " << num.str() << "\n";
}

inline Polynomial read_polynomial(std::istream& is) {
    int n = 0, d = 0;
    if (!(is >> n >> d)) throw argument_error("polynomial file: bad header");
    auto basis = std::make_shared<BasisIndex>();
    basis->n = n;
    basis->d = d;
    basis->monomials.push_back(Monomial{});
    std::vector<double> coeffs{0.0};
    std::string tok;
    while (is >> tok) {
        if (tok == "const") {
            if (!(is >> coeffs[0])) throw argument_error("polynomial file: bad constant");
            Polynomial f;
            f.basis = std::move(basis);
            f.coeffs = std::move(coeffs);
            return f;
        }
        const int s = std::stoi(tok);
        std::vector<std::int64_t> edges(static_cast<std::size_t>(s));
        for (auto& e : edges)
            if (!(is >> e)) throw argument_error("polynomial file: truncated monomial");
        double c = 0;
        if (!(is >> c)) throw argument_error("polynomial file: missing coefficient");
        basis->monomials.push_back(make_monomial(std::move(edges), n));
        coeffs.push_back(c);
    }
    throw argument_error("polynomial file: missing const line");
}

}  // namespace pclab
