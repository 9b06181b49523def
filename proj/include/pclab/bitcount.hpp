#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace pclab {

namespace detail {

// In-place transpose of a 64x64 bit matrix (Hacker's Delight 7-3).
inline void transpose64(std::uint64_t x[64]) {
    std::uint64_t m = 0x00000000FFFFFFFFull;
    for (int j = 32; j != 0; j >>= 1, m ^= m << j) {
        for (int k = 0; k < 64; k = ((k | j) + 1) & ~j) {
            const std::uint64_t t = (x[k] ^ (x[k | j] >> j)) & m;
            x[k] ^= t;
            x[k | j] ^= t << j;
        }
    }
}

}  // namespace detail

// Per-bit-column popcounts over a stream of equally sized bit vectors:
// after flush(), count(e) = number of added vectors with bit e set.
// Samples are absorbed in pairs through a carry-save ladder (planes hold
// binary digits of the running counts), so the per-sample cost is a few
// word ops per machine word instead of per bit.
class ColumnCounter {
  public:
    explicit ColumnCounter(std::size_t words)
        : words_(words),
          held_(words, 0),
          planes_(kPlanes * words, 0),
          totals_(words * 64, 0) {}

    std::size_t words() const { return words_; }
    std::uint64_t samples() const { return nsamples_; }

    void add(const std::uint64_t* w) {
        if (nsamples_ >= (std::uint64_t{1} << 31))
            throw std::length_error("ColumnCounter overflow");
        if (has_held_) {
            add_pair(held_.data(), w);
            has_held_ = false;
        } else {
            std::memcpy(held_.data(), w, words_ * sizeof(std::uint64_t));
            has_held_ = true;
        }
        ++nsamples_;
    }

    void flush() {
        if (has_held_) {
            const std::vector<std::uint64_t> zero(words_, 0);
            add_pair(held_.data(), zero.data());
            has_held_ = false;
        }
        std::uint64_t rows[64];
        for (std::size_t w = 0; w < words_; ++w) {
            // transpose64 works in MSB-first row/column order, so mirror the
            // plane index on the way in and the column index on the way out.
            for (std::size_t k = 0; k < 64 - kPlanes; ++k) rows[k] = 0;
            for (std::size_t k = 0; k < kPlanes; ++k) rows[63 - k] = planes_[k * words_ + w];
            detail::transpose64(rows);
            std::uint64_t* t = totals_.data() + w * 64;
            for (int j = 0; j < 64; ++j) t[63 - j] += rows[j];
        }
        std::fill(planes_.begin(), planes_.end(), 0);
    }

    // Valid only after flush().
    std::uint64_t count(std::size_t slot) const { return totals_[slot]; }
    const std::vector<std::uint64_t>& totals() const { return totals_; }

    // Average of the +-1 signs encoded by bit e over all samples.
    double mean_sign(std::size_t slot) const {
        return (2.0 * static_cast<double>(totals_[slot]) - static_cast<double>(nsamples_)) /
               static_cast<double>(nsamples_);
    }

    void reset() {
        has_held_ = false;
        nsamples_ = 0;
        std::fill(planes_.begin(), planes_.end(), 0);
        std::fill(totals_.begin(), totals_.end(), 0);
    }

  private:
    static constexpr std::size_t kPlanes = 32;

    void add_pair(const std::uint64_t* a, const std::uint64_t* b) {
        std::uint64_t* p0 = planes_.data();
        std::uint64_t* p1 = p0 + words_;
        std::uint64_t* p2 = p1 + words_;
        std::uint64_t* p3 = p2 + words_;
        for (std::size_t w = 0; w < words_; ++w) {
            const std::uint64_t aw = a[w], bw = b[w];
            const std::uint64_t t0 = aw ^ bw;
            // a&b (weight 2) and the ones-carry are disjoint: both need a^b=0 / =1.
            std::uint64_t carry = (aw & bw) | (p0[w] & t0);
            p0[w] ^= t0;
            std::uint64_t c = p1[w] & carry;
            p1[w] ^= carry;
            carry = p2[w] & c;
            p2[w] ^= c;
            c = p3[w] & carry;
            p3[w] ^= carry;
            for (std::size_t k = 4; c; ++k) {
                std::uint64_t& pl = planes_[k * words_ + w];
                const std::uint64_t t = pl & c;
                pl ^= c;
                c = t;
            }
        }
    }

    std::size_t words_;
    bool has_held_ = false;
    std::uint64_t nsamples_ = 0;
    std::vector<std::uint64_t> held_;
    std::vector<std::uint64_t> planes_;
    std::vector<std::uint64_t> totals_;
};

}  // namespace pclab
