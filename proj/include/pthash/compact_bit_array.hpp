#pragma once

#include <bit>
#include <cassert>
#include <cstdint>
#include <span>
#include <vector>

#include "byte_io.hpp"

namespace pthash {

namespace bits {

/// Minimum number of bits for x, at least 1.
inline uint64_t width_of(uint64_t x) { return x == 0 ? 1 : 64 - std::countl_zero(x); }

/// ceil(log2(count)), at least 1: width of an index into `count` entries.
inline uint64_t index_width(uint64_t count) {
    return count <= 2 ? 1 : 64 - std::countl_zero(count - 1);
}

inline uint64_t words_for(uint64_t num_bits) { return (num_bits + 63) / 64; }

/// Reads `width` (1..64) bits at `pos`. `words` must hold one word of slack past the data.
inline uint64_t get_bits(const uint64_t* words, uint64_t pos, uint64_t width) {
    const uint64_t block = pos >> 6;
    const uint64_t shift = pos & 63;
    const uint64_t lo = words[block] >> shift;
    const uint64_t hi = (words[block + 1] << 1) << (63 - shift);
    return (lo | hi) & (~uint64_t(0) >> (64 - width));
}

inline void set_bits(uint64_t* words, uint64_t pos, uint64_t value, uint64_t width) {
    assert(width >= 1 && width <= 64);
    assert(width == 64 || value >> width == 0);
    const uint64_t block = pos >> 6;
    const uint64_t shift = pos & 63;
    words[block] |= value << shift;
    if (shift + width > 64) words[block + 1] |= value >> (64 - shift);
}

}  // namespace bits

/// Fixed-width packed integer array.
class compact_bit_array {
public:
    compact_bit_array() : m_size(0), m_width(1), m_words(1, 0) {}

    compact_bit_array(uint64_t size, uint64_t width)
        : m_size(size), m_width(width), m_words(bits::words_for(size * width) + 1, 0) {
        assert(width >= 1 && width <= 64);
    }

    template <typename Range>
    static compact_bit_array from_values(Range const& values) {
        uint64_t max = 0;
        uint64_t size = 0;
        for (uint64_t v : values) {
            max = v > max ? v : max;
            ++size;
        }
        compact_bit_array a(size, bits::width_of(max));
        uint64_t i = 0;
        for (uint64_t v : values) a.set(i++, v);
        return a;
    }

    void set(uint64_t i, uint64_t value) {
        assert(i < m_size);
        bits::set_bits(m_words.data(), i * m_width, value, m_width);
    }

    uint64_t access(uint64_t i) const {
        assert(i < m_size);
        return bits::get_bits(m_words.data(), i * m_width, m_width);
    }

    uint64_t size() const { return m_size; }
    uint64_t width() const { return m_width; }

    /// Payload bits, excluding the slack word.
    uint64_t num_bits() const { return m_size * m_width; }

    template <typename Sink>
    void write(Sink& out) const {
        out.put_u64(m_size);
        out.put_u64(m_width);
        out.put_words(std::span(m_words).first(m_words.size() - 1));
    }

    static compact_bit_array read(byte_reader& in) {
        compact_bit_array a;
        a.m_size = in.get_u64();
        a.m_width = in.get_u64();
        if (a.m_width < 1 || a.m_width > 64) throw format_error("invalid compact array width");
        if (a.m_size > (uint64_t(1) << 56) / a.m_width) throw truncated_stream_error();
        a.m_words = in.get_words(bits::words_for(a.m_size * a.m_width));
        a.m_words.push_back(0);
        return a;
    }

    friend bool operator==(compact_bit_array const&, compact_bit_array const&) = default;

private:
    uint64_t m_size;
    uint64_t m_width;
    std::vector<uint64_t> m_words;
};

}  // namespace pthash
