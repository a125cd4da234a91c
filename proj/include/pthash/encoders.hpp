#pragma once

#include <algorithm>
#include <bit>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "byte_io.hpp"
#include "compact_bit_array.hpp"

namespace pthash {

enum class encoder_tag : uint8_t {
    dictionary_dd = 1,
    partitioned_compact = 2,
    elias_fano = 3,
};

const char* encoder_name(encoder_tag tag);
encoder_tag encoder_from_name(std::string_view name);  // "dd", "pc" or "ef"

/*
    Encoders read their input through a multi-pass "sequence source": any type with
        uint64_t size() const;
        template <typename F> void for_each(F&& f) const;   // f(uint64_t) in order
    so that the same code encodes in-memory vectors and disk-resident sequences.
*/
struct span_source {
    std::span<const uint64_t> values;
    uint64_t size() const { return values.size(); }
    template <typename F>
    void for_each(F&& f) const {
        for (uint64_t v : values) f(v);
    }
};

/// Prefix sums 0, v[0], v[0]+v[1], ... of a source (size + 1 values).
template <typename Source>
struct prefix_sum_source {
    Source const& base;
    uint64_t size() const { return base.size() + 1; }
    template <typename F>
    void for_each(F&& f) const {
        uint64_t sum = 0;
        f(sum);
        base.for_each([&](uint64_t v) {
            sum += v;
            f(sum);
        });
    }
};

/*
    Partitioned compact (PC): blocks of b values, each block stored with the
    minimum bit-width of its maximum (1 if the maximum is 0). W holds the
    prefix sums of the widths, with the grand total as last entry, so that
        w = W[block + 1] - W[block],  position = W[block] * b + offset * w.
    The last block is padded in the position arithmetic only: its bits are
    stored up to the last real element.
*/
class partitioned_compact {
public:
    static constexpr uint64_t default_block_size = 256;

    partitioned_compact() : m_size(0), m_log_block_size(8), m_widths{0}, m_payload(1, 0) {}

    template <typename Source>
    void encode(Source const& src, uint64_t block_size = default_block_size) {
        if (block_size == 0 || !std::has_single_bit(block_size)) {
            throw std::invalid_argument("block size must be a power of two");
        }
        m_size = src.size();
        m_log_block_size = std::countr_zero(block_size);
        const uint64_t num_blocks = (m_size + block_size - 1) / block_size;

        m_widths.assign(num_blocks + 1, 0);
        uint64_t i = 0;
        uint64_t block_max = 0;
        src.for_each([&](uint64_t v) {
            block_max = std::max(block_max, v);
            if (++i % block_size == 0 || i == m_size) {
                uint64_t block = (i - 1) >> m_log_block_size;
                m_widths[block + 1] = m_widths[block] + uint32_t(bits::width_of(block_max));
                block_max = 0;
            }
        });

        m_payload.assign(bits::words_for(payload_bits()) + 1, 0);
        i = 0;
        src.for_each([&](uint64_t v) {
            uint64_t block = i >> m_log_block_size;
            uint64_t offset = i & (block_size - 1);
            uint64_t w = m_widths[block + 1] - m_widths[block];
            bits::set_bits(m_payload.data(), (uint64_t(m_widths[block]) << m_log_block_size) + offset * w,
                           v, w);
            ++i;
        });
    }

    uint64_t access(uint64_t i) const {
        assert(i < m_size);
        const uint64_t block = i >> m_log_block_size;
        const uint64_t offset = i & ((uint64_t(1) << m_log_block_size) - 1);
        const uint64_t start = m_widths[block];
        const uint64_t w = m_widths[block + 1] - start;
        const uint64_t position = (start << m_log_block_size) + offset * w;
        return bits::get_bits(m_payload.data(), position, w);
    }

    uint64_t size() const { return m_size; }
    uint64_t block_size() const { return uint64_t(1) << m_log_block_size; }
    std::span<const uint32_t> widths_prefix() const { return m_widths; }

    /// Stored bits of B: exact per-block accounting.
    uint64_t payload_bits() const {
        if (m_size == 0) return 0;
        const uint64_t num_blocks = m_widths.size() - 1;
        const uint64_t last = num_blocks - 1;
        const uint64_t last_len = m_size - (last << m_log_block_size);
        return (uint64_t(m_widths[last]) << m_log_block_size) +
               last_len * (m_widths[last + 1] - m_widths[last]);
    }

    template <typename Sink>
    void write(Sink& out) const {
        out.put_u8(uint8_t(encoder_tag::partitioned_compact));
        out.put_u64(m_size);
        out.put_u64(block_size());
        for (uint32_t w : m_widths) out.put_u32(w);
        out.pad8();
        out.put_words(std::span(m_payload).first(m_payload.size() - 1));
    }

    static partitioned_compact read(byte_reader& in);

    friend bool operator==(partitioned_compact const&, partitioned_compact const&) = default;

private:
    uint64_t m_size;
    uint64_t m_log_block_size;
    std::vector<uint32_t> m_widths;
    std::vector<uint64_t> m_payload;
};

/*
    Elias-Fano representation of a non-decreasing sequence in [0, universe).
    Low parts take l = floor(log2(universe / n)) bits each; high parts are
    unary-coded in a bitmap of n + (universe >> l) + 1 bits. Select on the
    high bitmap starts from a sampled position every `select_sample_rate` ones.
*/
class elias_fano {
public:
    static constexpr uint64_t select_sample_rate = 1024;

    elias_fano() : m_size(0), m_universe(0), m_low_width(0), m_low(1, 0), m_high(2, 0) {}

    template <typename Source>
    void encode(Source const& src, uint64_t universe) {
        m_size = src.size();
        m_universe = universe;
        m_low_width = 0;
        if (m_size != 0 && universe > m_size) {
            m_low_width = 63 - std::countl_zero(universe / m_size);
        }
        const uint64_t high_bits = m_size + (universe >> m_low_width) + 1;
        m_low.assign(bits::words_for(m_size * m_low_width) + 1, 0);
        m_high.assign(bits::words_for(high_bits) + 1, 0);
        m_samples.assign((m_size + select_sample_rate - 1) / select_sample_rate, 0);

        uint64_t i = 0;
        uint64_t prev = 0;
        const uint64_t low_mask = (uint64_t(1) << m_low_width) - 1;
        src.for_each([&](uint64_t v) {
            if (v < prev) throw std::invalid_argument("elias_fano: sequence is not monotone");
            if (v >= universe) throw std::invalid_argument("elias_fano: value out of universe");
            prev = v;
            if (m_low_width) bits::set_bits(m_low.data(), i * m_low_width, v & low_mask, m_low_width);
            uint64_t pos = (v >> m_low_width) + i;
            m_high[pos >> 6] |= uint64_t(1) << (pos & 63);
            if (i % select_sample_rate == 0) m_samples[i / select_sample_rate] = pos;
            ++i;
        });
    }

    uint64_t access(uint64_t i) const {
        assert(i < m_size);
        return ((select(i) - i) << m_low_width) | low(i);
    }

    /// access(i + 1) - access(i), with a single select.
    uint64_t diff(uint64_t i) const {
        assert(i + 1 < m_size);
        uint64_t pos = select(i);
        uint64_t next = next_one(pos + 1);
        uint64_t a = ((pos - i) << m_low_width) | low(i);
        uint64_t b = ((next - i - 1) << m_low_width) | low(i + 1);
        return b - a;
    }

    uint64_t size() const { return m_size; }
    uint64_t universe() const { return m_universe; }
    uint64_t low_width() const { return m_low_width; }

    /// Bits of low array + high bitmap + select samples.
    uint64_t num_bits() const {
        return m_size * m_low_width + (m_size + (m_universe >> m_low_width) + 1) +
               64 * m_samples.size();
    }

    template <typename Sink>
    void write(Sink& out) const {
        out.put_u8(uint8_t(encoder_tag::elias_fano));
        out.put_u64(m_size);
        out.put_u64(m_universe);
        out.put_u64(m_low_width);
        out.pad8();
        out.put_words(std::span(m_low).first(m_low.size() - 1));
        out.put_words(std::span(m_high).first(m_high.size() - 1));
        out.put_words(m_samples);
    }

    static elias_fano read(byte_reader& in);

    friend bool operator==(elias_fano const&, elias_fano const&) = default;

private:
    uint64_t low(uint64_t i) const {
        return m_low_width ? bits::get_bits(m_low.data(), i * m_low_width, m_low_width) : 0;
    }

    uint64_t select(uint64_t i) const;
    uint64_t next_one(uint64_t pos) const;

    uint64_t m_size;
    uint64_t m_universe;
    uint64_t m_low_width;
    std::vector<uint64_t> m_low;
    std::vector<uint64_t> m_high;
    std::vector<uint64_t> m_samples;
};

/// Pilots as Elias-Fano over their prefix sums; access is a difference of neighbours.
class pilots_elias_fano {
public:
    template <typename Source>
    void encode(Source const& src) {
        uint64_t total = 0;
        src.for_each([&](uint64_t v) { total += v; });
        m_prefix_sums.encode(prefix_sum_source<Source>{src}, total + 1);
    }

    uint64_t access(uint64_t i) const { return m_prefix_sums.diff(i); }
    uint64_t size() const { return m_prefix_sums.size() ? m_prefix_sums.size() - 1 : 0; }
    uint64_t num_bits() const { return m_prefix_sums.num_bits(); }
    elias_fano const& prefix_sums() const { return m_prefix_sums; }

    template <typename Sink>
    void write(Sink& out) const {
        m_prefix_sums.write(out);
    }

    static pilots_elias_fano read(byte_reader& in) {
        pilots_elias_fano p;
        p.m_prefix_sums = elias_fano::read(in);
        if (p.m_prefix_sums.size() == 0) throw format_error("empty prefix-sum sequence");
        return p;
    }

    friend bool operator==(pilots_elias_fano const&, pilots_elias_fano const&) = default;

private:
    elias_fano m_prefix_sums;
};

/*
    Front-back dictionary (D-D). The sequence is split at ceil(0.3 * size);
    each region keeps the sorted distinct values it contains and, per element,
    the fixed-width index of its value in that dictionary.
*/
class front_back_dictionary {
public:
    static uint64_t split_point(uint64_t size) { return (3 * size + 9) / 10; }

    template <typename Source>
    void encode(Source const& src) {
        const uint64_t size = src.size();
        m_split = split_point(size);

        std::vector<uint64_t> front, back;
        uint64_t front_unique = 0, back_unique = 0;
        auto dedup = [](std::vector<uint64_t>& v, uint64_t& unique) {
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
            unique = v.size();
        };
        uint64_t i = 0;
        src.for_each([&](uint64_t v) {
            auto& region = i < m_split ? front : back;
            auto& unique = i < m_split ? front_unique : back_unique;
            region.push_back(v);
            if (region.size() >= std::max<uint64_t>(1024, 2 * unique)) dedup(region, unique);
            ++i;
        });
        dedup(front, front_unique);
        dedup(back, back_unique);

        m_front_dict = compact_bit_array::from_values(front);
        m_back_dict = compact_bit_array::from_values(back);
        m_front_ranks = compact_bit_array(m_split, bits::index_width(front.size()));
        m_back_ranks = compact_bit_array(size - m_split, bits::index_width(back.size()));
        i = 0;
        src.for_each([&](uint64_t v) {
            if (i < m_split) {
                m_front_ranks.set(i, std::lower_bound(front.begin(), front.end(), v) - front.begin());
            } else {
                m_back_ranks.set(i - m_split,
                                 std::lower_bound(back.begin(), back.end(), v) - back.begin());
            }
            ++i;
        });
    }

    uint64_t access(uint64_t i) const {
        if (i < m_split) return m_front_dict.access(m_front_ranks.access(i));
        return m_back_dict.access(m_back_ranks.access(i - m_split));
    }

    uint64_t size() const { return m_front_ranks.size() + m_back_ranks.size(); }
    uint64_t split() const { return m_split; }
    compact_bit_array const& front_dictionary() const { return m_front_dict; }
    compact_bit_array const& back_dictionary() const { return m_back_dict; }
    compact_bit_array const& front_ranks() const { return m_front_ranks; }
    compact_bit_array const& back_ranks() const { return m_back_ranks; }

    uint64_t num_bits() const {
        return m_front_dict.num_bits() + m_back_dict.num_bits() + m_front_ranks.num_bits() +
               m_back_ranks.num_bits();
    }

    template <typename Sink>
    void write(Sink& out) const {
        out.put_u8(uint8_t(encoder_tag::dictionary_dd));
        out.put_u64(m_split);
        out.pad8();
        m_front_dict.write(out);
        m_front_ranks.write(out);
        m_back_dict.write(out);
        m_back_ranks.write(out);
    }

    static front_back_dictionary read(byte_reader& in);

    friend bool operator==(front_back_dictionary const&, front_back_dictionary const&) = default;

private:
    uint64_t m_split = 0;
    compact_bit_array m_front_dict;
    compact_bit_array m_front_ranks{0, 1};
    compact_bit_array m_back_dict;
    compact_bit_array m_back_ranks{0, 1};
};

/// A pilots table in one of the three supported encodings.
class encoded_pilots {
public:
    encoded_pilots() : m_rep(partitioned_compact{}) {}

    template <typename Source>
    static encoded_pilots encode(encoder_tag tag, Source const& src) {
        encoded_pilots e;
        switch (tag) {
            case encoder_tag::dictionary_dd: {
                front_back_dictionary d;
                d.encode(src);
                e.m_rep = std::move(d);
                break;
            }
            case encoder_tag::partitioned_compact: {
                partitioned_compact p;
                p.encode(src);
                e.m_rep = std::move(p);
                break;
            }
            case encoder_tag::elias_fano: {
                pilots_elias_fano p;
                p.encode(src);
                e.m_rep = std::move(p);
                break;
            }
            default: throw std::invalid_argument("unknown encoder tag");
        }
        return e;
    }

    encoder_tag tag() const {
        switch (m_rep.index()) {
            case 0: return encoder_tag::dictionary_dd;
            case 1: return encoder_tag::partitioned_compact;
            default: return encoder_tag::elias_fano;
        }
    }

    uint64_t access(uint64_t i) const {
        return std::visit([i](auto const& e) { return e.access(i); }, m_rep);
    }

    uint64_t size() const {
        return std::visit([](auto const& e) { return e.size(); }, m_rep);
    }

    template <typename F>
    decltype(auto) visit(F&& f) const {
        return std::visit(std::forward<F>(f), m_rep);
    }

    template <typename Sink>
    void write(Sink& out) const {
        std::visit([&](auto const& e) { e.write(out); }, m_rep);
    }

    /// Reads an encoding whose tag must equal `expected`.
    static encoded_pilots read(byte_reader& in, encoder_tag expected);

    friend bool operator==(encoded_pilots const&, encoded_pilots const&) = default;

private:
    std::variant<front_back_dictionary, partitioned_compact, pilots_elias_fano> m_rep;
};

}  // namespace pthash
