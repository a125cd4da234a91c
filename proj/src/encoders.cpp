#include "pthash/encoders.hpp"

#include <string>

namespace pthash {

namespace {

void expect_tag(byte_reader& in, encoder_tag tag) {
    uint8_t got = in.get_u8();
    if (got != uint8_t(tag)) {
        throw format_error("expected encoder tag " + std::to_string(int(tag)) + ", found " +
                           std::to_string(int(got)));
    }
}

/// Position of the k-th (0-based) set bit of x; x must have more than k set bits.
inline uint64_t select_in_word(uint64_t x, uint64_t k) {
    for (uint64_t j = 0; j != k; ++j) x &= x - 1;
    return std::countr_zero(x);
}

}  // namespace

const char* encoder_name(encoder_tag tag) {
    switch (tag) {
        case encoder_tag::dictionary_dd: return "dd";
        case encoder_tag::partitioned_compact: return "pc";
        case encoder_tag::elias_fano: return "ef";
    }
    return "?";
}

encoder_tag encoder_from_name(std::string_view name) {
    if (name == "dd") return encoder_tag::dictionary_dd;
    if (name == "pc") return encoder_tag::partitioned_compact;
    if (name == "ef") return encoder_tag::elias_fano;
    throw std::invalid_argument("unknown encoder '" + std::string(name) + "'");
}

partitioned_compact partitioned_compact::read(byte_reader& in) {
    expect_tag(in, encoder_tag::partitioned_compact);
    partitioned_compact p;
    p.m_size = in.get_u64();
    uint64_t block_size = in.get_u64();
    if (block_size == 0 || !std::has_single_bit(block_size)) {
        throw format_error("invalid PC block size");
    }
    p.m_log_block_size = std::countr_zero(block_size);
    uint64_t num_blocks = (p.m_size + block_size - 1) / block_size;
    if (num_blocks + 1 > in.remaining() / 4) throw truncated_stream_error();
    p.m_widths.resize(num_blocks + 1);
    for (auto& w : p.m_widths) w = in.get_u32();
    if (p.m_widths[0] != 0) throw format_error("PC width table must start at zero");
    for (uint64_t b = 0; b != num_blocks; ++b) {
        uint64_t w = p.m_widths[b + 1] - uint64_t(p.m_widths[b]);
        if (p.m_widths[b + 1] < p.m_widths[b] || w < 1 || w > 64) {
            throw format_error("PC width table is corrupt");
        }
    }
    in.pad8();
    p.m_payload = in.get_words(bits::words_for(p.payload_bits()));
    p.m_payload.push_back(0);
    return p;
}

elias_fano elias_fano::read(byte_reader& in) {
    expect_tag(in, encoder_tag::elias_fano);
    elias_fano ef;
    ef.m_size = in.get_u64();
    ef.m_universe = in.get_u64();
    ef.m_low_width = in.get_u64();
    if (ef.m_low_width > 63) throw format_error("invalid Elias-Fano low width");
    if (ef.m_size > in.remaining() * 8) throw truncated_stream_error();
    in.pad8();
    ef.m_low = in.get_words(bits::words_for(ef.m_size * ef.m_low_width));
    ef.m_low.push_back(0);
    uint64_t high_bits = ef.m_size + (ef.m_universe >> ef.m_low_width) + 1;
    if (high_bits / 8 > in.remaining()) throw truncated_stream_error();
    ef.m_high = in.get_words(bits::words_for(high_bits));
    ef.m_high.push_back(0);
    ef.m_samples = in.get_words((ef.m_size + select_sample_rate - 1) / select_sample_rate);

    // one set bit per element, and samples must point at the sampled ones
    uint64_t ones = 0;
    for (uint64_t block = 0; block != ef.m_high.size(); ++block) {
        for (uint64_t w = ef.m_high[block]; w; w &= w - 1, ++ones) {
            if (ones % select_sample_rate == 0 && ones < ef.m_size &&
                ef.m_samples[ones / select_sample_rate] != (block << 6) + std::countr_zero(w)) {
                throw format_error("Elias-Fano select samples are corrupt");
            }
        }
    }
    if (ones != ef.m_size) throw format_error("Elias-Fano high bitmap is corrupt");
    return ef;
}

uint64_t elias_fano::select(uint64_t i) const {
    uint64_t pos = m_samples[i / select_sample_rate];
    uint64_t k = i % select_sample_rate;
    uint64_t block = pos >> 6;
    uint64_t word = m_high[block] & (~uint64_t(0) << (pos & 63));
    while (true) {
        uint64_t ones = std::popcount(word);
        if (k < ones) return (block << 6) + select_in_word(word, k);
        k -= ones;
        word = m_high[++block];
    }
}

uint64_t elias_fano::next_one(uint64_t pos) const {
    uint64_t block = pos >> 6;
    uint64_t word = m_high[block] & (~uint64_t(0) << (pos & 63));
    while (word == 0) word = m_high[++block];
    return (block << 6) + std::countr_zero(word);
}

front_back_dictionary front_back_dictionary::read(byte_reader& in) {
    expect_tag(in, encoder_tag::dictionary_dd);
    front_back_dictionary d;
    d.m_split = in.get_u64();
    in.pad8();
    d.m_front_dict = compact_bit_array::read(in);
    d.m_front_ranks = compact_bit_array::read(in);
    d.m_back_dict = compact_bit_array::read(in);
    d.m_back_ranks = compact_bit_array::read(in);
    if (d.m_front_ranks.size() != d.m_split) throw format_error("D-D split is inconsistent");
    // ranks must index inside their dictionaries
    for (uint64_t i = 0; i != d.m_front_ranks.size(); ++i) {
        if (d.m_front_ranks.access(i) >= d.m_front_dict.size()) {
            throw format_error("D-D front rank out of range");
        }
    }
    for (uint64_t i = 0; i != d.m_back_ranks.size(); ++i) {
        if (d.m_back_ranks.access(i) >= d.m_back_dict.size()) {
            throw format_error("D-D back rank out of range");
        }
    }
    return d;
}

encoded_pilots encoded_pilots::read(byte_reader& in, encoder_tag expected) {
    encoded_pilots e;
    switch (expected) {
        case encoder_tag::dictionary_dd: e.m_rep = front_back_dictionary::read(in); break;
        case encoder_tag::partitioned_compact: e.m_rep = partitioned_compact::read(in); break;
        case encoder_tag::elias_fano: e.m_rep = pilots_elias_fano::read(in); break;
        default: throw format_error("unknown encoder tag");
    }
    return e;
}

}  // namespace pthash
