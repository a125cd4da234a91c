#include "pthash/mphf.hpp"

#include <algorithm>
#include <cstring>

namespace pthash {

pilot_mixer mixer_from_version_byte(uint8_t v) {
    if ((v >> 4) != digest_murmur3_128) {
        throw version_mismatch_error("unknown key digest " + std::to_string(v >> 4));
    }
    switch (v & 15) {
        case uint8_t(pilot_mixer::identity): return pilot_mixer::identity;
        case uint8_t(pilot_mixer::splitmix64): return pilot_mixer::splitmix64;
    }
    throw version_mismatch_error("unknown pilot mixer " + std::to_string(v & 15));
}

mphf::mphf(uint64_t seed, uint64_t num_keys, uint64_t table_size, uint64_t num_buckets,
           pilot_mixer mixer, encoded_pilots pilots, elias_fano free_slots)
    : m_seed(seed)
    , m_num_keys(num_keys)
    , m_table_size(table_size)
    , m_num_buckets(num_buckets)
    , m_mixer(mixer)
    , m_pilots(std::move(pilots))
    , m_free_slots(std::move(free_slots)) {
    if (num_keys) m_mapper = bucket_mapper(num_keys, num_buckets);
    check_consistency();
}

void mphf::check_consistency() const {
    if (m_pilots.size() != m_num_buckets) throw format_error("pilots table size != bucket count");
    if (m_num_keys == 0) {
        if (m_table_size != 0 || m_free_slots.size() != 0) throw format_error("empty function with slots");
        return;
    }
    if (m_num_buckets == 0) throw format_error("non-empty function without buckets");
    if (m_table_size < m_num_keys) throw format_error("search space smaller than key count");
    if (m_free_slots.size() != m_table_size - m_num_keys) {
        throw format_error("free array size != overflow slot count");
    }
    for (uint64_t i = 0; i != m_free_slots.size(); ++i) {
        if (m_free_slots.access(i) >= m_num_keys) throw format_error("free array value out of range");
    }
}

mphf assemble_mphf(uint64_t seed, uint64_t num_keys, uint64_t table_size, uint64_t num_buckets,
                   build_config const& config, std::span<const uint64_t> pilots,
                   taken_bitmap const& taken) {
    auto encoded = encoded_pilots::encode(config.encoder, span_source{pilots});
    elias_fano free_slots;
    if (num_keys) free_slots = encode_free_array(taken, num_keys);
    return mphf(seed, num_keys, table_size, num_buckets, config.mixer, std::move(encoded),
                std::move(free_slots));
}

std::vector<uint8_t> mphf::serialize() const {
    byte_writer out;
    out.bytes.reserve(serialized_bytes());
    write(out);
    return std::move(out.bytes);
}

uint64_t mphf::serialized_bytes() const {
    byte_counter out;
    write(out);
    return out.size;
}

double mphf::bits_per_key() const {
    if (m_num_keys == 0) return 0.0;
    return double(8 * (serialized_bytes() - mphf_header_bytes)) / double(m_num_keys);
}

mphf mphf::deserialize(std::span<const uint8_t> bytes) {
    byte_reader in(bytes);
    mphf f = read(in);
    if (in.remaining() != 0) throw format_error("trailing bytes after function");
    return f;
}

mphf mphf::read(byte_reader& in) {
    uint8_t magic[8];
    if (in.remaining() < 8) throw truncated_stream_error();
    in.get_raw(magic, 8);
    if (std::memcmp(magic, mphf_magic, 8) != 0) throw bad_magic_error();
    uint8_t format = in.get_u8();
    if (format != mphf_format_version) {
        throw version_mismatch_error("format " + std::to_string(format));
    }
    pilot_mixer mixer = mixer_from_version_byte(in.get_u8());
    uint8_t tag = in.get_u8();
    if (tag < 1 || tag > 3) throw format_error("unknown encoder tag " + std::to_string(tag));
    uint64_t seed = in.get_u64();
    uint64_t n = in.get_u64();
    uint64_t table_size = in.get_u64();
    uint64_t num_buckets = in.get_u64();
    uint64_t p1 = in.get_u64();
    uint64_t p2 = in.get_u64();
    mphf f = read_payload(in, seed, n, table_size, num_buckets, mixer, encoder_tag(tag));
    if (n && (f.m_mapper.p1() != p1 || f.m_mapper.p2() != p2)) {
        throw format_error("bucket thresholds do not match key and bucket counts");
    }
    return f;
}

mphf mphf::read_payload(byte_reader& in, uint64_t seed, uint64_t num_keys, uint64_t table_size,
                        uint64_t num_buckets, pilot_mixer mixer, encoder_tag encoder) {
    auto pilots = encoded_pilots::read(in, encoder);
    auto free_slots = elias_fano::read(in);
    if (num_keys > table_size || (num_keys && num_buckets == 0) || num_buckets > max_num_buckets) {
        throw format_error("inconsistent function parameters");
    }
    return mphf(seed, num_keys, table_size, num_buckets, mixer, std::move(pilots),
                std::move(free_slots));
}

}  // namespace pthash
