#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "build_core.hpp"
#include "encoders.hpp"
#include "hashing.hpp"

namespace pthash {

constexpr uint8_t mphf_magic[8] = {'P', 'T', 'H', 'A', 'S', 'H', 'M', 'F'};
constexpr uint8_t mphf_format_version = 1;
constexpr uint64_t mphf_header_bytes = 8 + 3 + 6 * 8;

inline uint8_t hash_version_byte(pilot_mixer mixer) {
    return uint8_t(digest_murmur3_128 << 4) | uint8_t(mixer);
}

/// Decodes a hash version byte; throws version_mismatch_error on unknown values.
pilot_mixer mixer_from_version_byte(uint8_t v);

/*
    Minimal perfect hash function:
        kh = hash_key(x, seed), i = bucket_of(kh.bucket_hash),
        p = (kh.position_hash ^ hash_pilot(P[i])) mod n',
        f(x) = p if p < n, else free[p - n].
*/
class mphf {
public:
    mphf() = default;

    mphf(uint64_t seed, uint64_t num_keys, uint64_t table_size, uint64_t num_buckets,
         pilot_mixer mixer, encoded_pilots pilots, elias_fano free_slots);

    uint64_t operator()(std::string_view key) const { return lookup(key); }

    uint64_t lookup(std::string_view key) const {
        if (m_num_keys == 0) return 0;
        return position(hash_key(key, m_seed));
    }

    /// Evaluation from a precomputed digest (same seed).
    uint64_t position(key_hash const& kh) const {
        const uint64_t bucket = m_mapper.bucket_of(kh.bucket_hash);
        const uint64_t pilot = m_pilots.access(bucket);
        const uint64_t p = (kh.position_hash ^ hash_pilot(pilot, m_mixer)) % m_table_size;
        if (p < m_num_keys) return p;
        return m_free_slots.access(p - m_num_keys);
    }

    uint64_t seed() const { return m_seed; }
    uint64_t num_keys() const { return m_num_keys; }
    uint64_t table_size() const { return m_table_size; }
    uint64_t num_buckets() const { return m_num_buckets; }
    pilot_mixer mixer() const { return m_mixer; }
    encoder_tag encoder() const { return m_pilots.tag(); }
    bucket_mapper const& mapper() const { return m_mapper; }
    encoded_pilots const& pilots() const { return m_pilots; }
    elias_fano const& free_slots() const { return m_free_slots; }

    /// Full serialized form: header followed by the payload.
    template <typename Sink>
    void write(Sink& out) const {
        out.put_raw(mphf_magic, 8);
        out.put_u8(mphf_format_version);
        out.put_u8(hash_version_byte(m_mixer));
        out.put_u8(uint8_t(encoder()));
        out.put_u64(m_seed);
        out.put_u64(m_num_keys);
        out.put_u64(m_table_size);
        out.put_u64(m_num_buckets);
        out.put_u64(m_mapper.p1());
        out.put_u64(m_mapper.p2());
        write_payload(out);
    }

    /// Encoded pilots followed by the encoded free array.
    template <typename Sink>
    void write_payload(Sink& out) const {
        m_pilots.write(out);
        m_free_slots.write(out);
    }

    std::vector<uint8_t> serialize() const;
    static mphf deserialize(std::span<const uint8_t> bytes);
    static mphf read(byte_reader& in);

    /// Reads a payload given the parameters stored elsewhere (HEM partitions).
    static mphf read_payload(byte_reader& in, uint64_t seed, uint64_t num_keys,
                             uint64_t table_size, uint64_t num_buckets, pilot_mixer mixer,
                             encoder_tag encoder);

    uint64_t serialized_bytes() const;

    /// Serialized bits excluding the fixed header, per key.
    double bits_per_key() const;

    friend bool operator==(mphf const& a, mphf const& b) { return a.serialize() == b.serialize(); }

private:
    void check_consistency() const;

    uint64_t m_seed = 0;
    uint64_t m_num_keys = 0;
    uint64_t m_table_size = 0;
    uint64_t m_num_buckets = 0;
    pilot_mixer m_mixer = pilot_mixer::splitmix64;
    bucket_mapper m_mapper;
    encoded_pilots m_pilots;
    elias_fano m_free_slots;
};

struct build_stats {
    uint64_t seed = 0;            // seed of the successful try
    uint64_t tries = 0;           // 1 + number of reseeds
    uint64_t pilot_attempts = 0;  // candidates tried by the successful search
    double seconds = 0.0;
    // external construction only
    uint64_t map_files = 0;
    uint64_t bucket_flushes = 0;
    uint64_t pilot_files = 0;
};

struct build_result {
    mphf function;
    build_stats stats;
};

/// Pilots table + free array + parameters into a function.
mphf assemble_mphf(uint64_t seed, uint64_t num_keys, uint64_t table_size, uint64_t num_buckets,
                   build_config const& config, std::span<const uint64_t> pilots,
                   taken_bitmap const& taken);

/// Runs `attempt(seed)` with reseeding on duplicate hashes and exhausted searches.
template <typename Attempt>
build_result with_retries(build_config const& config, Attempt&& attempt) {
    auto start = std::chrono::steady_clock::now();
    std::string last_error;
    bool duplicates = false;
    for (uint64_t t = 0; t <= config.retries; ++t) {
        uint64_t seed = seed_for_attempt(config.seed, t);
        try {
            build_result r = attempt(seed);
            r.stats.seed = seed;
            r.stats.tries = t + 1;
            r.stats.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            return r;
        } catch (duplicate_hash_error const& e) {
            last_error = e.what();
            duplicates = true;
        } catch (pilot_search_exhausted const& e) {
            last_error = e.what();
            duplicates = false;
        }
    }
    throw build_failure(last_error, config.retries + 1, duplicates);
}

/// Internal-memory construction: map, merge, search, encode.
template <typename Keys>
build_result build_mphf(Keys const& keys, build_config const& config) {
    config.validate();
    const uint64_t n = keys.size();
    const uint64_t table_size = search_space_size(n, config.alpha);
    const uint64_t num_buckets = n ? config.buckets_for(n) : config.num_buckets;
    if (num_buckets > max_num_buckets) throw std::invalid_argument("too many buckets");

    return with_retries(config, [&](uint64_t seed) {
        build_result r;
        if (n == 0) {
            std::vector<uint64_t> pilots(num_buckets, 0);
            r.function = assemble_mphf(seed, 0, 0, num_buckets, config, pilots, taken_bitmap(0));
            return r;
        }
        bucket_mapper mapper(n, num_buckets);
        bucket_collection buckets;
        {
            auto blocks = map_keys(keys, mapper, seed, config.workers);
            buckets = merge_blocks(blocks);
        }
        search_params params{table_size, config.pilot_search_limit, config.mixer};
        auto found = search_buckets(buckets, num_buckets, params, config.workers);
        r.function = assemble_mphf(seed, n, table_size, num_buckets, config, found.pilots, found.taken);
        r.stats.pilot_attempts = found.attempts;
        return r;
    });
}

}  // namespace pthash
