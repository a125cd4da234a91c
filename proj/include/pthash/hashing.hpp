#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <string_view>

namespace pthash {

/// Version byte of the key digest (MurmurHash3 x64/128 with a 64-bit seed).
constexpr uint8_t digest_murmur3_128 = 1;

/// Mixers applied to pilot values before they are XORed into a position hash.
enum class pilot_mixer : uint8_t {
    identity = 0,  // test mode: hash_pilot(k) = k
    splitmix64 = 1,
};

struct key_hash {
    uint64_t bucket_hash;    // selects the bucket
    uint64_t position_hash;  // selects the slot, together with the pilot

    friend bool operator==(key_hash const&, key_hash const&) = default;
};

/// 128-bit MurmurHash3 (x64 variant); both lanes start from the 64-bit seed.
key_hash murmur3_128(const void* data, size_t len, uint64_t seed);

inline key_hash hash_key(std::string_view key, uint64_t seed) {
    return murmur3_128(key.data(), key.size(), seed);
}

/// SplitMix64 output function: a bijection on 64-bit integers.
constexpr uint64_t mix64(uint64_t x) {
    uint64_t z = x + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr uint64_t hash_pilot(uint64_t pilot, pilot_mixer mixer = pilot_mixer::splitmix64) {
    return mixer == pilot_mixer::identity ? pilot : mix64(pilot);
}

/// Value used to pick a HEM partition; independent of both halves taken alone.
constexpr uint64_t partition_hash(key_hash const& kh) {
    return mix64(kh.bucket_hash ^ ((kh.position_hash << 29) | (kh.position_hash >> 35)) ^
                 0x5851f42d4c957f2dULL);
}

/// Number of buckets for n keys: ceil(c * n / log2(n)); one bucket when n <= 1.
uint64_t num_buckets_for(uint64_t n, double c);

/// Skewed key-to-bucket assignment: about 60% of the keys go to the first 30% of buckets.
class bucket_mapper {
public:
    bucket_mapper() : m_num_keys(0), m_num_buckets(0), m_p1(0), m_p2(0) {}

    /// Thresholds p1 = ceil(0.6 n) and p2 = clamp(floor(0.3 m), 1, m - 1).
    bucket_mapper(uint64_t num_keys, uint64_t num_buckets);

    /// Restores a mapper from serialized thresholds (validated).
    static bucket_mapper from_parameters(uint64_t num_keys, uint64_t num_buckets, uint64_t p1,
                                         uint64_t p2);

    uint64_t bucket_of(uint64_t bucket_hash) const {
        assert(m_num_keys > 0);
        if ((bucket_hash % m_num_keys) < m_p1) return bucket_hash % m_p2;
        return m_p2 + bucket_hash % (m_num_buckets - m_p2);
    }

    uint64_t num_keys() const { return m_num_keys; }
    uint64_t num_buckets() const { return m_num_buckets; }
    uint64_t p1() const { return m_p1; }
    uint64_t p2() const { return m_p2; }

private:
    uint64_t m_num_keys;
    uint64_t m_num_buckets;
    uint64_t m_p1;
    uint64_t m_p2;
};

}  // namespace pthash
