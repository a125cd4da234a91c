#include "pthash/hashing.hpp"

#include <cstring>
#include <stdexcept>

namespace pthash {

namespace {

inline uint64_t rotl64(uint64_t x, int r) { return (x << r) | (x >> (64 - r)); }

inline uint64_t fmix64(uint64_t k) {
    k ^= k >> 33;
    k *= 0xff51afd7ed558ccdULL;
    k ^= k >> 33;
    k *= 0xc4ceb9fe1a85ec53ULL;
    k ^= k >> 33;
    return k;
}

inline uint64_t load_le64(const uint8_t* p) {
    uint64_t x;
    std::memcpy(&x, p, 8);
#if __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
    x = __builtin_bswap64(x);
#endif
    return x;
}

}  // namespace

key_hash murmur3_128(const void* data, size_t len, uint64_t seed) {
    auto bytes = static_cast<const uint8_t*>(data);
    const size_t nblocks = len / 16;
    constexpr uint64_t c1 = 0x87c37b91114253d5ULL;
    constexpr uint64_t c2 = 0x4cf5ad432745937fULL;

    uint64_t h1 = seed;
    uint64_t h2 = seed;

    for (size_t i = 0; i != nblocks; ++i) {
        uint64_t k1 = load_le64(bytes + 16 * i);
        uint64_t k2 = load_le64(bytes + 16 * i + 8);

        k1 *= c1;
        k1 = rotl64(k1, 31);
        k1 *= c2;
        h1 ^= k1;
        h1 = rotl64(h1, 27);
        h1 += h2;
        h1 = h1 * 5 + 0x52dce729;

        k2 *= c2;
        k2 = rotl64(k2, 33);
        k2 *= c1;
        h2 ^= k2;
        h2 = rotl64(h2, 31);
        h2 += h1;
        h2 = h2 * 5 + 0x38495ab5;
    }

    const uint8_t* tail = bytes + 16 * nblocks;
    uint64_t k1 = 0;
    uint64_t k2 = 0;
    switch (len & 15) {
        case 15: k2 ^= uint64_t(tail[14]) << 48; [[fallthrough]];
        case 14: k2 ^= uint64_t(tail[13]) << 40; [[fallthrough]];
        case 13: k2 ^= uint64_t(tail[12]) << 32; [[fallthrough]];
        case 12: k2 ^= uint64_t(tail[11]) << 24; [[fallthrough]];
        case 11: k2 ^= uint64_t(tail[10]) << 16; [[fallthrough]];
        case 10: k2 ^= uint64_t(tail[9]) << 8; [[fallthrough]];
        case 9:
            k2 ^= uint64_t(tail[8]);
            k2 *= c2;
            k2 = rotl64(k2, 33);
            k2 *= c1;
            h2 ^= k2;
            [[fallthrough]];
        case 8: k1 ^= uint64_t(tail[7]) << 56; [[fallthrough]];
        case 7: k1 ^= uint64_t(tail[6]) << 48; [[fallthrough]];
        case 6: k1 ^= uint64_t(tail[5]) << 40; [[fallthrough]];
        case 5: k1 ^= uint64_t(tail[4]) << 32; [[fallthrough]];
        case 4: k1 ^= uint64_t(tail[3]) << 24; [[fallthrough]];
        case 3: k1 ^= uint64_t(tail[2]) << 16; [[fallthrough]];
        case 2: k1 ^= uint64_t(tail[1]) << 8; [[fallthrough]];
        case 1:
            k1 ^= uint64_t(tail[0]);
            k1 *= c1;
            k1 = rotl64(k1, 31);
            k1 *= c2;
            h1 ^= k1;
    }

    h1 ^= len;
    h2 ^= len;
    h1 += h2;
    h2 += h1;
    h1 = fmix64(h1);
    h2 = fmix64(h2);
    h1 += h2;
    h2 += h1;

    return {h1, h2};
}

uint64_t num_buckets_for(uint64_t n, double c) {
    if (n <= 1) return n;
    return uint64_t(std::ceil(c * double(n) / std::log2(double(n))));
}

bucket_mapper::bucket_mapper(uint64_t num_keys, uint64_t num_buckets)
    : m_num_keys(num_keys), m_num_buckets(num_buckets) {
    if (num_keys == 0 || num_buckets == 0) {
        throw std::invalid_argument("bucket_mapper needs at least one key and one bucket");
    }
    m_p1 = uint64_t(std::ceil(0.6 * double(num_keys)));
    if (m_p1 == 0) m_p1 = 1;
    if (num_buckets == 1) {
        // every key takes the first branch and lands in bucket 0
        m_p1 = num_keys;
        m_p2 = 1;
        return;
    }
    uint64_t p2 = uint64_t(std::floor(0.3 * double(num_buckets)));
    if (p2 < 1) p2 = 1;
    if (p2 > num_buckets - 1) p2 = num_buckets - 1;
    m_p2 = p2;
}

bucket_mapper bucket_mapper::from_parameters(uint64_t num_keys, uint64_t num_buckets,
                                             uint64_t p1, uint64_t p2) {
    bucket_mapper mapper(num_keys, num_buckets);
    if (mapper.p1() != p1 || mapper.p2() != p2) {
        throw std::invalid_argument("bucket thresholds do not match key/bucket counts");
    }
    return mapper;
}

}  // namespace pthash
