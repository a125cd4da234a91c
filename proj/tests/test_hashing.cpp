#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "pthash/hashing.hpp"

using namespace pthash;

TEST_CASE("murmur3 x64/128 reference vectors") {
    struct vec {
        std::string key;
        uint64_t seed, h1, h2;
    };
    std::string bytes37;
    for (int i = 0; i != 37; ++i) bytes37.push_back(char(i));
    // reference values from an independent implementation; the first is the widely published one
    std::vector<vec> vectors{
        {"The quick brown fox jumps over the lazy dog", 0, 0xe34bbc7bbc071b6cULL, 0x7a433ca9c49a9347ULL},
        {"", 0, 0, 0},
        {"", 1, 0x4610abe56eff5cb5ULL, 0x51622daa78f83583ULL},
        {"hello", 0, 0xcbd8a7b341bd9b02ULL, 0x5b1e906a48ae1d19ULL},
        {"hello", 42, 0xc4b8b3c960af6f08ULL, 0x2334b875b0efbc7aULL},
        {bytes37, 7, 0xdfa273e707b3b1a6ULL, 0xa00e3d0be380f002ULL},
        {"0123456789abcdef", 0xdeadbeefcafebabeULL, 0x52902373874a196bULL, 0x7e91356222927ab6ULL},
        {std::string(31, 'x'), uint64_t(1) << 63, 0x85be2bfa3bbfaa57ULL, 0x2e2e01f955619314ULL},
    };
    for (auto const& v : vectors) {
        key_hash kh = hash_key(v.key, v.seed);
        CHECK(kh.bucket_hash == v.h1);
        CHECK(kh.position_hash == v.h2);
    }
}

TEST_CASE("hash_key is deterministic and seed dependent") {
    std::mt19937_64 rng(1);
    uint64_t differ = 0;
    const uint64_t trials = 10000;
    for (uint64_t i = 0; i != trials; ++i) {
        std::string key(1 + rng() % 40, '\0');
        for (auto& ch : key) ch = char(rng());
        uint64_t seed = rng();
        CHECK(hash_key(key, seed) == hash_key(key, seed));
        differ += !(hash_key(key, seed) == hash_key(key, seed + 1));
    }
    CHECK(double(differ) >= 0.999 * double(trials));
}

TEST_CASE("no digest collisions over a million random 64-byte keys") {
    std::mt19937_64 rng(2);
    std::vector<std::pair<uint64_t, uint64_t>> digests;
    digests.reserve(1000000);
    uint64_t key[8];
    for (uint64_t i = 0; i != 1000000; ++i) {
        for (auto& w : key) w = rng();
        key_hash kh = hash_key(std::string_view(reinterpret_cast<const char*>(key), 64), 3);
        digests.emplace_back(kh.bucket_hash, kh.position_hash);
    }
    std::sort(digests.begin(), digests.end());
    CHECK(std::adjacent_find(digests.begin(), digests.end()) == digests.end());
}

TEST_CASE("pilot mixer") {
    CHECK(hash_pilot(7, pilot_mixer::identity) == 7);
    CHECK(hash_pilot(0) != 0);
    std::unordered_set<uint64_t> seen;
    for (uint64_t k = 0; k <= (1 << 16); ++k) seen.insert(hash_pilot(k));
    CHECK(seen.size() == (1 << 16) + 1);
    // splitmix64 first output for state 0
    CHECK(mix64(0) == 0xe220a8397b1dcdafULL);
}

TEST_CASE("bucket mapper thresholds and examples") {
    bucket_mapper mapper(100, 10);
    CHECK(mapper.p1() == 60);
    CHECK(mapper.p2() == 3);
    CHECK(mapper.bucket_of(0) == 0);
    CHECK(mapper.bucket_of(123) == 0);
    CHECK(mapper.bucket_of(777) == 3);

    CHECK(bucket_mapper(1, 1).p2() == 1);
    CHECK(bucket_mapper(10, 2).p2() == 1);
    CHECK(bucket_mapper(10, 3).p2() == 1);
    CHECK(bucket_mapper(10, 100).p2() == 30);
    CHECK(bucket_mapper(7, 22).p1() == 5);
    CHECK_THROWS_AS(bucket_mapper(0, 10), std::invalid_argument);
    CHECK_THROWS_AS(bucket_mapper(10, 0), std::invalid_argument);
}

TEST_CASE("bucket_of stays in range") {
    std::mt19937_64 rng(4);
    for (uint64_t m : {1, 2, 3, 17, 703}) {
        bucket_mapper mapper(1000, m);
        for (int i = 0; i != 10000; ++i) REQUIRE(mapper.bucket_of(rng()) < m);
    }
}

TEST_CASE("number of buckets") {
    CHECK(num_buckets_for(1000, 7.0) == 703);
    CHECK(num_buckets_for(10, 7.0) == 22);
    CHECK(num_buckets_for(1, 7.0) == 1);
    CHECK(num_buckets_for(0, 7.0) == 0);
    CHECK(num_buckets_for(2, 7.0) == 14);
}

TEST_CASE("skewed assignment puts 60% of the keys in the first 30% of buckets") {
    const uint64_t n = 1000000;
    bucket_mapper mapper(n, num_buckets_for(n, 7.0));
    std::mt19937_64 rng(5);
    uint64_t dense = 0;
    for (uint64_t i = 0; i != n; ++i) dense += mapper.bucket_of(rng()) < mapper.p2();
    CHECK(std::abs(double(dense) / double(n) - 0.6) <= 0.01);
}

TEST_CASE("partition hash is not a function of either half alone") {
    key_hash a{1, 2}, b{1, 3}, c{2, 2};
    CHECK(partition_hash(a) != partition_hash(b));
    CHECK(partition_hash(a) != partition_hash(c));
}
