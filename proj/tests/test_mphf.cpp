#include <doctest.h>

#include <bit>

#include <filesystem>
#include <fstream>
#include <random>

#include "cli.hpp"
#include "pthash/mphf.hpp"

using namespace pthash;

namespace {

template <typename F, typename Keys>
bool is_bijection(F const& f, Keys const& keys) {
    std::vector<bool> hit(keys.size(), false);
    for (uint64_t i = 0; i != keys.size(); ++i) {
        uint64_t v = f.lookup(keys[i]);
        if (v >= keys.size() || hit[v]) return false;
        hit[v] = true;
    }
    return true;
}

uint64_t get_u64(std::vector<uint8_t> const& b, uint64_t at) {
    uint64_t x = 0;
    for (int i = 7; i >= 0; --i) x = (x << 8) | b[at + i];
    return x;
}

const encoder_tag all_encoders[] = {encoder_tag::dictionary_dd, encoder_tag::partitioned_compact,
                                    encoder_tag::elias_fano};

}  // namespace

TEST_CASE("two keys on four slots go through the free array") {
    // find keys whose position hashes land on slots 2 and 3 with pilot 0
    const uint64_t seed = 11;
    std::string k2, k3;
    for (uint64_t i = 0; k2.empty() || k3.empty(); ++i) {
        std::string k = "key" + std::to_string(i);
        uint64_t p = hash_key(k, seed).position_hash % 4;
        if (p == 2 && k2.empty()) k2 = k;
        if (p == 3 && k3.empty()) k3 = k;
    }
    std::vector<uint64_t> pilots{0};
    std::vector<uint64_t> free{0, 1};
    elias_fano ef;
    ef.encode(span_source{free}, 2);
    mphf f(seed, 2, 4, 1, pilot_mixer::identity,
           encoded_pilots::encode(encoder_tag::partitioned_compact, span_source{pilots}), ef);
    CHECK(f.lookup(k2) == 0);
    CHECK(f.lookup(k3) == 1);
}

TEST_CASE("bijective for every encoder and load factor") {
    auto keys = cli::generate_keys(20000, 1);
    for (auto tag : all_encoders) {
        for (double alpha : {0.88, 0.94, 0.99, 1.0}) {
            build_config config;
            config.encoder = tag;
            config.alpha = alpha;
            auto r = build_mphf(keys, config);
            CHECK(r.function.encoder() == tag);
            CHECK(r.function.table_size() == search_space_size(keys.size(), alpha));
            CHECK(is_bijection(r.function, keys));
        }
    }
}

TEST_CASE("alpha = 1 never uses the free array") {
    auto keys = cli::generate_keys(5000, 2);
    build_config config;
    config.alpha = 1.0;
    auto f = build_mphf(keys, config).function;
    CHECK(f.table_size() == f.num_keys());
    CHECK(f.free_slots().size() == 0);
    for (uint64_t i = 0; i != keys.size(); ++i) {
        key_hash kh = hash_key(keys[i], f.seed());
        uint64_t p = (kh.position_hash ^ hash_pilot(f.pilots().access(f.mapper().bucket_of(kh.bucket_hash)))) %
                     f.table_size();
        REQUIRE(p < f.num_keys());
    }
}

TEST_CASE("degenerate sizes") {
    cli::key_set none;
    auto empty = build_mphf(none, build_config{}).function;
    CHECK(empty.num_keys() == 0);
    CHECK(empty.num_buckets() == 0);
    CHECK(empty.lookup("anything") == 0);
    CHECK(mphf::deserialize(empty.serialize()) == empty);
    CHECK(empty.bits_per_key() == 0.0);

    auto one = cli::generate_keys(1, 3);
    auto f = build_mphf(one, build_config{}).function;
    CHECK(f.num_buckets() == 1);
    CHECK(f.lookup(one[0]) == 0);
    CHECK(f.lookup("foreign") == 0);

    auto two = cli::generate_keys(2, 3);
    CHECK(is_bijection(build_mphf(two, build_config{}).function, two));
}

TEST_CASE("identity mixer builds are valid too") {
    auto keys = cli::generate_keys(10000, 4);
    build_config config;
    config.mixer = pilot_mixer::identity;
    auto f = build_mphf(keys, config).function;
    CHECK(f.mixer() == pilot_mixer::identity);
    CHECK(is_bijection(f, keys));
    auto g = mphf::deserialize(f.serialize());
    CHECK(g.mixer() == pilot_mixer::identity);
    CHECK(is_bijection(g, keys));
}

TEST_CASE("foreign keys return values in range") {
    auto keys = cli::generate_keys(3000, 5);
    auto others = cli::generate_keys(3000, 6);
    for (auto tag : all_encoders) {
        build_config config;
        config.encoder = tag;
        auto f = build_mphf(keys, config).function;
        for (uint64_t i = 0; i != others.size(); ++i) REQUIRE(f.lookup(others[i]) < keys.size());
    }
}

TEST_CASE("serialization header layout and round trip") {
    auto keys = cli::generate_keys(1000, 7);
    build_config config;
    config.encoder = encoder_tag::elias_fano;
    auto f = build_mphf(keys, config).function;
    auto bytes = f.serialize();
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "PTHASHMF");
    CHECK(bytes[8] == mphf_format_version);
    CHECK(bytes[9] == 0x11);  // murmur3 digest, splitmix64 mixer
    CHECK(bytes[10] == uint8_t(encoder_tag::elias_fano));
    CHECK(get_u64(bytes, 11) == f.seed());
    CHECK(get_u64(bytes, 19) == 1000);
    CHECK(get_u64(bytes, 27) == f.table_size());
    CHECK(get_u64(bytes, 35) == 703);
    CHECK(get_u64(bytes, 43) == 600);
    CHECK(get_u64(bytes, 51) == 210);
    CHECK(bytes.size() == f.serialized_bytes());
    CHECK(f.bits_per_key() == doctest::Approx(double(8 * (bytes.size() - 59)) / 1000.0));

    auto g = mphf::deserialize(bytes);
    CHECK(g.serialize() == bytes);
    CHECK(is_bijection(g, keys));
}

TEST_CASE("deserialization errors are distinct and never crash") {
    auto keys = cli::generate_keys(500, 8);
    auto bytes = build_mphf(keys, build_config{}).function.serialize();

    std::mt19937_64 rng(9);
    for (int i = 0; i != 100; ++i) {
        std::vector<uint8_t> junk(rng() % 200);
        for (auto& b : junk) b = uint8_t(rng());
        if (junk.size() >= 8) junk[0] = 'X';
        CHECK_THROWS_AS(mphf::deserialize(junk), format_error);
        if (junk.size() >= 8) CHECK_THROWS_AS(mphf::deserialize(junk), bad_magic_error);
    }

    auto bad_format = bytes;
    bad_format[8] = 99;
    CHECK_THROWS_AS(mphf::deserialize(bad_format), version_mismatch_error);
    auto bad_hash = bytes;
    bad_hash[9] = 0x21;
    CHECK_THROWS_AS(mphf::deserialize(bad_hash), version_mismatch_error);
    auto bad_mixer = bytes;
    bad_mixer[9] = 0x17;
    CHECK_THROWS_AS(mphf::deserialize(bad_mixer), version_mismatch_error);

    for (uint64_t cut = 8; cut < bytes.size(); cut += 7) {
        std::vector<uint8_t> part(bytes.begin(), bytes.begin() + cut);
        CHECK_THROWS_AS(mphf::deserialize(part), truncated_stream_error);
    }
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(mphf::deserialize(trailing), format_error);

    // corrupted payloads are rejected or stay in range, never fault
    for (int i = 0; i != 300; ++i) {
        auto corrupt = bytes;
        corrupt[59 + rng() % (corrupt.size() - 59)] ^= uint8_t(1 + rng() % 255);
        try {
            auto g = mphf::deserialize(corrupt);
            for (uint64_t k = 0; k != keys.size(); ++k) REQUIRE(g.lookup(keys[k]) < keys.size());
        } catch (format_error const&) {
        }
    }
}

TEST_CASE("inconsistent parts are rejected") {
    std::vector<uint64_t> pilots{0, 0};
    std::vector<uint64_t> free{0};
    elias_fano ef;
    ef.encode(span_source{free}, 1);
    auto enc = encoded_pilots::encode(encoder_tag::partitioned_compact, span_source{pilots});
    CHECK_THROWS_AS(mphf(1, 2, 3, 3, pilot_mixer::splitmix64, enc, ef), format_error);  // m mismatch
    CHECK_THROWS_AS(mphf(1, 2, 4, 2, pilot_mixer::splitmix64, enc, ef), format_error);  // free size
    std::vector<uint64_t> big{5};
    elias_fano out_of_range;
    out_of_range.encode(span_source{big}, 6);
    CHECK_THROWS_AS(mphf(1, 2, 3, 2, pilot_mixer::splitmix64, enc, out_of_range), format_error);
    CHECK_NOTHROW(mphf(1, 2, 3, 2, pilot_mixer::splitmix64, enc, ef));
}

TEST_CASE("duplicate keys fail after all retries") {
    cli::key_set keys;
    for (auto k : {"a", "b", "c", "b", "d"}) keys.push_back(k);
    build_config config;
    config.retries = 2;
    try {
        build_mphf(keys, config);
        FAIL("expected build_failure");
    } catch (build_failure const& e) {
        CHECK(e.duplicate_keys);
        CHECK(e.attempts == 3);
    }
}

TEST_CASE("an unreachable search limit fails without duplicates") {
    auto keys = cli::generate_keys(2000, 10);
    build_config config;
    config.pilot_search_limit = 1;
    config.retries = 1;
    try {
        build_mphf(keys, config);
        FAIL("expected build_failure");
    } catch (build_failure const& e) {
        CHECK(!e.duplicate_keys);
        CHECK(e.attempts == 2);
    }
}

TEST_CASE("sizes whose table would be a power of two still build") {
    for (uint64_t n : {962, 1925, 3850}) {
        auto keys = cli::generate_keys(n, n);
        build_config config;
        auto r = build_mphf(keys, config);
        CHECK(!std::has_single_bit(r.function.table_size()));
        std::vector<bool> seen(n, false);
        for (uint64_t i = 0; i != n; ++i) {
            uint64_t v = r.function.lookup(keys[i]);
            REQUIRE(v < n);
            REQUIRE(!seen[v]);
            seen[v] = true;
        }
    }
}

TEST_CASE("alpha = 1 on a power-of-two size fails fast instead of searching") {
    auto keys = cli::generate_keys(4096, 3);
    build_config config;
    config.alpha = 1.0;
    CHECK_THROWS_AS(build_mphf(keys, config), build_failure);
}

TEST_CASE("builds are reproducible") {
    auto keys = cli::generate_keys(10000, 12);
    for (auto tag : all_encoders) {
        build_config config;
        config.encoder = tag;
        CHECK(build_mphf(keys, config).function.serialize() == build_mphf(keys, config).function.serialize());
    }
}

TEST_CASE("golden files") {
    // 1000 generated keys with generator seed 42, function seed 42
    auto keys = cli::generate_keys(1000, 42);
    for (auto [tag, name] : {std::pair{encoder_tag::dictionary_dd, "dd"},
                             std::pair{encoder_tag::partitioned_compact, "pc"},
                             std::pair{encoder_tag::elias_fano, "ef"}}) {
        CAPTURE(name);
        auto path = std::filesystem::path(TEST_DATA_DIR) / (std::string("golden_") + name + ".bin");
        REQUIRE(std::filesystem::exists(path));
        auto golden = cli::read_file(path);
        build_config config;
        config.seed = 42;
        config.encoder = tag;
        auto f = build_mphf(keys, config).function;
        CHECK(f.serialize() == golden);
        auto g = mphf::deserialize(golden);
        CHECK(is_bijection(g, keys));
    }
}
