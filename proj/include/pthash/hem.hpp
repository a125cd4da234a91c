#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <span>
#include <string_view>
#include <thread>
#include <vector>

#include "mphf.hpp"

namespace pthash {

constexpr uint8_t hem_magic[8] = {'P', 'T', 'H', 'A', 'S', 'H', 'H', 'M'};
constexpr uint8_t hem_tag = 'H';
constexpr uint64_t hem_header_bytes = 8 + 4 + 4 * 8;

inline uint64_t partition_of(key_hash const& kh, uint64_t num_partitions) {
    return partition_hash(kh) % num_partitions;
}

/// Seed of partition j: mixes the global seed with the partition index.
inline uint64_t partition_seed(uint64_t seed, uint64_t partition) {
    return mix64(seed ^ mix64(partition + 1));
}

/// Buckets of partition j: floor(m / r), plus one for the first m mod r partitions.
inline uint64_t partition_buckets(uint64_t num_buckets, uint64_t num_partitions, uint64_t j) {
    return num_buckets / num_partitions + (j < num_buckets % num_partitions ? 1 : 0);
}

/// Key indexes per partition, in input order.
template <typename Keys>
std::vector<std::vector<uint64_t>> partition_keys(Keys const& keys, uint64_t num_partitions,
                                                  uint64_t seed) {
    if (num_partitions == 0) throw std::invalid_argument("at least one partition is required");
    std::vector<std::vector<uint64_t>> parts(num_partitions);
    for (uint64_t i = 0; i != keys.size(); ++i) {
        parts[partition_of(hash_key(std::string_view(keys[i]), seed), num_partitions)].push_back(i);
    }
    return parts;
}

/// Number of partitions for an average partition size.
inline uint64_t partitions_for(uint64_t num_keys, uint64_t avg_partition_size) {
    if (avg_partition_size == 0) throw std::invalid_argument("partition size must be positive");
    return std::max<uint64_t>(1, (num_keys + avg_partition_size / 2) / avg_partition_size);
}

/// Partitioned function: f(x) = offsets[j] + f_j(x) for the partition j of x.
class partitioned_mphf {
public:
    partitioned_mphf() = default;
    partitioned_mphf(uint64_t seed, uint64_t num_keys, uint64_t num_buckets,
                     std::vector<uint64_t> offsets, std::vector<mphf> partitions);

    uint64_t operator()(std::string_view key) const { return lookup(key); }

    uint64_t lookup(std::string_view key) const {
        if (m_num_keys == 0) return 0;
        const uint64_t j = partition_of(hash_key(key, m_seed), m_partitions.size());
        const uint64_t v = m_offsets[j] + m_partitions[j].lookup(key);
        return std::min(v, m_num_keys - 1);  // only foreign keys can reach an empty tail partition
    }

    uint64_t seed() const { return m_seed; }
    uint64_t num_keys() const { return m_num_keys; }
    uint64_t num_buckets() const { return m_num_buckets; }
    uint64_t num_partitions() const { return m_partitions.size(); }
    std::span<const uint64_t> offsets() const { return m_offsets; }
    std::span<const mphf> partitions() const { return m_partitions; }
    encoder_tag encoder() const { return m_partitions.front().encoder(); }

    template <typename Sink>
    void write(Sink& out) const {
        out.put_raw(hem_magic, 8);
        out.put_u8(mphf_format_version);
        out.put_u8(hash_version_byte(m_partitions.front().mixer()));
        out.put_u8(hem_tag);
        out.put_u8(uint8_t(encoder()));
        out.put_u64(m_seed);
        out.put_u64(m_num_keys);
        out.put_u64(m_num_buckets);
        out.put_u64(m_partitions.size());
        for (uint64_t o : m_offsets) out.put_u64(o);
        for (auto const& p : m_partitions) {
            out.put_u64(p.seed());
            out.put_u64(p.num_keys());
            out.put_u64(p.table_size());
            out.put_u64(p.num_buckets());
            p.write_payload(out);
        }
    }

    std::vector<uint8_t> serialize() const;
    static partitioned_mphf deserialize(std::span<const uint8_t> bytes);
    static partitioned_mphf read(byte_reader& in);
    uint64_t serialized_bytes() const;
    double bits_per_key() const;

private:
    uint64_t m_seed = 0;
    uint64_t m_num_keys = 0;
    uint64_t m_num_buckets = 0;
    std::vector<uint64_t> m_offsets{0};
    std::vector<mphf> m_partitions;
};

struct hem_build_result {
    partitioned_mphf function;
    build_stats stats;  // pilot_attempts summed over partitions; seed is the global seed
};

template <typename Keys>
struct indexed_keys {
    Keys const& keys;
    std::span<const uint64_t> indexes;
    uint64_t size() const { return indexes.size(); }
    std::string_view operator[](uint64_t i) const { return std::string_view(keys[indexes[i]]); }
};

/// Builds one function per partition (partitions run concurrently on
/// config.workers workers) with exactly m buckets in total.
template <typename Keys>
hem_build_result build_partitioned(Keys const& keys, build_config const& config,
                                   uint64_t num_partitions) {
    config.validate();
    auto start = std::chrono::steady_clock::now();
    const uint64_t n = keys.size();
    const uint64_t m = n ? config.buckets_for(n) : 0;
    if (num_partitions == 0) throw std::invalid_argument("at least one partition is required");
    if (n && num_partitions > m) throw std::invalid_argument("more partitions than buckets");

    auto parts = partition_keys(keys, num_partitions, config.seed);
    std::vector<mphf> functions(num_partitions);
    std::vector<build_stats> stats(num_partitions);
    std::vector<std::exception_ptr> errors(num_partitions);

    std::atomic<uint64_t> next{0};
    auto work = [&] {
        for (uint64_t j; (j = next.fetch_add(1)) < num_partitions;) {
            build_config local = config;
            local.seed = partition_seed(config.seed, j);
            local.num_buckets = partition_buckets(m, num_partitions, j);
            local.workers = 1;
            try {
                auto r = build_mphf(indexed_keys<Keys>{keys, parts[j]}, local);
                functions[j] = std::move(r.function);
                stats[j] = r.stats;
            } catch (...) {
                errors[j] = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> threads;
        for (uint64_t w = 1; w < std::min(config.workers, num_partitions); ++w) threads.emplace_back(work);
        work();
    }
    for (uint64_t j = 0; j != num_partitions; ++j) {
        if (!errors[j]) continue;
        try {
            std::rethrow_exception(errors[j]);
        } catch (build_failure const& e) {
            throw build_failure("partition " + std::to_string(j) + ": " + e.cause, e.attempts,
                                e.duplicate_keys);
        }
    }

    std::vector<uint64_t> offsets(num_partitions + 1, 0);
    for (uint64_t j = 0; j != num_partitions; ++j) offsets[j + 1] = offsets[j] + parts[j].size();

    hem_build_result r;
    r.function = partitioned_mphf(config.seed, n, m, std::move(offsets), std::move(functions));
    r.stats.seed = config.seed;
    r.stats.tries = 1;
    for (auto const& s : stats) {
        r.stats.pilot_attempts += s.pilot_attempts;
        r.stats.tries = std::max(r.stats.tries, s.tries);
    }
    r.stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

}  // namespace pthash
