#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "build_core.hpp"
#include "mphf.hpp"

namespace pthash {

static_assert(std::endian::native == std::endian::little,
              "spill files are written from in-memory little-endian records");

/*
    Internal-memory budget M. Pairs take q = 12 bytes. During the search the
    bitmap stays in memory, leaving M' = M - ceil(n'/8) bytes: a read window
    for buckets (a quarter of M', at most one I/O block) and a buffer of
    <id, pilot> pairs (the rest).
*/
struct memory_budget {
    static constexpr uint64_t pair_bytes = sizeof(bucket_pair);
    static constexpr uint64_t min_search_bytes = 4096;

    uint64_t bytes = uint64_t(1) << 30;
    uint64_t io_block_bytes = uint64_t(1) << 20;

    uint64_t map_buffer_pairs() const { return bytes / pair_bytes; }
    uint64_t search_bytes(uint64_t table_size) const { return bytes - (table_size + 7) / 8; }
    uint64_t bucket_window_bytes(uint64_t table_size) const {
        return std::min(io_block_bytes, search_bytes(table_size) / 4);
    }
    uint64_t pilot_buffer_pairs(uint64_t table_size) const {
        return (search_bytes(table_size) - bucket_window_bytes(table_size)) / pair_bytes;
    }

    /// Throws std::invalid_argument if the stages cannot run within the budget.
    void validate(uint64_t num_keys, uint64_t table_size) const;
};

/// Owns temporary files; all of them are removed on destruction.
class temp_files {
public:
    temp_files(std::filesystem::path dir, uint64_t seed);
    ~temp_files();
    temp_files(temp_files const&) = delete;
    temp_files& operator=(temp_files const&) = delete;

    std::filesystem::path make(std::string_view stage, uint64_t ordinal);
    void remove(std::filesystem::path const& path);
    std::vector<std::string> const& paths() const { return m_paths; }

private:
    std::filesystem::path m_dir;
    std::string m_prefix;
    std::vector<std::string> m_paths;  // plain strings: a path object allocates per component
};

struct file_closer {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using file_handle = std::unique_ptr<std::FILE, file_closer>;

file_handle open_file(std::filesystem::path const& path, const char* mode);
void write_bytes(std::FILE* f, const void* data, uint64_t n, std::filesystem::path const& path);
/// Reads up to n bytes, returns the count; short reads only at end of file.
uint64_t read_bytes(std::FILE* f, void* data, uint64_t n, std::filesystem::path const& path);

enum class spill_kind { pairs, pilots };

/// Sorted run of 12-byte records: 4-byte id and 8-byte payload, little-endian.
struct spill_file {
    std::string path;
    spill_kind kind = spill_kind::pairs;
    uint64_t records = 0;
};

/// Writes records (already sorted) to a new spill file.
spill_file write_spill(std::filesystem::path path, spill_kind kind,
                       std::span<const bucket_pair> records);
std::vector<bucket_pair> read_spill(spill_file const& file);

/// Bucket files, one per size class k: records of a 4-byte id and k 8-byte hashes.
struct bucket_files {
    std::vector<std::string> paths;  // paths[k - 1]; empty if no bucket of size k
    std::vector<uint64_t> counts;              // buckets per size class
    uint64_t num_keys = 0;
    uint64_t flushes = 0;

    uint64_t max_bucket_size() const { return paths.size(); }
};

bucket_collection read_bucket_files(bucket_files const& files);

struct external_config {
    memory_budget budget;
    std::filesystem::path tmp_dir = std::filesystem::temp_directory_path();
};

/// A key container, or any type with size() and for_each(f(std::string_view)).
template <typename T>
concept key_stream = requires(T const& t) {
    t.size();
    t.for_each([](std::string_view) {});
};

template <typename Keys, typename F>
void for_each_key(Keys const& keys, F&& f) {
    if constexpr (key_stream<Keys>) {
        keys.for_each(f);
    } else {
        for (auto const& k : keys) f(std::string_view(k));
    }
}

/// Map step with a buffer of M/q pairs, sorted and flushed to a file whenever
/// full: K = ceil(q n / M) files.
template <typename Keys>
std::vector<spill_file> map_external(Keys const& keys, bucket_mapper const& mapper, uint64_t seed,
                                     memory_budget const& budget, temp_files& tmp) {
    std::vector<spill_file> files;
    std::vector<bucket_pair> buffer;
    buffer.reserve(budget.map_buffer_pairs());
    auto flush = [&] {
        std::sort(buffer.begin(), buffer.end());
        files.push_back(write_spill(tmp.make("map", files.size()), spill_kind::pairs, buffer));
        buffer.clear();
    };
    for_each_key(keys, [&](std::string_view key) {
        key_hash kh = hash_key(key, seed);
        buffer.push_back({uint32_t(mapper.bucket_of(kh.bucket_hash)), kh.position_hash});
        if (buffer.size() == budget.map_buffer_pairs()) flush();
    });
    if (!buffer.empty()) flush();
    return files;
}

/// Streaming k-way merge of the map files into per-size bucket files. Buffered
/// bucket records are flushed to their files when half the budget is used (the
/// other half holds the read buffers).
bucket_files merge_external(std::span<const spill_file> files, memory_budget const& budget,
                            temp_files& tmp);

struct external_search_result {
    std::vector<spill_file> pilot_files;
    taken_bitmap taken;
    uint64_t attempts = 0;
};

/// Streams buckets from size L down to 1 through a bounded window; found
/// <id, pilot> pairs go to a buffer flushed, sorted by id, when full.
external_search_result search_external(bucket_files const& buckets, search_params const& params,
                                       uint64_t workers, memory_budget const& budget,
                                       temp_files& tmp);

/// Merges pilot files by id into a dense file of m little-endian 64-bit pilots.
std::filesystem::path merge_pilot_files(std::span<const spill_file> files, uint64_t num_buckets,
                                        memory_budget const& budget, temp_files& tmp);

/// Disk-resident sequence of 64-bit values, read through a bounded buffer.
struct file_u64_source {
    std::filesystem::path path;
    uint64_t count;
    uint64_t buffer_bytes;

    uint64_t size() const { return count; }

    template <typename F>
    void for_each(F&& f) const {
        auto file = open_file(path, "rb");
        std::vector<uint64_t> buffer(std::max<uint64_t>(1, buffer_bytes / 8));
        uint64_t left = count;
        while (left) {
            uint64_t chunk = std::min<uint64_t>(left, buffer.size());
            if (read_bytes(file.get(), buffer.data(), 8 * chunk, path) != 8 * chunk) {
                throw io_error(path.string(), "unexpected end of file");
            }
            for (uint64_t i = 0; i != chunk; ++i) f(buffer[i]);
            left -= chunk;
        }
    }
};

/// External-memory construction; the result is identical to build_mphf on the
/// same keys and configuration.
template <typename Keys>
build_result build_mphf_external(Keys const& keys, build_config const& config,
                                 external_config const& ext) {
    config.validate();
    const uint64_t n = keys.size();
    const uint64_t table_size = search_space_size(n, config.alpha);
    const uint64_t num_buckets = n ? config.buckets_for(n) : config.num_buckets;
    if (num_buckets > max_num_buckets) throw std::invalid_argument("too many buckets");
    ext.budget.validate(n, table_size);

    return with_retries(config, [&](uint64_t seed) {
        build_result r;
        if (n == 0) {
            std::vector<uint64_t> pilots(num_buckets, 0);
            r.function = assemble_mphf(seed, 0, 0, num_buckets, config, pilots, taken_bitmap(0));
            return r;
        }
        temp_files tmp(ext.tmp_dir, seed);
        bucket_mapper mapper(n, num_buckets);

        bucket_files buckets;
        {
            auto map_files = map_external(keys, mapper, seed, ext.budget, tmp);
            r.stats.map_files = map_files.size();
            buckets = merge_external(map_files, ext.budget, tmp);
            for (auto const& f : map_files) tmp.remove(f.path);
        }
        r.stats.bucket_flushes = buckets.flushes;

        search_params params{table_size, config.pilot_search_limit, config.mixer};
        auto found = search_external(buckets, params, config.workers, ext.budget, tmp);
        for (auto const& p : buckets.paths) {
            if (!p.empty()) tmp.remove(p);
        }
        r.stats.pilot_files = found.pilot_files.size();
        r.stats.pilot_attempts = found.attempts;

        elias_fano free_slots = encode_free_array(found.taken, n);
        found.taken = taken_bitmap();

        // the encoded free array is held from here on; later buffers shrink by its size
        memory_budget rest = ext.budget;
        rest.bytes -= std::min(rest.bytes / 2, free_slots.num_bits() / 8);
        auto dense = merge_pilot_files(found.pilot_files, num_buckets, rest, tmp);
        for (auto const& f : found.pilot_files) tmp.remove(f.path);
        file_u64_source pilots{dense, num_buckets, std::min(rest.io_block_bytes, rest.bytes / 4)};
        auto encoded = encoded_pilots::encode(config.encoder, pilots);
        r.function = mphf(seed, n, table_size, num_buckets, config.mixer, std::move(encoded),
                          std::move(free_slots));
        return r;
    });
}

}  // namespace pthash
