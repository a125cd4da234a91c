#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "pthash/hem.hpp"
#include "pthash/mphf.hpp"

namespace pthash::cli {

enum exit_code : int {
    exit_ok = 0,
    exit_usage = 2,
    exit_verify_failed = 3,
    exit_build_failed = 4,
    exit_io_failed = 5,
};

/// Byte-string keys stored back to back.
class key_set {
public:
    key_set() : m_offsets{0} {}

    void push_back(std::string_view key) {
        m_data.append(key);
        m_offsets.push_back(m_data.size());
    }

    uint64_t size() const { return m_offsets.size() - 1; }
    std::string_view operator[](uint64_t i) const {
        return std::string_view(m_data).substr(m_offsets[i], m_offsets[i + 1] - m_offsets[i]);
    }

    template <typename F>
    void for_each(F&& f) const {
        for (uint64_t i = 0; i != size(); ++i) f((*this)[i]);
    }

    void reserve(uint64_t keys, uint64_t bytes) {
        m_offsets.reserve(keys + 1);
        m_data.reserve(bytes);
    }

private:
    std::string m_data;
    std::vector<uint64_t> m_offsets;
};

/// n distinct 8-byte keys: little-endian bytes of mix64(mix64(seed) + i).
struct generated_keys {
    uint64_t n;
    uint64_t seed;

    uint64_t size() const { return n; }
    template <typename F>
    void for_each(F&& f) const {
        const uint64_t base = mix64(seed);
        char bytes[8];
        for (uint64_t i = 0; i != n; ++i) {
            uint64_t x = mix64(base + i);
            for (int b = 0; b != 8; ++b) bytes[b] = char(x >> (8 * b));
            f(std::string_view(bytes, 8));
        }
    }
};

key_set generate_keys(uint64_t n, uint64_t seed);

/// Keys streamed from a newline-delimited file through a small buffer that
/// grows only to fit the longest line.
class file_keys {
public:
    explicit file_keys(std::filesystem::path path, uint64_t buffer_bytes = 4096);

    uint64_t size() const { return m_size; }

    template <typename F>
    void for_each(F&& f) const {
        scan([&](std::string_view key) { f(key); });
    }

private:
    void scan(std::function<void(std::string_view)> const& f) const;

    std::filesystem::path m_path;
    uint64_t m_buffer_bytes;
    uint64_t m_size = 0;
};

/// Newline-delimited keys; the terminator is not part of the key and the
/// final newline is optional.
key_set read_key_file(std::filesystem::path const& path);
key_set parse_keys(std::string_view text);

/// Line numbers (1-based) of the first repeated key, if any.
std::optional<std::pair<uint64_t, uint64_t>> find_duplicate(key_set const& keys);

/// Flat or partitioned function loaded from a file.
class any_function {
public:
    any_function() = default;
    explicit any_function(mphf f) : m_f(std::move(f)) {}
    explicit any_function(partitioned_mphf f) : m_f(std::move(f)) {}

    static any_function deserialize(std::span<const uint8_t> bytes);

    uint64_t lookup(std::string_view key) const {
        return std::visit([&](auto const& f) { return f.lookup(key); }, m_f);
    }
    uint64_t num_keys() const;
    double bits_per_key() const;
    bool partitioned() const { return m_f.index() == 1; }
    std::vector<uint8_t> serialize() const;
    /// Streams the serialized form to a file without building it in memory.
    void save(std::filesystem::path const& path) const;
    std::string encoder() const;
    /// Candidates tried by the search, recomputed from the pilots of the buckets the keys hit.
    uint64_t pilot_attempts(key_set const& keys) const;
    /// c and alpha recovered from the stored sizes.
    double alpha() const;
    double c() const;
    uint64_t seed() const;

private:
    std::variant<mphf, partitioned_mphf> m_f;
};

std::vector<uint8_t> read_file(std::filesystem::path const& path);
void write_file(std::filesystem::path const& path, std::span<const uint8_t> bytes);

struct run_report {
    uint64_t n = 0;
    double c = 0.0;
    double alpha = 0.0;
    std::string encoder;
    uint64_t workers = 1;
    std::string mode;
    double construction_seconds = 0.0;
    double bits_per_key = 0.0;
    double lookup_ns_per_key = 0.0;
    uint64_t pilot_attempts = 0;
    uint64_t seed = 0;
};

std::string_view csv_header();
std::string csv_row(run_report const& r);

/// Average nanoseconds per lookup over `repetitions` passes on all keys.
double time_lookups(any_function const& f, key_set const& keys, uint64_t repetitions);

/// Outcome of a bijection check over a key set.
struct verify_result {
    bool ok = true;
    std::string message;
};
verify_result verify_function(any_function const& f, key_set const& keys);

struct key_source {
    std::string input;  // key file, or
    int64_t gen = -1;   // number of generated keys
    uint64_t seed = 0;  // generator seed

    key_set load() const;
};

struct build_options {
    key_source keys;
    build_config config;
    std::string encoder = "dd";
    std::string output;
    std::string report;  // empty: stdout
    bool external = false;
    uint64_t ram_budget = uint64_t(1) << 30;
    std::string tmp_dir;
    bool hem = false;
    uint64_t partitions = 0;  // 0: derived from avg_partition_size
    uint64_t avg_partition_size = 100000;
};

struct lookup_options {
    key_source keys;
    std::string function;
    uint64_t repetitions = 5;
    std::string report;
};

int cmd_build(build_options const& o, std::ostream& out, std::ostream& err);
int cmd_query(lookup_options const& o, std::ostream& out, std::ostream& err);
int cmd_verify(lookup_options const& o, std::ostream& out, std::ostream& err);
int cmd_bench(lookup_options const& o, std::ostream& out, std::ostream& err);

/// Entry point: parses argv and runs a subcommand.
int run(int argc, char const* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pthash::cli
