#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pthash {

/// Two keys produced the same (bucket id, position hash) pair.
struct duplicate_hash_error : std::runtime_error {
    duplicate_hash_error(uint64_t bucket_id, uint64_t hash)
        : std::runtime_error("duplicate hash " + std::to_string(hash) + " in bucket " +
                             std::to_string(bucket_id))
        , bucket_id(bucket_id)
        , hash(hash) {}
    uint64_t bucket_id;
    uint64_t hash;
};

/// No pilot below the configured limit places the bucket.
struct pilot_search_exhausted : std::runtime_error {
    pilot_search_exhausted(uint64_t bucket_id, uint64_t limit)
        : std::runtime_error("pilot search exhausted for bucket " + std::to_string(bucket_id) +
                             " (limit " + std::to_string(limit) + ")")
        , bucket_id(bucket_id) {}
    uint64_t bucket_id;
};

/// Every seed tried failed; `what()` carries the last cause.
struct build_failure : std::runtime_error {
    build_failure(const std::string& cause, uint64_t attempts, bool duplicates)
        : std::runtime_error("construction failed after " + std::to_string(attempts) +
                             " attempt(s): " + cause)
        , cause(cause)
        , attempts(attempts)
        , duplicate_keys(duplicates) {}
    std::string cause;
    uint64_t attempts;
    bool duplicate_keys;
};

struct io_error : std::runtime_error {
    io_error(const std::string& path, const std::string& what)
        : std::runtime_error(path + ": " + what), path(path) {}
    std::string path;
};

struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct bad_magic_error : format_error {
    bad_magic_error() : format_error("bad magic number") {}
};

struct version_mismatch_error : format_error {
    version_mismatch_error(const std::string& what) : format_error("version mismatch: " + what) {}
};

struct truncated_stream_error : format_error {
    truncated_stream_error() : format_error("truncated stream") {}
};

}  // namespace pthash
