#include "pthash/extmem.hpp"

#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <sstream>

namespace pthash {

namespace fs = std::filesystem;

void memory_budget::validate(uint64_t num_keys, uint64_t table_size) const {
    if (num_keys == 0) return;
    auto fail = [&](const std::string& why) {
        throw std::invalid_argument("ram budget of " + std::to_string(bytes) + " bytes too small: " + why);
    };
    if (map_buffer_pairs() == 0) fail("map buffer holds no pair");
    const uint64_t map_files = (pair_bytes * num_keys + bytes - 1) / bytes;
    if (bytes / (2 * map_files) < pair_bytes) fail("merge cannot buffer one pair per map file");
    if ((table_size + 7) / 8 + min_search_bytes > bytes) fail("bitmap does not fit with search buffers");
}

temp_files::temp_files(fs::path dir, uint64_t seed) : m_dir(std::move(dir)) {
    static std::atomic<uint64_t> instances{0};
    std::ostringstream prefix;
    prefix << "pthash." << ::getpid() << "." << instances.fetch_add(1) << "." << std::hex << seed;
    m_prefix = prefix.str();
}

temp_files::~temp_files() {
    for (auto const& p : m_paths) {
        std::error_code ec;
        fs::remove(p, ec);
    }
}

fs::path temp_files::make(std::string_view stage, uint64_t ordinal) {
    auto p = m_dir / (m_prefix + "." + std::string(stage) + "." + std::to_string(ordinal) + ".tmp");
    m_paths.push_back(p.native());
    return p;
}

void temp_files::remove(fs::path const& path) {
    std::error_code ec;
    fs::remove(path, ec);
    std::erase(m_paths, path.native());
}

file_handle open_file(fs::path const& path, const char* mode) {
    std::FILE* f = std::fopen(path.c_str(), mode);
    if (!f) throw io_error(path.string(), std::strerror(errno));
    return file_handle(f);
}

void write_bytes(std::FILE* f, const void* data, uint64_t n, fs::path const& path) {
    if (n && std::fwrite(data, 1, n, f) != n) throw io_error(path.string(), std::strerror(errno));
}

uint64_t read_bytes(std::FILE* f, void* data, uint64_t n, fs::path const& path) {
    uint64_t got = n ? std::fread(data, 1, n, f) : 0;
    if (got != n && std::ferror(f)) throw io_error(path.string(), std::strerror(errno));
    return got;
}

namespace {

void finish_write(file_handle& f, fs::path const& path) {
    if (std::fflush(f.get()) != 0) throw io_error(path.string(), std::strerror(errno));
    f.reset();
}

/// Sequential reader of a spill file through a buffer of `buffer_pairs` records.
struct spill_cursor {
    spill_cursor(spill_file const& file, uint64_t buffer_pairs)
        : path(&file.path), handle(open_file(file.path, "rb")), buffer(buffer_pairs), left(file.records) {
        refill();
    }

    bool valid() const { return pos < len; }
    bucket_pair current() const { return buffer[pos]; }
    void advance() {
        if (++pos == len) refill();
    }

    void refill() {
        pos = 0;
        len = std::min<uint64_t>(left, buffer.size());
        uint64_t bytes = len * sizeof(bucket_pair);
        if (read_bytes(handle.get(), buffer.data(), bytes, *path) != bytes) {
            throw io_error(*path, "unexpected end of spill file");
        }
        left -= len;
    }

    std::string const* path;
    file_handle handle;
    std::vector<bucket_pair> buffer;
    uint64_t left;
    uint64_t pos = 0;
    uint64_t len = 0;
};

std::vector<spill_cursor> open_cursors(std::span<const spill_file> files, memory_budget const& budget) {
    std::vector<spill_cursor> cursors;
    if (files.empty()) return cursors;
    uint64_t share = std::min(budget.io_block_bytes, budget.bytes / (2 * files.size()));
    uint64_t buffer_pairs = std::max<uint64_t>(1, share / sizeof(bucket_pair));
    cursors.reserve(files.size());
    for (auto const& f : files) cursors.emplace_back(f, buffer_pairs);
    return cursors;
}

}  // namespace

spill_file write_spill(fs::path path, spill_kind kind, std::span<const bucket_pair> records) {
    auto f = open_file(path, "wb");
    write_bytes(f.get(), records.data(), records.size_bytes(), path);
    finish_write(f, path);
    return {path.native(), kind, records.size()};
}

std::vector<bucket_pair> read_spill(spill_file const& file) {
    std::vector<bucket_pair> records(file.records);
    auto f = open_file(file.path, "rb");
    uint64_t bytes = records.size() * sizeof(bucket_pair);
    if (read_bytes(f.get(), records.data(), bytes, file.path) != bytes) {
        throw io_error(file.path, "unexpected end of spill file");
    }
    return records;
}

bucket_files merge_external(std::span<const spill_file> files, memory_budget const& budget,
                            temp_files& tmp) {
    bucket_files out;
    auto cursors = open_cursors(files, budget);

    std::vector<file_handle> outputs;
    std::vector<uint64_t> arena;  // records [k, id, hash_1 .. hash_k]
    const uint64_t arena_words = std::max<uint64_t>(1, budget.bytes / 2 / 8);
    arena.reserve(arena_words);

    auto output_for = [&](uint64_t k) -> std::FILE* {
        if (k > out.paths.size()) {
            out.paths.resize(k);
            out.counts.resize(k, 0);
            outputs.resize(k);
        }
        if (!outputs[k - 1]) {
            out.paths[k - 1] = tmp.make("bucket", k).native();
            outputs[k - 1] = open_file(out.paths[k - 1], "wb");
        }
        return outputs[k - 1].get();
    };
    auto write_record = [&](uint64_t id, std::span<const uint64_t> hashes) {
        std::FILE* f = output_for(hashes.size());
        auto const& path = out.paths[hashes.size() - 1];
        uint32_t id32 = uint32_t(id);
        write_bytes(f, &id32, 4, path);
        write_bytes(f, hashes.data(), hashes.size_bytes(), path);
    };
    auto flush = [&] {
        for (uint64_t pos = 0; pos < arena.size();) {
            uint64_t k = arena[pos];
            write_record(arena[pos + 1], std::span<const uint64_t>(arena).subspan(pos + 2, k));
            pos += k + 2;
        }
        arena.clear();
        ++out.flushes;
    };

    merge_pairs(cursors, [&](uint64_t id, std::span<const uint64_t> hashes) {
        const uint64_t k = hashes.size();
        out.num_keys += k;
        if (arena.size() + k + 2 > arena_words) flush();
        if (k + 2 > arena_words) {
            write_record(id, hashes);
        } else {
            arena.push_back(k);
            arena.push_back(id);
            arena.insert(arena.end(), hashes.begin(), hashes.end());
        }
        output_for(k);
        ++out.counts[k - 1];
    });
    if (!arena.empty()) flush();
    for (uint64_t k = 0; k != outputs.size(); ++k) {
        if (outputs[k]) finish_write(outputs[k], out.paths[k]);
    }
    return out;
}

bucket_collection read_bucket_files(bucket_files const& files) {
    bucket_collection buckets;
    for (uint64_t k = 1; k <= files.max_bucket_size(); ++k) {
        if (files.counts[k - 1] == 0) continue;
        auto f = open_file(files.paths[k - 1], "rb");
        std::vector<uint64_t> hashes(k);
        for (uint64_t b = 0; b != files.counts[k - 1]; ++b) {
            uint32_t id;
            if (read_bytes(f.get(), &id, 4, files.paths[k - 1]) != 4 ||
                read_bytes(f.get(), hashes.data(), 8 * k, files.paths[k - 1]) != 8 * k) {
                throw io_error(files.paths[k - 1], "unexpected end of bucket file");
            }
            buckets.add(id, hashes);
        }
    }
    return buckets;
}

external_search_result search_external(bucket_files const& buckets, search_params const& params,
                                       uint64_t workers, memory_budget const& budget,
                                       temp_files& tmp) {
    external_search_result result;
    result.taken = taken_bitmap(params.table_size);

    const uint64_t window_bytes = budget.bucket_window_bytes(params.table_size);
    const uint64_t pilot_capacity = std::max<uint64_t>(1, budget.pilot_buffer_pairs(params.table_size));
    std::vector<bucket_pair> pilots;
    pilots.reserve(pilot_capacity);

    auto flush_pilots = [&] {
        std::sort(pilots.begin(), pilots.end());
        result.pilot_files.push_back(
            write_spill(tmp.make("pilots", result.pilot_files.size()), spill_kind::pilots, pilots));
        pilots.clear();
    };
    auto sink = [&](uint64_t id, uint64_t pilot) {
        pilots.push_back({uint32_t(id), pilot});
        if (pilots.size() == pilot_capacity) flush_pilots();
    };

    for (uint64_t k = buckets.max_bucket_size(); k != 0; --k) {
        uint64_t left = buckets.counts[k - 1];
        if (left == 0) continue;
        auto const& path = buckets.paths[k - 1];
        auto f = open_file(path, "rb");

        const uint64_t record_bytes = 4 + 8 * k;
        const uint64_t batch =
            std::max<uint64_t>(1, window_bytes / (8 * (k + 1) + sizeof(bucket_view)));
        std::vector<uint64_t> words(batch * (k + 1));
        std::vector<bucket_view> views;
        views.reserve(batch);
        std::vector<uint64_t> record(k + 1);
        auto* base = reinterpret_cast<uint8_t*>(words.data());

        while (left) {
            const uint64_t chunk = std::min(left, batch);
            // raw records are read into the tail of the window and unpacked forward
            uint8_t* raw = base + 8 * words.size() - chunk * record_bytes;
            if (read_bytes(f.get(), raw, chunk * record_bytes, path) != chunk * record_bytes) {
                throw io_error(path, "unexpected end of bucket file");
            }
            views.clear();
            for (uint64_t j = 0; j != chunk; ++j) {
                uint32_t id;
                std::memcpy(&id, raw + j * record_bytes, 4);
                record[0] = id;
                std::memcpy(record.data() + 1, raw + j * record_bytes + 4, 8 * k);
                uint64_t* dst = words.data() + j * (k + 1);
                std::copy(record.begin(), record.end(), dst);
                views.push_back({dst[0], std::span<const uint64_t>(dst + 1, k)});
            }
            result.attempts += search(std::span<const bucket_view>(views), result.taken, params, workers, sink);
            left -= chunk;
        }
    }
    if (!pilots.empty()) flush_pilots();
    return result;
}

fs::path merge_pilot_files(std::span<const spill_file> files, uint64_t num_buckets,
                           memory_budget const& budget, temp_files& tmp) {
    auto cursors = open_cursors(files, budget);
    auto path = tmp.make("pilots_dense", 0);
    auto out = open_file(path, "wb");
    std::vector<uint64_t> buffer;
    buffer.reserve(std::max<uint64_t>(1, std::min(budget.io_block_bytes, budget.bytes / 2) / 8));
    auto push = [&](uint64_t v) {
        buffer.push_back(v);
        if (buffer.size() == buffer.capacity()) {
            write_bytes(out.get(), buffer.data(), 8 * buffer.size(), path);
            buffer.clear();
        }
    };
    uint64_t next_id = 0;
    merge_pairs(cursors, [&](uint64_t id, std::span<const uint64_t> pilot) {
        if (pilot.size() != 1 || id >= num_buckets) throw format_error("corrupt pilot spill file");
        for (; next_id < id; ++next_id) push(0);
        push(pilot[0]);
        ++next_id;
    });
    for (; next_id < num_buckets; ++next_id) push(0);
    write_bytes(out.get(), buffer.data(), 8 * buffer.size(), path);
    finish_write(out, path);
    return path;
}

}  // namespace pthash
