#pragma once

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cstdint>
#include <exception>
#include <memory>
#include <queue>
#include <span>
#include <string_view>
#include <thread>
#include <vector>

#include "encoders.hpp"
#include "errors.hpp"
#include "hashing.hpp"

namespace pthash {

constexpr uint64_t default_seed = 0x2c0ffee5eedULL;

struct build_config {
    double c = 7.0;
    double alpha = 0.94;
    uint64_t seed = default_seed;
    uint64_t workers = 1;
    encoder_tag encoder = encoder_tag::dictionary_dd;
    uint64_t pilot_search_limit = uint64_t(1) << 32;
    uint64_t retries = 3;
    pilot_mixer mixer = pilot_mixer::splitmix64;
    uint64_t num_buckets = 0;  // 0: derive from c

    /// Throws std::invalid_argument unless c > log2(e), 0 < alpha <= 1 and workers >= 1.
    void validate() const;

    uint64_t buckets_for(uint64_t num_keys) const {
        return num_buckets ? num_buckets : num_buckets_for(num_keys, c);
    }
};

/// n' = ceil(n / alpha), plus one if that is a power of two larger than n.
uint64_t search_space_size(uint64_t num_keys, double alpha);

/// Seed used by the (attempt)-th try; attempt 0 uses the configured seed.
uint64_t seed_for_attempt(uint64_t seed, uint64_t attempt);

/// One <bucket id, position hash> pair; 12 bytes, as on disk.
struct __attribute__((packed)) bucket_pair {
    uint32_t id;
    uint64_t hash;

    friend bool operator<(bucket_pair const& a, bucket_pair const& b) {
        uint32_t ia = a.id, ib = b.id;
        uint64_t ha = a.hash, hb = b.hash;
        return ia < ib || (ia == ib && ha < hb);
    }
    friend bool operator==(bucket_pair const& a, bucket_pair const& b) {
        return uint32_t(a.id) == uint32_t(b.id) && uint64_t(a.hash) == uint64_t(b.hash);
    }
};
static_assert(sizeof(bucket_pair) == 12);

constexpr uint64_t max_num_buckets = uint64_t(1) << 32;

using pair_block = std::vector<bucket_pair>;

struct murmur_hasher {
    key_hash operator()(std::string_view key, uint64_t seed) const { return hash_key(key, seed); }
};

/// Splits the keys into `workers` contiguous slices; each worker hashes its
/// slice into a block sorted by (id, hash).
template <typename Keys, typename Hasher = murmur_hasher>
std::vector<pair_block> map_keys(Keys const& keys, bucket_mapper const& mapper, uint64_t seed,
                                 uint64_t workers, Hasher const& hasher = {}) {
    const uint64_t n = keys.size();
    workers = std::max<uint64_t>(1, std::min<uint64_t>(workers, std::max<uint64_t>(n, 1)));
    std::vector<pair_block> blocks(workers);
    auto fill = [&](uint64_t w) {
        const uint64_t begin = n * w / workers;
        const uint64_t end = n * (w + 1) / workers;
        auto& block = blocks[w];
        block.reserve(end - begin);
        for (uint64_t i = begin; i != end; ++i) {
            key_hash kh = hasher(keys[i], seed);
            block.push_back({uint32_t(mapper.bucket_of(kh.bucket_hash)), kh.position_hash});
        }
        std::sort(block.begin(), block.end());
    };
    if (workers == 1) {
        fill(0);
    } else {
        std::vector<std::jthread> threads;
        for (uint64_t w = 0; w != workers; ++w) threads.emplace_back(fill, w);
    }
    return blocks;
}

struct bucket_view {
    uint64_t id;
    std::span<const uint64_t> hashes;
};

/*
    Buckets grouped by size: buffer k - 1 holds the buckets of size k as
    consecutive records [id, hash_1, ..., hash_k]. Iteration goes from the
    largest size down to 1, and by ascending id within a size.
*/
class bucket_collection {
public:
    void add(uint64_t id, std::span<const uint64_t> hashes) {
        assert(!hashes.empty());
        if (hashes.size() > m_buffers.size()) m_buffers.resize(hashes.size());
        auto& buffer = m_buffers[hashes.size() - 1];
        buffer.push_back(id);
        buffer.insert(buffer.end(), hashes.begin(), hashes.end());
        ++m_num_buckets;
        m_num_keys += hashes.size();
    }

    /// L, the largest bucket size.
    uint64_t max_bucket_size() const { return m_buffers.size(); }
    uint64_t num_buckets() const { return m_num_buckets; }
    uint64_t num_keys() const { return m_num_keys; }

    template <typename F>
    void for_each(F&& f) const {
        for (uint64_t k = m_buffers.size(); k != 0; --k) {
            auto const& buffer = m_buffers[k - 1];
            for (uint64_t pos = 0; pos < buffer.size(); pos += k + 1) {
                f(bucket_view{buffer[pos], std::span(buffer).subspan(pos + 1, k)});
            }
        }
    }

    std::vector<bucket_view> views() const {
        std::vector<bucket_view> v;
        v.reserve(m_num_buckets);
        for_each([&](bucket_view b) { v.push_back(b); });
        return v;
    }

private:
    std::vector<std::vector<uint64_t>> m_buffers;
    uint64_t m_num_buckets = 0;
    uint64_t m_num_keys = 0;
};

/*
    K-way merge of sorted pair streams. A cursor exposes
        bool valid() const; bucket_pair current() const; void advance();
    `emit(id, hashes)` receives each bucket once, ids ascending, hashes
    ascending. Throws duplicate_hash_error on equal (id, hash) pairs.
*/
template <typename Cursor, typename Emit>
void merge_pairs(std::vector<Cursor>& cursors, Emit&& emit) {
    struct head {
        bucket_pair pair;
        uint64_t source;
    };
    auto greater = [](head const& a, head const& b) { return b.pair < a.pair; };
    std::priority_queue<head, std::vector<head>, decltype(greater)> heap(greater);
    for (uint64_t i = 0; i != cursors.size(); ++i) {
        if (cursors[i].valid()) heap.push({cursors[i].current(), i});
    }

    std::vector<uint64_t> hashes;
    uint64_t current_id = 0;
    while (!heap.empty()) {
        head top = heap.top();
        heap.pop();
        auto& cursor = cursors[top.source];
        cursor.advance();
        if (cursor.valid()) heap.push({cursor.current(), top.source});

        const uint64_t id = top.pair.id;
        const uint64_t hash = top.pair.hash;
        if (!hashes.empty() && id != current_id) {
            emit(current_id, std::span<const uint64_t>(hashes));
            hashes.clear();
        }
        if (!hashes.empty() && hashes.back() == hash) throw duplicate_hash_error(id, hash);
        current_id = id;
        hashes.push_back(hash);
    }
    if (!hashes.empty()) emit(current_id, std::span<const uint64_t>(hashes));
}

struct block_cursor {
    pair_block const* block;
    uint64_t pos = 0;
    bool valid() const { return pos < block->size(); }
    bucket_pair current() const { return (*block)[pos]; }
    void advance() { ++pos; }
};

/// Merges sorted blocks into buckets; throws duplicate_hash_error.
bucket_collection merge_blocks(std::span<const pair_block> blocks);

/// Occupancy of the search space. Bits are only ever set. Words are atomics so
/// that workers may read while the turn holder writes.
class taken_bitmap {
public:
    taken_bitmap() : m_size(0) {}
    explicit taken_bitmap(uint64_t size)
        : m_size(size), m_words(new std::atomic<uint64_t>[bits::words_for(size)]) {
        for (uint64_t i = 0; i != bits::words_for(size); ++i) m_words[i].store(0, std::memory_order_relaxed);
    }

    bool test(uint64_t p) const {
        return (m_words[p >> 6].load(std::memory_order_relaxed) >> (p & 63)) & 1;
    }

    /// Single writer at a time.
    void set(uint64_t p) {
        auto& w = m_words[p >> 6];
        w.store(w.load(std::memory_order_relaxed) | (uint64_t(1) << (p & 63)),
                std::memory_order_relaxed);
    }

    uint64_t size() const { return m_size; }
    uint64_t num_bytes() const { return 8 * bits::words_for(m_size); }
    uint64_t count() const;

private:
    uint64_t m_size;
    std::unique_ptr<std::atomic<uint64_t>[]> m_words;
};

struct search_params {
    uint64_t table_size;  // n'
    uint64_t limit = uint64_t(1) << 32;
    pilot_mixer mixer = pilot_mixer::splitmix64;
};

/// True if `pilot` sends every hash of the bucket to a distinct free slot;
/// the slots are left in `positions`.
bool try_pilot(bucket_view bucket, uint64_t pilot, taken_bitmap const& taken,
               search_params const& params, std::vector<uint64_t>& positions);

/// Smallest pilot >= start that works against `taken`; throws pilot_search_exhausted.
uint64_t find_pilot(bucket_view bucket, uint64_t start, taken_bitmap const& taken,
                    search_params const& params, std::vector<uint64_t>& positions);

/// Sequential search. `sink(id, pilot)` is called in bucket order; returns the
/// number of pilot candidates tried.
template <typename Sink>
uint64_t search_sequential(std::span<const bucket_view> buckets, taken_bitmap& taken,
                           search_params const& params, Sink&& sink) {
    std::vector<uint64_t> positions;
    uint64_t attempts = 0;
    for (auto const& bucket : buckets) {
        uint64_t pilot = find_pilot(bucket, 0, taken, params, positions);
        for (uint64_t p : positions) taken.set(p);
        sink(bucket.id, pilot);
        attempts += pilot + 1;
    }
    return attempts;
}

/*
    Parallel search. Worker w owns the buckets at ranks r = w (mod K). While
    waiting for its turn it tries candidates against the live bitmap and pauses
    on the first one that fits; a turn counter, polled without locks, lets
    ranks commit strictly in order. At its turn the worker re-validates from
    the paused candidate: a candidate rejected against an earlier bitmap state
    stays rejected, so the result equals the sequential search.
*/
template <typename Sink>
uint64_t search_parallel(std::span<const bucket_view> buckets, taken_bitmap& taken,
                         search_params const& params, uint64_t workers, Sink&& sink) {
    if (workers <= 1 || buckets.size() <= 1) {
        return search_sequential(buckets, taken, params, sink);
    }
    workers = std::min<uint64_t>(workers, buckets.size());

    std::atomic<uint64_t> turn{0};
    std::atomic<bool> abort{false};
    std::exception_ptr failure;
    std::vector<uint64_t> attempts(workers, 0);

    auto work = [&](uint64_t w) {
        std::vector<uint64_t> positions;
        for (uint64_t r = w; r < buckets.size(); r += workers) {
            auto const& bucket = buckets[r];
            uint64_t pilot = 0;
            uint64_t seen = turn.load(std::memory_order_acquire);
            while (seen != r) {
                if (pilot < params.limit && !try_pilot(bucket, pilot, taken, params, positions)) {
                    ++pilot;
                    if (abort.load(std::memory_order_relaxed)) return;
                    seen = turn.load(std::memory_order_acquire);
                    continue;
                }
                // paused: wait for the next commit
                uint64_t t;
                while ((t = turn.load(std::memory_order_acquire)) == seen) {
                    if (abort.load(std::memory_order_relaxed)) return;
                    std::this_thread::yield();
                }
                seen = t;
                if (abort.load(std::memory_order_relaxed)) return;
            }
            try {
                pilot = find_pilot(bucket, pilot, taken, params, positions);
            } catch (...) {
                failure = std::current_exception();
                abort.store(true, std::memory_order_relaxed);
                return;
            }
            for (uint64_t p : positions) taken.set(p);
            sink(bucket.id, pilot);
            attempts[w] += pilot + 1;
            turn.store(r + 1, std::memory_order_release);
        }
    };

    {
        std::vector<std::jthread> threads;
        for (uint64_t w = 1; w != workers; ++w) threads.emplace_back(work, w);
        work(0);
    }
    if (failure) std::rethrow_exception(failure);

    uint64_t total = 0;
    for (uint64_t a : attempts) total += a;
    return total;
}

template <typename Sink>
uint64_t search(std::span<const bucket_view> buckets, taken_bitmap& taken,
                search_params const& params, uint64_t workers, Sink&& sink) {
    return workers <= 1 ? search_sequential(buckets, taken, params, sink)
                        : search_parallel(buckets, taken, params, workers, sink);
}

struct search_result {
    std::vector<uint64_t> pilots;  // indexed by bucket id; empty buckets hold 0
    taken_bitmap taken;
    uint64_t attempts = 0;
};

/// In-memory search: pilots are stored directly at their bucket id.
search_result search_buckets(bucket_collection const& buckets, uint64_t num_buckets,
                             search_params const& params, uint64_t workers);

/*
    Streams the free array: for overflow slot p in [n, n'), in order, the
    value is the next unused position below n if p is taken, otherwise the
    value the next taken slot will get (the last one for the tail). The
    resulting sequence is non-decreasing.
*/
template <typename F>
void for_each_free_slot(taken_bitmap const& taken, uint64_t num_keys, F&& f) {
    uint64_t next_free = 0;
    auto advance = [&] {
        while (next_free < num_keys && taken.test(next_free)) ++next_free;
    };
    advance();
    uint64_t last_assigned = 0;
    for (uint64_t p = num_keys; p < taken.size(); ++p) {
        if (next_free < num_keys) {
            f(next_free);
            last_assigned = next_free;
            if (taken.test(p)) {
                ++next_free;
                advance();
            }
        } else {
            f(last_assigned);
        }
    }
}

std::vector<uint64_t> build_free_array(taken_bitmap const& taken, uint64_t num_keys);

/// Elias-Fano free array over universe n, produced straight from the bitmap.
elias_fano encode_free_array(taken_bitmap const& taken, uint64_t num_keys);

}  // namespace pthash
