#include "pthash/build_core.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace pthash {

void build_config::validate() const {
    if (!(c > std::log2(std::exp(1.0)))) throw std::invalid_argument("c must exceed log2(e)");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in (0, 1]");
    if (workers < 1) throw std::invalid_argument("at least one worker is required");
    if (pilot_search_limit < 1) throw std::invalid_argument("pilot search limit must be positive");
}

uint64_t search_space_size(uint64_t num_keys, double alpha) {
    auto size = std::max(uint64_t(std::ceil(double(num_keys) / alpha)), num_keys);
    // a power-of-two table keeps the low bits of every hash (see find_pilot)
    if (size > num_keys && std::has_single_bit(size)) ++size;
    return size;
}

uint64_t seed_for_attempt(uint64_t seed, uint64_t attempt) {
    for (uint64_t i = 0; i != attempt; ++i) seed = mix64(seed);
    return seed;
}

bucket_collection merge_blocks(std::span<const pair_block> blocks) {
    std::vector<block_cursor> cursors;
    cursors.reserve(blocks.size());
    for (auto const& b : blocks) cursors.push_back({&b});
    bucket_collection buckets;
    merge_pairs(cursors, [&](uint64_t id, std::span<const uint64_t> hashes) {
        buckets.add(id, hashes);
    });
    return buckets;
}

uint64_t taken_bitmap::count() const {
    uint64_t c = 0;
    for (uint64_t i = 0; i != bits::words_for(m_size); ++i) {
        c += std::popcount(m_words[i].load(std::memory_order_relaxed));
    }
    return c;
}

bool try_pilot(bucket_view bucket, uint64_t pilot, taken_bitmap const& taken,
               search_params const& params, std::vector<uint64_t>& positions) {
    const uint64_t hashed_pilot = hash_pilot(pilot, params.mixer);
    positions.clear();
    for (uint64_t h : bucket.hashes) {
        uint64_t p = (h ^ hashed_pilot) % params.table_size;
        if (taken.test(p)) return false;
        positions.push_back(p);
    }
    const uint64_t k = positions.size();
    if (k <= 32) {
        for (uint64_t j = 1; j < k; ++j) {
            for (uint64_t l = 0; l != j; ++l) {
                if (positions[j] == positions[l]) return false;
            }
        }
        return true;
    }
    std::vector<uint64_t> sorted(positions);
    std::sort(sorted.begin(), sorted.end());
    return std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
}

namespace {

/// With a power-of-two table, (h ^ x) mod n' = (h mod n') ^ (x mod n'): two
/// hashes equal mod n' collide under every pilot.
bool collides_for_every_pilot(bucket_view bucket, uint64_t table_size) {
    if (!std::has_single_bit(table_size) || bucket.hashes.size() < 2) return false;
    std::vector<uint64_t> low;
    low.reserve(bucket.hashes.size());
    for (uint64_t h : bucket.hashes) low.push_back(h & (table_size - 1));
    std::sort(low.begin(), low.end());
    return std::adjacent_find(low.begin(), low.end()) != low.end();
}

}  // namespace

uint64_t find_pilot(bucket_view bucket, uint64_t start, taken_bitmap const& taken,
                    search_params const& params, std::vector<uint64_t>& positions) {
    if (collides_for_every_pilot(bucket, params.table_size)) {
        throw pilot_search_exhausted(bucket.id, params.limit);
    }
    for (uint64_t pilot = start; pilot < params.limit; ++pilot) {
        if (try_pilot(bucket, pilot, taken, params, positions)) return pilot;
    }
    throw pilot_search_exhausted(bucket.id, params.limit);
}

search_result search_buckets(bucket_collection const& buckets, uint64_t num_buckets,
                             search_params const& params, uint64_t workers) {
    search_result result;
    result.pilots.assign(num_buckets, 0);
    result.taken = taken_bitmap(params.table_size);
    auto views = buckets.views();
    result.attempts = search(std::span<const bucket_view>(views), result.taken, params, workers,
                             [&](uint64_t id, uint64_t pilot) { result.pilots[id] = pilot; });
    return result;
}

std::vector<uint64_t> build_free_array(taken_bitmap const& taken, uint64_t num_keys) {
    std::vector<uint64_t> free;
    free.reserve(taken.size() - num_keys);
    for_each_free_slot(taken, num_keys, [&](uint64_t v) { free.push_back(v); });
    return free;
}

namespace {

struct free_slot_source {
    taken_bitmap const& taken;
    uint64_t num_keys;
    uint64_t size() const { return taken.size() - num_keys; }
    template <typename F>
    void for_each(F&& f) const {
        for_each_free_slot(taken, num_keys, f);
    }
};

}  // namespace

elias_fano encode_free_array(taken_bitmap const& taken, uint64_t num_keys) {
    elias_fano ef;
    ef.encode(free_slot_source{taken, num_keys}, std::max<uint64_t>(num_keys, 1));
    return ef;
}

}  // namespace pthash
