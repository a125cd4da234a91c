#include "pthash/hem.hpp"

#include <cstring>

namespace pthash {

partitioned_mphf::partitioned_mphf(uint64_t seed, uint64_t num_keys, uint64_t num_buckets,
                                   std::vector<uint64_t> offsets, std::vector<mphf> partitions)
    : m_seed(seed)
    , m_num_keys(num_keys)
    , m_num_buckets(num_buckets)
    , m_offsets(std::move(offsets))
    , m_partitions(std::move(partitions)) {
    if (m_partitions.empty()) throw format_error("partitioned function without partitions");
    if (m_offsets.size() != m_partitions.size() + 1 || m_offsets.front() != 0) {
        throw format_error("partition offsets are inconsistent");
    }
    uint64_t buckets = 0;
    for (uint64_t j = 0; j != m_partitions.size(); ++j) {
        auto const& p = m_partitions[j];
        if (m_offsets[j + 1] - m_offsets[j] != p.num_keys() || m_offsets[j + 1] < m_offsets[j]) {
            throw format_error("partition offsets do not match partition sizes");
        }
        if (p.encoder() != encoder() || p.mixer() != m_partitions.front().mixer()) {
            throw format_error("partitions disagree on encoder or mixer");
        }
        buckets += p.num_buckets();
    }
    if (m_offsets.back() != num_keys) throw format_error("partition offsets do not sum to n");
    if (buckets != num_buckets) throw format_error("partition bucket counts do not sum to m");
}

std::vector<uint8_t> partitioned_mphf::serialize() const {
    byte_writer out;
    out.bytes.reserve(serialized_bytes());
    write(out);
    return std::move(out.bytes);
}

uint64_t partitioned_mphf::serialized_bytes() const {
    byte_counter out;
    write(out);
    return out.size;
}

double partitioned_mphf::bits_per_key() const {
    if (m_num_keys == 0) return 0.0;
    return double(8 * (serialized_bytes() - hem_header_bytes)) / double(m_num_keys);
}

partitioned_mphf partitioned_mphf::deserialize(std::span<const uint8_t> bytes) {
    byte_reader in(bytes);
    auto f = read(in);
    if (in.remaining() != 0) throw format_error("trailing bytes after function");
    return f;
}

partitioned_mphf partitioned_mphf::read(byte_reader& in) {
    uint8_t magic[8];
    if (in.remaining() < 8) throw truncated_stream_error();
    in.get_raw(magic, 8);
    if (std::memcmp(magic, hem_magic, 8) != 0) throw bad_magic_error();
    uint8_t format = in.get_u8();
    if (format != mphf_format_version) throw version_mismatch_error("format " + std::to_string(format));
    pilot_mixer mixer = mixer_from_version_byte(in.get_u8());
    if (in.get_u8() != hem_tag) throw format_error("missing partitioned tag");
    uint8_t tag = in.get_u8();
    if (tag < 1 || tag > 3) throw format_error("unknown encoder tag " + std::to_string(tag));
    uint64_t seed = in.get_u64();
    uint64_t n = in.get_u64();
    uint64_t m = in.get_u64();
    uint64_t r = in.get_u64();
    if (r == 0 || r > in.remaining() / 8) throw truncated_stream_error();
    std::vector<uint64_t> offsets(r + 1);
    for (auto& o : offsets) o = in.get_u64();
    std::vector<mphf> partitions;
    partitions.reserve(r);
    for (uint64_t j = 0; j != r; ++j) {
        uint64_t pseed = in.get_u64();
        uint64_t pn = in.get_u64();
        uint64_t ptable = in.get_u64();
        uint64_t pm = in.get_u64();
        partitions.push_back(mphf::read_payload(in, pseed, pn, ptable, pm, mixer, encoder_tag(tag)));
    }
    return partitioned_mphf(seed, n, m, std::move(offsets), std::move(partitions));
}

}  // namespace pthash
