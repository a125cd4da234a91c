#pragma once

#include <cstdint>
#include <cstring>
#include <ostream>
#include <span>
#include <vector>

#include "errors.hpp"

namespace pthash {

// All multi-byte integers on the wire are little-endian.

struct byte_writer {
    std::vector<uint8_t> bytes;

    void put_u8(uint8_t x) { bytes.push_back(x); }

    void put_u32(uint32_t x) {
        for (int i = 0; i != 4; ++i) bytes.push_back(uint8_t(x >> (8 * i)));
    }

    void put_u64(uint64_t x) {
        for (int i = 0; i != 8; ++i) bytes.push_back(uint8_t(x >> (8 * i)));
    }

    void put_raw(const void* data, size_t n) {
        auto p = static_cast<const uint8_t*>(data);
        bytes.insert(bytes.end(), p, p + n);
    }

    void put_words(std::span<const uint64_t> words) {
        bytes.reserve(bytes.size() + 8 * words.size());
        for (uint64_t w : words) put_u64(w);
    }

    /// Zero-fill up to the next multiple of 8 bytes.
    void pad8() {
        while (bytes.size() % 8) bytes.push_back(0);
    }
};

/// Counts bytes without storing them.
struct byte_counter {
    uint64_t size = 0;
    void put_u8(uint8_t) { size += 1; }
    void put_u32(uint32_t) { size += 4; }
    void put_u64(uint64_t) { size += 8; }
    void put_raw(const void*, size_t n) { size += n; }
    void put_words(std::span<const uint64_t> words) { size += 8 * words.size(); }
    void pad8() { size = (size + 7) / 8 * 8; }
};

/// Writes through to a stream; `ok()` is false once a write has failed.
struct stream_writer {
    std::ostream& out;
    uint64_t size = 0;

    void put_u8(uint8_t x) { put_raw(&x, 1); }
    void put_u32(uint32_t x) {
        uint8_t b[4];
        for (int i = 0; i != 4; ++i) b[i] = uint8_t(x >> (8 * i));
        put_raw(b, 4);
    }
    void put_u64(uint64_t x) {
        uint8_t b[8];
        for (int i = 0; i != 8; ++i) b[i] = uint8_t(x >> (8 * i));
        put_raw(b, 8);
    }
    void put_raw(const void* data, size_t n) {
        out.write(static_cast<const char*>(data), std::streamsize(n));
        size += n;
    }
    void put_words(std::span<const uint64_t> words) {
        for (uint64_t w : words) put_u64(w);
    }
    void pad8() {
        static constexpr uint8_t zeros[8] = {};
        put_raw(zeros, (8 - size % 8) % 8);
    }
    bool ok() const { return bool(out); }
};

class byte_reader {
public:
    explicit byte_reader(std::span<const uint8_t> bytes) : m_bytes(bytes), m_pos(0) {}

    uint8_t get_u8() {
        need(1);
        return m_bytes[m_pos++];
    }

    uint32_t get_u32() {
        need(4);
        uint32_t x = 0;
        for (int i = 0; i != 4; ++i) x |= uint32_t(m_bytes[m_pos++]) << (8 * i);
        return x;
    }

    uint64_t get_u64() {
        need(8);
        uint64_t x = 0;
        for (int i = 0; i != 8; ++i) x |= uint64_t(m_bytes[m_pos++]) << (8 * i);
        return x;
    }

    void get_raw(void* out, size_t n) {
        need(n);
        std::memcpy(out, m_bytes.data() + m_pos, n);
        m_pos += n;
    }

    std::vector<uint64_t> get_words(uint64_t count) {
        if (count > remaining() / 8) throw truncated_stream_error();
        std::vector<uint64_t> words(count);
        for (auto& w : words) w = get_u64();
        return words;
    }

    void pad8() {
        uint64_t skip = (8 - m_pos % 8) % 8;
        need(skip);
        m_pos += skip;
    }

    size_t position() const { return m_pos; }
    size_t remaining() const { return m_bytes.size() - m_pos; }

private:
    void need(size_t n) const {
        if (n > remaining()) throw truncated_stream_error();
    }

    std::span<const uint8_t> m_bytes;
    size_t m_pos;
};

}  // namespace pthash
