#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "gsrd/common.hpp"

namespace gsrd {

// little-endian writers/readers over a byte vector; reads are bounds-checked
struct ByteWriter {
    std::vector<uint8_t> bytes;

    void raw(const void* p, size_t n) {
        const uint8_t* b = static_cast<const uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
    void u8(uint8_t v) { bytes.push_back(v); }
    void u16(uint16_t v) { for (int i = 0; i < 2; ++i) bytes.push_back(uint8_t(v >> (8 * i))); }
    void u32(uint32_t v) { for (int i = 0; i < 4; ++i) bytes.push_back(uint8_t(v >> (8 * i))); }
    void u64(uint64_t v) { for (int i = 0; i < 8; ++i) bytes.push_back(uint8_t(v >> (8 * i))); }
    void i32(int32_t v) { u32(uint32_t(v)); }
    void f64(double v) {
        uint64_t b;
        std::memcpy(&b, &v, 8);
        u64(b);
    }
    void str4(const char* s) { raw(s, 4); }
};

struct ByteReader {
    const uint8_t* p = nullptr;
    size_t n = 0;
    size_t pos = 0;

    ByteReader(const uint8_t* data, size_t size) : p(data), n(size) {}
    explicit ByteReader(const std::vector<uint8_t>& v) : p(v.data()), n(v.size()) {}

    void need(size_t k) const {
        if (pos + k > n) fail("truncated data: need " + std::to_string(k) + " bytes at " +
                              std::to_string(pos) + "/" + std::to_string(n));
    }
    void raw(void* out, size_t k) {
        need(k);
        std::memcpy(out, p + pos, k);
        pos += k;
    }
    uint8_t u8() { need(1); return p[pos++]; }
    uint16_t u16() {
        need(2);
        uint16_t v = uint16_t(p[pos]) | uint16_t(p[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    int32_t i32() { return int32_t(u32()); }
    double f64() {
        uint64_t b = u64();
        double v;
        std::memcpy(&v, &b, 8);
        return v;
    }
    std::string str4() {
        need(4);
        std::string s(reinterpret_cast<const char*>(p + pos), 4);
        pos += 4;
        return s;
    }
    size_t remaining() const { return n - pos; }
};

void write_file(const std::string& path, const std::vector<uint8_t>& bytes);
std::vector<uint8_t> read_file(const std::string& path);

uint32_t crc32(const uint8_t* data, size_t n, uint32_t seed = 0);

struct MlpParams;
void write_mlp_f64(ByteWriter& w, const MlpParams& p);
MlpParams read_mlp_f64(ByteReader& r);

}  // namespace gsrd
