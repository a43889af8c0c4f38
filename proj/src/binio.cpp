#include "gsrd/binio.hpp"

#include <array>
#include <fstream>

#include "gsrd/ndmath.hpp"

namespace gsrd {

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    require(f.good(), "write failed: " + path);
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    require(f.good(), "cannot open: " + path);
    std::streamsize n = f.tellg();
    f.seekg(0);
    std::vector<uint8_t> bytes(static_cast<size_t>(n), 0);
    f.read(reinterpret_cast<char*>(bytes.data()), n);
    require(f.good(), "read failed: " + path);
    return bytes;
}

namespace {

std::array<uint32_t, 256> make_crc_table() {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
        uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        t[i] = c;
    }
    return t;
}

}  // namespace

uint32_t crc32(const uint8_t* data, size_t n, uint32_t seed) {
    static const auto table = make_crc_table();
    uint32_t c = seed ^ 0xFFFFFFFFu;
    for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

void write_mlp_f64(ByteWriter& w, const MlpParams& p) {
    w.u16(uint16_t(p.layers.size()));
    for (const auto& l : p.layers) {
        w.u16(uint16_t(l.W.rows));
        w.u16(uint16_t(l.W.cols));
        w.u8(uint8_t(l.act));
        for (double v : l.W.a) w.f64(v);
        for (double v : l.b) w.f64(v);
    }
}

MlpParams read_mlp_f64(ByteReader& r) {
    MlpParams p;
    uint16_t n = r.u16();
    for (int i = 0; i < n; ++i) {
        MlpLayer l;
        int rows = r.u16(), cols = r.u16();
        uint8_t act = r.u8();
        require(act <= 3, "mlp io: bad activation tag");
        l.act = Act(act);
        l.W = Mat(rows, cols);
        for (double& v : l.W.a) v = r.f64();
        l.b.resize(rows);
        for (double& v : l.b) v = r.f64();
        p.layers.push_back(std::move(l));
    }
    p.check_shapes();
    return p;
}

}  // namespace gsrd
