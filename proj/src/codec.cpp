#include "gsrd/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include "gsrd/binio.hpp"

namespace gsrd {

// ---------------------------------------------------------------------------
// half precision

uint16_t f16_from_f64(double v) {
    require(std::isfinite(v), "f16: non-finite value");
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    uint16_t sign = uint16_t((bits >> 48) & 0x8000u);
    int exp = int((bits >> 52) & 0x7FF);
    uint64_t mant = bits & 0xFFFFFFFFFFFFFull;
    if (exp == 0 && mant == 0) return sign;  // +-0
    if (exp == 0) return sign;               // double subnormals underflow to 0

    int e = exp - 1023;
    if (e >= 16) fail("f16: value out of half range");

    // significand with implicit leading 1, 53 bits
    uint64_t sig = (1ull << 52) | mant;
    int shift;
    bool subnormal = e < -14;
    if (subnormal)
        shift = 42 + (-14 - e);  // align to 2^-24 ulp
    else
        shift = 42;

    if (shift >= 63) return sign;  // far below the smallest subnormal

    uint64_t keep = sig >> shift;
    uint64_t rem = sig & ((1ull << shift) - 1);
    uint64_t half_ulp = 1ull << (shift - 1);
    if (rem > half_ulp || (rem == half_ulp && (keep & 1))) keep += 1;

    if (subnormal) {
        if (keep >= 1024) return uint16_t(sign | (1 << 10));  // rounded up to normal
        return uint16_t(sign | keep);
    }
    if (keep >= 2048) {  // mantissa overflow: exponent bumps
        keep >>= 1;
        e += 1;
        if (e >= 16) fail("f16: value out of half range");
    }
    return uint16_t(sign | uint16_t((e + 15) << 10) | uint16_t(keep & 0x3FF));
}

double f16_to_f64(uint16_t h) {
    int sign = (h >> 15) & 1;
    int exp = (h >> 10) & 0x1F;
    int mant = h & 0x3FF;
    double v;
    if (exp == 0)
        v = std::ldexp(double(mant), -24);
    else if (exp == 31)
        fail("f16: non-finite payload");
    else
        v = std::ldexp(double(mant + 1024), exp - 25);
    return sign ? -v : v;
}

std::vector<uint8_t> serialize_weights_half(const MlpParams& p) {
    ByteWriter w;
    w.u16(uint16_t(p.layers.size()));
    for (const auto& l : p.layers) {
        w.u16(uint16_t(l.W.rows));
        w.u16(uint16_t(l.W.cols));
        w.u8(uint8_t(l.act));
        for (double v : l.W.a) {
            require(!std::isnan(v), "serialize_weights_half: NaN weight");
            w.u16(f16_from_f64(v));
        }
        for (double v : l.b) {
            require(!std::isnan(v), "serialize_weights_half: NaN bias");
            w.u16(f16_from_f64(v));
        }
    }
    return std::move(w.bytes);
}

MlpParams deserialize_weights_half(std::span<const uint8_t> bytes) {
    ByteReader r(bytes.data(), bytes.size());
    MlpParams p;
    uint16_t n = r.u16();
    for (int i = 0; i < n; ++i) {
        MlpLayer l;
        int rows = r.u16(), cols = r.u16();
        uint8_t act = r.u8();
        require(act <= 3, "deserialize_weights_half: bad activation tag");
        l.act = Act(act);
        l.W = Mat(rows, cols);
        for (double& v : l.W.a) v = f16_to_f64(r.u16());
        l.b.resize(rows);
        for (double& v : l.b) v = f16_to_f64(r.u16());
        p.layers.push_back(std::move(l));
    }
    require(r.remaining() == 0, "deserialize_weights_half: trailing bytes");
    p.check_shapes();
    return p;
}

static MlpParams roundtrip_half(const MlpParams& p) {
    if (p.layers.empty()) return p;
    return deserialize_weights_half(serialize_weights_half(p));
}

HyperpriorModel quantize_model_half(const HyperpriorModel& m) {
    HyperpriorModel q = m;
    q.color_net = roundtrip_half(m.color_net);
    q.semantic_net = roundtrip_half(m.semantic_net);
    for (auto& c : q.carm) c = roundtrip_half(c);
    for (int i = 0; i < 4; ++i) q.log_q0[i] = f16_to_f64(f16_from_f64(m.log_q0[i]));
    return q;
}

// ---------------------------------------------------------------------------
// range coder (carry-less, byte-wise renormalization, 16-bit totals)

namespace {
constexpr uint32_t kTop = 1u << 24;
constexpr uint32_t kBot = 1u << 16;
constexpr uint32_t kTotal = 1u << 16;
}  // namespace

void RangeEncoder::renorm() {
    while ((low_ ^ (low_ + range_)) < kTop ||
           (range_ < kBot && ((range_ = (0u - low_) & (kBot - 1)), true))) {
        out_.push_back(uint8_t(low_ >> 24));
        low_ <<= 8;
        range_ <<= 8;
    }
}

void RangeEncoder::encode(uint32_t cum, uint32_t freq) {
    range_ /= kTotal;
    low_ += cum * range_;
    range_ *= freq;
    renorm();
}

void RangeEncoder::encode_bit(int bit) { encode(bit ? kTotal / 2 : 0, kTotal / 2); }

void RangeEncoder::encode_bits(uint64_t value, int n) {
    for (int i = n - 1; i >= 0; --i) encode_bit(int((value >> i) & 1));
}

void RangeEncoder::encode_eg2(uint64_t value) {
    require(value < (1ull << 40), "eg2: residual too large");
    uint64_t m = value + 4;
    int nbits = std::bit_width(m);
    for (int i = 0; i < nbits - 3; ++i) encode_bit(0);
    encode_bit(1);
    encode_bits(m & ((1ull << (nbits - 1)) - 1), nbits - 1);
}

std::vector<uint8_t> RangeEncoder::finish() {
    for (int i = 0; i < 4; ++i) {
        out_.push_back(uint8_t(low_ >> 24));
        low_ <<= 8;
    }
    return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : in_(bytes) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
    // reads past the layer end return zero; the per-layer value checksum
    // catches any resulting corruption
    if (pos_ >= in_.size()) return 0;
    return in_[pos_++];
}

void RangeDecoder::renorm() {
    while ((low_ ^ (low_ + range_)) < kTop ||
           (range_ < kBot && ((range_ = (0u - low_) & (kBot - 1)), true))) {
        code_ = (code_ << 8) | next_byte();
        low_ <<= 8;
        range_ <<= 8;
    }
}

uint32_t RangeDecoder::decode_freq() {
    range_ /= kTotal;
    uint32_t f = (code_ - low_) / range_;
    return std::min(f, kTotal - 1);
}

void RangeDecoder::decode_update(uint32_t cum, uint32_t freq) {
    low_ += cum * range_;
    range_ *= freq;
    renorm();
}

int RangeDecoder::decode_bit() {
    uint32_t f = decode_freq();
    int bit = f >= kTotal / 2;
    decode_update(bit ? kTotal / 2 : 0, kTotal / 2);
    return bit;
}

uint64_t RangeDecoder::decode_bits(int n) {
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 1) | uint64_t(decode_bit());
    return v;
}

uint64_t RangeDecoder::decode_eg2() {
    int zeros = 0;
    while (decode_bit() == 0) {
        ++zeros;
        require(zeros < 64, "eg2: malformed prefix");
    }
    uint64_t m = (1ull << (zeros + 2)) | decode_bits(zeros + 2);
    return m - 4;
}

// ---------------------------------------------------------------------------
// symbol tables

SymbolTable build_symbol_table(double mu, double sigma, double q) {
    require(sigma > 0 && q > 0, "build_symbol_table: sigma and q must be positive");
    constexpr int kMaxBins = 4096;

    int64_t k_lo = int64_t(std::ceil((mu - 12.0 * sigma) / q));
    int64_t k_hi = int64_t(std::floor((mu + 12.0 * sigma) / q));
    if (k_hi < k_lo) k_lo = k_hi = int64_t(std::llround(mu / q));
    if (k_hi - k_lo + 1 > kMaxBins) {
        int64_t center = int64_t(std::llround(mu / q));
        k_lo = center - kMaxBins / 2;
        k_hi = k_lo + kMaxBins - 1;
    }
    const int bins = int(k_hi - k_lo + 1);

    std::vector<double> w(size_t(bins) + 1);
    double sum = 0.0;
    for (int i = 0; i < bins; ++i) {
        w[i] = prob_mass((k_lo + i) * q, mu, sigma, q);
        sum += w[i];
    }
    w[bins] = std::max(1.0 - sum, 0.0) + 0x1p-32;  // escape
    double total = sum + w[bins];

    const int n = bins + 1;
    std::vector<uint32_t> counts(n);
    std::vector<double> rem(n);
    uint32_t assigned = 0;
    for (int i = 0; i < n; ++i) {
        double exact = w[i] / total * kTotal;
        counts[i] = uint32_t(exact);
        rem[i] = exact - counts[i];
        assigned += counts[i];
    }
    require(assigned <= kTotal, "build_symbol_table: scaling overflow");
    uint32_t deficit = kTotal - assigned;

    // largest remainder, ties toward lower index
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return rem[a] > rem[b]; });
    for (uint32_t d = 0; d < deficit; ++d) counts[order[d % n]] += 1;

    // every symbol needs a nonzero count; steal from the largest
    for (int i = 0; i < n; ++i) {
        if (counts[i] > 0) continue;
        int big = 0;
        for (int j = 1; j < n; ++j)
            if (counts[j] > counts[big]) big = j;
        require(counts[big] >= 2, "build_symbol_table: cannot balance counts");
        counts[big] -= 1;
        counts[i] = 1;
    }

    SymbolTable t;
    t.k_min = k_lo;
    t.n_bins = bins;
    t.cum.resize(size_t(n) + 1);
    t.cum[0] = 0;
    for (int i = 0; i < n; ++i) t.cum[i + 1] = t.cum[i] + counts[i];
    require(t.cum.back() == kTotal, "build_symbol_table: total must be 2^16");
    return t;
}

void encode_symbol(RangeEncoder& enc, const SymbolTable& t, int64_t k) {
    int idx = t.index_of(k);
    enc.encode(t.cum[idx], t.cum[idx + 1] - t.cum[idx]);
    if (idx == t.n_bins) {
        // escape: side bit + Exp-Golomb residual beyond the support
        if (k >= t.k_min + t.n_bins) {
            enc.encode_bit(1);
            enc.encode_eg2(uint64_t(k - (t.k_min + t.n_bins)));
        } else {
            enc.encode_bit(0);
            enc.encode_eg2(uint64_t(t.k_min - 1 - k));
        }
    }
}

int64_t decode_symbol(RangeDecoder& dec, const SymbolTable& t) {
    uint32_t f = dec.decode_freq();
    // binary search the cumulative table
    int lo = 0, hi = int(t.cum.size()) - 2;
    while (lo < hi) {
        int mid = (lo + hi + 1) / 2;
        if (t.cum[mid] <= f)
            lo = mid;
        else
            hi = mid - 1;
    }
    dec.decode_update(t.cum[lo], t.cum[lo + 1] - t.cum[lo]);
    if (lo < t.n_bins) return t.k_min + lo;
    int side = dec.decode_bit();
    uint64_t e = dec.decode_eg2();
    if (side) return t.k_min + t.n_bins + int64_t(e);
    return t.k_min - 1 - int64_t(e);
}

// ---------------------------------------------------------------------------
// bitstream

namespace {

constexpr uint16_t kStreamVersion = 1;
constexpr uint16_t kFlagSemantic = 1;
constexpr uint16_t kFlagCarm = 2;

struct Crc64Acc {
    uint32_t crc = 0;
    void add(int64_t k) {
        uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = uint8_t(uint64_t(k) >> (8 * i));
        crc = crc32(b, 8, crc);
    }
};

struct GridPos {
    uint16_t g[3];
    Vec3 norm() const { return {g[0] / 65535.0, g[1] / 65535.0, g[2] / 65535.0}; }
};

GridPos position_to_grid(const Vec3& p, const Aabb& bbox) {
    GridPos gp;
    Vec3 e = bbox.extent();
    for (int i = 0; i < 3; ++i) {
        double ext = e[i];
        double v = ext > 0 ? (p[i] - bbox.lo[i]) / ext : 0.0;
        if (v < -1e-9 || v > 1.0 + 1e-9)
            fail("encode: anchor position outside the scene bounding box; "
                 "recompute scene.bbox before encoding");
        gp.g[i] = uint16_t(std::lround(clamp01(v) * 65535.0));
    }
    return gp;
}

Vec3 grid_to_position(const GridPos& gp, const Aabb& bbox) {
    Vec3 e = bbox.extent();
    Vec3 n = gp.norm();
    return {bbox.lo.x + n.x * e.x, bbox.lo.y + n.y * e.y, bbox.lo.z + n.z * e.z};
}

std::vector<uint8_t> serialize_slot_geom_half(const AnchorScene& scene,
                                              const std::vector<int>& order) {
    ByteWriter w;
    for (int idx : order)
        for (const auto& s : scene.slot_geom[idx]) {
            w.u16(f16_from_f64(s.extent_raw.x));
            w.u16(f16_from_f64(s.extent_raw.y));
            w.u16(f16_from_f64(s.extent_raw.z));
            w.u16(f16_from_f64(s.rot.w));
            w.u16(f16_from_f64(s.rot.x));
            w.u16(f16_from_f64(s.rot.y));
            w.u16(f16_from_f64(s.rot.z));
        }
    return std::move(w.bytes);
}

void put_blob(ByteWriter& w, const std::vector<uint8_t>& blob) {
    w.u32(uint32_t(blob.size()));
    w.raw(blob.data(), blob.size());
}

std::vector<uint8_t> get_blob(ByteReader& r) {
    uint32_t n = r.u32();
    std::vector<uint8_t> b(n);
    r.raw(b.data(), n);
    return b;
}

}  // namespace

std::vector<int> encode_order(const AnchorScene& scene) {
    std::vector<GridPos> grids(scene.anchors.size());
    for (size_t i = 0; i < scene.anchors.size(); ++i)
        grids[i] = position_to_grid(scene.anchors[i].pos, scene.bbox);
    std::vector<int> order(scene.anchors.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const auto& ga = grids[a].g;
        const auto& gb = grids[b].g;
        if (ga[0] != gb[0]) return ga[0] < gb[0];
        if (ga[1] != gb[1]) return ga[1] < gb[1];
        return ga[2] < gb[2];
    });
    return order;
}

EncodeResult encode_scene(const AnchorScene& scene, const HyperpriorModel& model,
                          bool include_semantic) {
    scene.check();
    model.check();
    require(model.D_f == scene.D_f && model.K == scene.K,
            "encode_scene: model/scene shape mismatch");
    const bool semantic = include_semantic && model.has_semantic();

    HyperpriorModel mq = quantize_model_half(model);
    const std::vector<int> order = encode_order(scene);
    const int N = int(order.size());
    const int K = scene.K;
    const int gs = mq.group_size();

    // hard masks in coding order
    std::vector<uint8_t> mask_bits;
    std::vector<bool> surviving(N, false);
    {
        uint8_t acc = 0;
        int nb = 0;
        for (int i = 0; i < N; ++i) {
            const Anchor& a = scene.anchors[order[i]];
            for (int k = 0; k < K; ++k) {
                bool on = a.offset_mask_logits[k] >= 0.0;
                if (on) surviving[i] = true;
                acc |= uint8_t(on) << nb;
                if (++nb == 8) {
                    mask_bits.push_back(acc);
                    acc = 0;
                    nb = 0;
                }
            }
        }
        if (nb) mask_bits.push_back(acc);
    }

    std::vector<GridPos> grids(N);
    for (int i = 0; i < N; ++i)
        grids[i] = position_to_grid(scene.anchors[order[i]].pos, scene.bbox);

    BitstreamStats stats;
    Crc64Acc crc_color, crc_sem;

    // color layer
    RangeEncoder enc;
    for (int i = 0; i < N; ++i) {
        if (!surviving[i]) continue;
        const Anchor& a = scene.anchors[order[i]];
        Vec3 n = grids[i].norm();
        double xyz[3] = {n.x, n.y, n.z};
        Vec pe = positional_encoding(mq.enc, xyz);
        ColorPrediction base = predict_color(mq, pe);

        // anchor feature, group by group with CARM refinement
        CarmCoder coder(mq, pe, base);
        for (int g = 0; g < mq.groups; ++g) {
            EntropyParams ep = coder.params_for_group(g);
            Vec vals(gs);
            for (int c = 0; c < gs; ++c) {
                int64_t k = quantize_index(a.feature[g * gs + c], ep.q);
                SymbolTable t = build_symbol_table(ep.mu[c], ep.sigma[c], ep.q);
                encode_symbol(enc, t, k);
                stats.est_color_bits +=
                    -std::log2(prob_mass_floored(k * ep.q, ep.mu[c], ep.sigma[c], ep.q));
                crc_color.add(k);
                vals[c] = k * ep.q;
            }
            coder.push_decoded(g, vals);
        }

        // unmasked offsets
        double q_O = q_from_r(mq.q0(AttrType::Offset), base.r_O());
        for (int s = 0; s < K; ++s) {
            if (a.offset_mask_logits[s] < 0.0) continue;
            for (int j = 0; j < 3; ++j) {
                int c = 3 * s + j;
                double mu = base.mu_O()[c], sg = sigma_from_raw(base.sraw_O()[c]);
                int64_t k = quantize_index(a.offsets[s][j], q_O);
                SymbolTable t = build_symbol_table(mu, sg, q_O);
                encode_symbol(enc, t, k);
                stats.est_color_bits += -std::log2(prob_mass_floored(k * q_O, mu, sg, q_O));
                crc_color.add(k);
            }
        }

        // scaling
        double q_l = q_from_r(mq.q0(AttrType::Scaling), base.r_l());
        for (int c = 0; c < 6; ++c) {
            double mu = base.mu_l()[c], sg = sigma_from_raw(base.sraw_l()[c]);
            int64_t k = quantize_index(a.scaling_raw[c], q_l);
            SymbolTable t = build_symbol_table(mu, sg, q_l);
            encode_symbol(enc, t, k);
            stats.est_color_bits += -std::log2(prob_mass_floored(k * q_l, mu, sg, q_l));
            crc_color.add(k);
        }
    }
    std::vector<uint8_t> color_bytes = enc.finish();

    // semantic layer
    std::vector<uint8_t> semantic_bytes;
    if (semantic) {
        RangeEncoder senc;
        for (int i = 0; i < N; ++i) {
            if (!surviving[i]) continue;
            const Anchor& a = scene.anchors[order[i]];
            Vec3 n = grids[i].norm();
            double xyz[3] = {n.x, n.y, n.z};
            Vec pe = positional_encoding(mq.enc, xyz);
            Vec out = mlp_forward(mq.semantic_net, pe);
            double q_s = q_from_r(mq.q0(AttrType::Semantic), out[12]);
            for (int c = 0; c < 6; ++c) {
                double mu = out[c], sg = sigma_from_raw(out[6 + c]);
                int64_t k = quantize_index(a.semantic[c], q_s);
                SymbolTable t = build_symbol_table(mu, sg, q_s);
                encode_symbol(senc, t, k);
                stats.est_semantic_bits += -std::log2(prob_mass_floored(k * q_s, mu, sg, q_s));
                crc_sem.add(k);
            }
        }
        semantic_bytes = senc.finish();
    }

    // header
    ByteWriter w;
    w.str4("GSRD");
    w.u16(kStreamVersion);
    uint16_t flags = 0;
    if (semantic) flags |= kFlagSemantic;
    if (mq.carm_enabled) flags |= kFlagCarm;
    w.u16(flags);
    w.u32(uint32_t(N));
    w.u16(uint16_t(K));
    w.u16(uint16_t(scene.D_f));
    w.u16(uint16_t(mq.groups));
    w.u16(uint16_t(mq.enc.freqs));
    for (int i = 0; i < 3; ++i) w.f64(scene.bbox.lo[i]);
    for (int i = 0; i < 3; ++i) w.f64(scene.bbox.hi[i]);
    w.u64(color_bytes.size());
    w.u64(semantic_bytes.size());
    w.u32(crc_color.crc);
    w.u32(crc_sem.crc);

    put_blob(w, serialize_weights_half(scene.decoder));
    put_blob(w, serialize_weights_half(model.color_net));
    {
        ByteWriter cw;
        cw.u16(uint16_t(model.carm.size()));
        for (const auto& c : model.carm) {
            auto b = serialize_weights_half(c);
            cw.u32(uint32_t(b.size()));
            cw.raw(b.data(), b.size());
        }
        put_blob(w, cw.bytes);
    }
    put_blob(w, semantic ? serialize_weights_half(model.semantic_net) : std::vector<uint8_t>{});
    {
        ByteWriter bw;
        for (double lq : model.log_q0) bw.u16(f16_from_f64(lq));
        put_blob(w, bw.bytes);
    }
    put_blob(w, serialize_slot_geom_half(scene, order));

    for (int i = 0; i < N; ++i)
        for (int j = 0; j < 3; ++j) w.u16(grids[i].g[j]);
    w.raw(mask_bits.data(), mask_bits.size());

    stats.header_bytes = w.bytes.size();
    stats.color_bytes = color_bytes.size();
    stats.semantic_bytes = semantic_bytes.size();

    EncodeResult res;
    res.bytes = std::move(w.bytes);
    res.bytes.insert(res.bytes.end(), color_bytes.begin(), color_bytes.end());
    res.bytes.insert(res.bytes.end(), semantic_bytes.begin(), semantic_bytes.end());
    res.stats = stats;
    return res;
}

DecodeResult decode_scene(std::span<const uint8_t> bytes, Layer up_to) {
    ByteReader r(bytes.data(), bytes.size());
    require(r.str4() == "GSRD", "decode_scene: bad magic");
    uint16_t ver = r.u16();
    require(ver == kStreamVersion, "decode_scene: unsupported version " + std::to_string(ver));
    uint16_t flags = r.u16();
    const bool has_semantic = flags & kFlagSemantic;
    const bool carm_enabled = flags & kFlagCarm;
    const int N = int(r.u32());
    const int K = r.u16();
    const int D_f = r.u16();
    const int groups = r.u16();
    const int freqs = r.u16();

    DecodeResult res;
    res.has_semantic = has_semantic;
    AnchorScene& scene = res.scene;
    scene.K = K;
    scene.D_f = D_f;
    for (int i = 0; i < 3; ++i) scene.bbox.lo[i] = r.f64();
    for (int i = 0; i < 3; ++i) scene.bbox.hi[i] = r.f64();
    uint64_t color_len = r.u64();
    uint64_t semantic_len = r.u64();
    uint32_t crc_color_expect = r.u32();
    uint32_t crc_sem_expect = r.u32();

    scene.decoder = deserialize_weights_half(get_blob(r));

    HyperpriorModel& m = res.model;
    m.D_f = D_f;
    m.K = K;
    m.groups = groups;
    m.carm_enabled = carm_enabled;
    m.enc = PosEncoding{3, freqs};
    m.color_net = deserialize_weights_half(get_blob(r));
    {
        auto blob = get_blob(r);
        ByteReader cr(blob.data(), blob.size());
        uint16_t n = cr.u16();
        for (int i = 0; i < n; ++i) {
            uint32_t len = cr.u32();
            std::vector<uint8_t> b(len);
            cr.raw(b.data(), len);
            m.carm.push_back(deserialize_weights_half(b));
        }
    }
    {
        auto blob = get_blob(r);
        if (!blob.empty()) m.semantic_net = deserialize_weights_half(blob);
    }
    {
        auto blob = get_blob(r);
        ByteReader br(blob.data(), blob.size());
        for (int i = 0; i < 4; ++i) m.log_q0[i] = f16_to_f64(br.u16());
    }
    m.check();
    const int gs = m.group_size();

    std::vector<std::vector<SlotGeom>> slot_geom(N);
    {
        auto blob = get_blob(r);
        ByteReader gr(blob.data(), blob.size());
        for (int i = 0; i < N; ++i) {
            slot_geom[i].resize(K);
            for (int k = 0; k < K; ++k) {
                SlotGeom& s = slot_geom[i][k];
                s.extent_raw = {f16_to_f64(gr.u16()), f16_to_f64(gr.u16()),
                                f16_to_f64(gr.u16())};
                s.rot.w = f16_to_f64(gr.u16());
                s.rot.x = f16_to_f64(gr.u16());
                s.rot.y = f16_to_f64(gr.u16());
                s.rot.z = f16_to_f64(gr.u16());
            }
        }
    }

    std::vector<GridPos> grids(N);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < 3; ++j) grids[i].g[j] = r.u16();

    std::vector<std::vector<bool>> masks(N, std::vector<bool>(K, false));
    std::vector<bool> surviving(N, false);
    {
        size_t nbits = size_t(N) * K;
        size_t nbytes = (nbits + 7) / 8;
        r.need(nbytes);
        for (size_t b = 0; b < nbits; ++b) {
            bool on = (bytes[r.pos + b / 8] >> (b % 8)) & 1;
            masks[b / K][b % K] = on;
            if (on) surviving[b / K] = true;
        }
        r.pos += nbytes;
    }

    const size_t header_end = r.pos;
    res.stats.header_bytes = header_end;
    res.stats.color_bytes = size_t(color_len);
    res.stats.semantic_bytes = size_t(semantic_len);
    require(header_end + color_len <= bytes.size(), "decode_scene: truncated color layer");

    // scene skeleton
    scene.anchors.resize(N);
    scene.slot_geom = std::move(slot_geom);
    for (int i = 0; i < N; ++i) {
        Anchor& a = scene.anchors[i];
        a.pos = grid_to_position(grids[i], scene.bbox);
        a.feature.assign(D_f, 0.0);
        a.offsets.assign(K, Vec3{0, 0, 0});
        a.scaling_raw.fill(0.0);
        a.semantic.assign(6, 0.0);
        a.offset_mask_logits.resize(K);
        for (int k = 0; k < K; ++k) a.offset_mask_logits[k] = masks[i][k] ? 1.0 : -1.0;
        a.gt_instance = 0;
    }

    // color layer
    {
        Crc64Acc crc;
        RangeDecoder dec(bytes.subspan(header_end, size_t(color_len)));
        for (int i = 0; i < N; ++i) {
            if (!surviving[i]) continue;
            Anchor& a = scene.anchors[i];
            Vec3 n = grids[i].norm();
            double xyz[3] = {n.x, n.y, n.z};
            Vec pe = positional_encoding(m.enc, xyz);
            ColorPrediction base = predict_color(m, pe);

            CarmCoder coder(m, pe, base);
            for (int g = 0; g < m.groups; ++g) {
                EntropyParams ep = coder.params_for_group(g);
                Vec vals(gs);
                for (int c = 0; c < gs; ++c) {
                    SymbolTable t = build_symbol_table(ep.mu[c], ep.sigma[c], ep.q);
                    int64_t k = decode_symbol(dec, t);
                    crc.add(k);
                    vals[c] = k * ep.q;
                    a.feature[g * gs + c] = vals[c];
                }
                coder.push_decoded(g, vals);
            }

            double q_O = q_from_r(m.q0(AttrType::Offset), base.r_O());
            for (int s = 0; s < K; ++s) {
                if (!masks[i][s]) continue;
                for (int j = 0; j < 3; ++j) {
                    int c = 3 * s + j;
                    SymbolTable t = build_symbol_table(base.mu_O()[c],
                                                       sigma_from_raw(base.sraw_O()[c]), q_O);
                    int64_t k = decode_symbol(dec, t);
                    crc.add(k);
                    a.offsets[s][j] = k * q_O;
                }
            }

            double q_l = q_from_r(m.q0(AttrType::Scaling), base.r_l());
            for (int c = 0; c < 6; ++c) {
                SymbolTable t = build_symbol_table(base.mu_l()[c],
                                                   sigma_from_raw(base.sraw_l()[c]), q_l);
                int64_t k = decode_symbol(dec, t);
                crc.add(k);
                a.scaling_raw[c] = k * q_l;
            }
        }
        require(crc.crc == crc_color_expect,
                "decode_scene: color layer checksum mismatch (corrupt stream or "
                "mismatched tables)");
    }

    if (up_to == Layer::Semantic && has_semantic) {
        require(header_end + color_len + semantic_len <= bytes.size(),
                "decode_scene: truncated semantic layer");
        Crc64Acc crc;
        RangeDecoder dec(bytes.subspan(header_end + color_len, size_t(semantic_len)));
        for (int i = 0; i < N; ++i) {
            if (!surviving[i]) continue;
            Anchor& a = scene.anchors[i];
            Vec3 n = grids[i].norm();
            double xyz[3] = {n.x, n.y, n.z};
            Vec pe = positional_encoding(m.enc, xyz);
            Vec out = mlp_forward(m.semantic_net, pe);
            double q_s = q_from_r(m.q0(AttrType::Semantic), out[12]);
            for (int c = 0; c < 6; ++c) {
                SymbolTable t = build_symbol_table(out[c], sigma_from_raw(out[6 + c]), q_s);
                int64_t k = decode_symbol(dec, t);
                crc.add(k);
                a.semantic[c] = k * q_s;
            }
        }
        require(crc.crc == crc_sem_expect,
                "decode_scene: semantic layer checksum mismatch (corrupt stream or "
                "mismatched tables)");
    }
    return res;
}

// ---------------------------------------------------------------------------
// hyperprior container

void save_models(const std::string& path, const HyperpriorModel& m) {
    ByteWriter w;
    w.str4("GSHM");
    w.u16(1);
    w.u16(uint16_t(m.D_f));
    w.u16(uint16_t(m.K));
    w.u16(uint16_t(m.groups));
    w.u16(uint16_t(m.enc.freqs));
    w.u8(m.carm_enabled ? 1 : 0);
    w.u8(m.has_semantic() ? 1 : 0);
    for (double lq : m.log_q0) w.f64(lq);
    write_mlp_f64(w, m.color_net);
    w.u16(uint16_t(m.carm.size()));
    for (const auto& c : m.carm) write_mlp_f64(w, c);
    if (m.has_semantic()) write_mlp_f64(w, m.semantic_net);
    write_file(path, w.bytes);
}

HyperpriorModel load_models(const std::string& path) {
    auto bytes = read_file(path);
    ByteReader r(bytes);
    require(r.str4() == "GSHM", "load_models: bad magic in " + path);
    uint16_t ver = r.u16();
    require(ver == 1, "load_models: unsupported version");
    HyperpriorModel m;
    m.D_f = r.u16();
    m.K = r.u16();
    m.groups = r.u16();
    m.enc = PosEncoding{3, int(r.u16())};
    m.carm_enabled = r.u8() != 0;
    bool sem = r.u8() != 0;
    for (double& lq : m.log_q0) lq = r.f64();
    m.color_net = read_mlp_f64(r);
    uint16_t nc = r.u16();
    for (int i = 0; i < nc; ++i) m.carm.push_back(read_mlp_f64(r));
    if (sem) m.semantic_net = read_mlp_f64(r);
    require(r.remaining() == 0, "load_models: trailing bytes");
    m.check();
    return m;
}

}  // namespace gsrd
