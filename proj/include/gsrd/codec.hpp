#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gsrd/hyperprior.hpp"
#include "gsrd/scene.hpp"

namespace gsrd {

// IEEE 754 half precision, round to nearest even; exact on the way back
uint16_t f16_from_f64(double v);
double f16_to_f64(uint16_t h);

// MLP weights at half precision; NaN weights are rejected
std::vector<uint8_t> serialize_weights_half(const MlpParams& p);
MlpParams deserialize_weights_half(std::span<const uint8_t> bytes);

// the model the coder actually uses: every learnable passed through f16
HyperpriorModel quantize_model_half(const HyperpriorModel& m);

// integer CDF over a clamped symbol support plus one escape symbol.
// Total frequency is exactly 2^16 and every symbol has count >= 1.
struct SymbolTable {
    int64_t k_min = 0;   // first in-support symbol (multiples of q)
    int n_bins = 0;      // in-support bins; escape sits at index n_bins
    std::vector<uint32_t> cum;  // n_bins + 2 entries, cum.front()=0, cum.back()=65536

    int index_of(int64_t k) const {
        if (k < k_min || k >= k_min + n_bins) return n_bins;  // escape
        return int(k - k_min);
    }
};

// support covers mu +- 12 sigma in steps of q, capped at 4096 bins around the
// mean; masses scale by largest remainder with deterministic ties
SymbolTable build_symbol_table(double mu, double sigma, double q);

class RangeEncoder {
public:
    void encode(uint32_t cum, uint32_t freq);  // total fixed at 2^16
    void encode_bit(int bit);
    void encode_bits(uint64_t value, int n);   // MSB first
    void encode_eg2(uint64_t value);           // order-2 Exp-Golomb
    std::vector<uint8_t> finish();

private:
    void renorm();
    uint32_t low_ = 0;
    uint32_t range_ = 0xFFFFFFFFu;
    std::vector<uint8_t> out_;
};

class RangeDecoder {
public:
    explicit RangeDecoder(std::span<const uint8_t> bytes);
    uint32_t decode_freq();                      // current scaled frequency in [0, 2^16)
    void decode_update(uint32_t cum, uint32_t freq);
    int decode_bit();
    uint64_t decode_bits(int n);
    uint64_t decode_eg2();
    size_t consumed() const { return pos_; }

private:
    void renorm();
    uint8_t next_byte();
    std::span<const uint8_t> in_;
    size_t pos_ = 0;
    uint32_t low_ = 0;
    uint32_t code_ = 0;
    uint32_t range_ = 0xFFFFFFFFu;
};

void encode_symbol(RangeEncoder& enc, const SymbolTable& t, int64_t k);
int64_t decode_symbol(RangeDecoder& dec, const SymbolTable& t);

enum class Layer { Color, Semantic };

struct BitstreamStats {
    size_t header_bytes = 0;
    size_t color_bytes = 0;
    size_t semantic_bytes = 0;
    double est_color_bits = 0.0;     // model bits at the quantized values
    double est_semantic_bits = 0.0;
    size_t total_bytes() const { return header_bytes + color_bytes + semantic_bytes; }
};

struct EncodeResult {
    std::vector<uint8_t> bytes;
    BitstreamStats stats;
};

// progressive bitstream: header + color layer + optional semantic layer.
// Anchors are sorted by quantized position; fully masked anchors are skipped
// in both layers; the encoder re-reads its own half-precision weights so the
// decoder rebuilds identical symbol tables.
EncodeResult encode_scene(const AnchorScene& scene, const HyperpriorModel& model,
                          bool include_semantic);

struct DecodeResult {
    AnchorScene scene;        // quantized attributes; gt labels absent
    HyperpriorModel model;    // the dequantized half-precision copy
    BitstreamStats stats;
    bool has_semantic = false;
};

DecodeResult decode_scene(std::span<const uint8_t> bytes, Layer up_to = Layer::Semantic);

// deterministic coding order used by encode_scene (sort by quantized position,
// stable by original index)
std::vector<int> encode_order(const AnchorScene& scene);

// full-precision hyperprior container ("GSHM") for train -> encode handoff
void save_models(const std::string& path, const HyperpriorModel& m);
HyperpriorModel load_models(const std::string& path);

}  // namespace gsrd
