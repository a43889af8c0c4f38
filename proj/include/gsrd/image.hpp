#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsrd/common.hpp"

namespace gsrd {

// channel-interleaved H x W x C image, values nominally in [0,1]
struct Image {
    int h = 0, w = 0, c = 0;
    Vec px;

    Image() = default;
    Image(int h_, int w_, int c_) : h(h_), w(w_), c(c_), px(size_t(h_) * w_ * c_, 0.0) {}

    double& at(int y, int x, int ch) { return px[(size_t(y) * w + x) * c + ch]; }
    double at(int y, int x, int ch) const { return px[(size_t(y) * w + x) * c + ch]; }
    size_t size() const { return px.size(); }
};

// one view's disjoint binary instance masks plus provenance
struct MaskSet {
    int h = 0, w = 0;
    std::vector<std::vector<uint8_t>> masks;  // each H*W, values 0/1
    std::vector<int> instance_ids;            // GT instance id per mask
    std::string provenance = "synthetic-gt";

    int count() const { return int(masks.size()); }
};

void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

// raw f64 planar dump: "GSF8", h, w, c (u32 each, LE), then doubles plane by plane
void write_f64_dump(const std::string& path, const Image& img);
Image read_f64_dump(const std::string& path);

}  // namespace gsrd
