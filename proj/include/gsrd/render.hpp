#pragma once

#include <optional>
#include <span>

#include "gsrd/image.hpp"
#include "gsrd/scene.hpp"

namespace gsrd {

struct Footprint {
    double cx = 0, cy = 0;           // 2D mean, px
    double cxx = 0, cxy = 0, cyy = 0;  // 2D covariance, px^2 (regularized)
    double depth = 0;
    int prim = -1;
};

// perspective projection with local affine covariance transfer; nullopt when
// behind the camera or fully off-screen beyond 3 sigma
std::optional<Footprint> project(const Primitive& p, const Camera& cam);

struct Contrib {
    int32_t prim;
    double g;  // alpha * exp(-0.5 d' Sigma^-1 d), capped below 1
    double w;  // g * transmittance at arrival
};

// per-pixel ordered contribution lists in CSR form
struct ContribLists {
    int h = 0, w = 0;
    std::vector<uint32_t> start;  // h*w+1
    std::vector<Contrib> items;

    std::span<const Contrib> pixel(int y, int x) const {
        size_t p = size_t(y) * w + x;
        return {items.data() + start[p], items.data() + start[p + 1]};
    }
};

struct FeatureMap {
    int h = 0, w = 0, c = 0;
    Vec data;  // interleaved
    ContribLists lists;
    uint64_t fingerprint = 0;  // guards forward/backward pairing

    double& at(int y, int x, int ch) { return data[(size_t(y) * w + x) * c + ch]; }
    double at(int y, int x, int ch) const { return data[(size_t(y) * w + x) * c + ch]; }
};

// geometry-only raster lists: per pixel, depth-ordered (prim, g_geo) entries
// where g_geo excludes opacity. Reused across iterations while geometry is
// frozen.
struct GeomEntry {
    int32_t prim;
    double g_geo;
};

struct GeomLists {
    int h = 0, w = 0;
    std::vector<uint32_t> start;
    std::vector<GeomEntry> items;
    size_t n_prims = 0;
};

GeomLists raster_geometry(std::span<const Primitive> prims, const Camera& cam);

// front-to-back compositing of per-prim channel vectors with per-prim alphas;
// channels is n_prims x n_ch row-major. Fills data + contribution lists.
FeatureMap composite(const GeomLists& geom, std::span<const double> alphas,
                     std::span<const double> channels, int n_ch);

struct CompositeGrads {
    Vec d_channels;  // n_prims x n_ch
    Vec d_alphas;    // n_prims
};

CompositeGrads composite_backward(const GeomLists& geom, std::span<const double> alphas,
                                  std::span<const double> channels, int n_ch,
                                  const FeatureMap& fm, std::span<const double> grad_image);

enum class Channels { Color, Semantic, Both };

struct RenderOutput {
    FeatureMap color;
    FeatureMap semantic;
};

// masked primitives are excluded entirely
RenderOutput rasterize(std::span<const Primitive> prims, const Camera& cam, Channels what);

struct RasterGrads {
    Vec d_color;     // n_prims x 3
    Vec d_semantic;  // n_prims x 6
    Vec d_alpha;     // n_prims
};

// grad_image matches fm's channel count; throws if fm does not correspond to
// a forward pass over these primitives
RasterGrads rasterize_backward(const FeatureMap& fm, std::span<const double> grad_image,
                               std::span<const Primitive> prims, Channels what);

uint64_t prim_fingerprint(std::span<const Primitive> prims, Channels what);

// 10 log10(1/MSE); identical images give +inf (cap at report time)
double psnr(const Image& a, const Image& b);
double psnr_capped(const Image& a, const Image& b, double cap = 99.0);

// mean SSIM, 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2,
// per-channel maps averaged; windows renormalize at borders
double ssim(const Image& a, const Image& b);

// also returns d(mean SSIM)/d a
double ssim_with_grad(const Image& a, const Image& b, Vec& grad_a);

Image feature_map_to_image(const FeatureMap& fm);

}  // namespace gsrd
