#include "gsrd/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace gsrd {

namespace {

constexpr double kCovFloor = 0.3;       // px^2 added to the 2D covariance diagonal
constexpr double kNearPlane = 1e-2;
constexpr double kEarlyExitT = 1e-4;
constexpr double kGeomCut = 1e-12;      // drop geometry weights below this
constexpr double kAlphaCap = 0.9999;    // cap on per-sample blend opacity

}  // namespace

std::optional<Footprint> project(const Primitive& p, const Camera& cam) {
    Vec3 xc = cam.R * p.mu + cam.t;
    if (xc.z < kNearPlane) return std::nullopt;

    const double fl = cam.focal;
    const double inv_z = 1.0 / xc.z;
    double u = fl * xc.x * inv_z + 0.5 * cam.width;
    double v = fl * xc.y * inv_z + 0.5 * cam.height;

    // Sigma_cam = Rc Rq diag(S^2) Rq' Rc'
    Mat3 Rq = p.rot.to_matrix();
    Mat3 M = cam.R * Rq;
    Mat3 S2 = Mat3::identity();
    S2(0, 0) = p.extent.x * p.extent.x;
    S2(1, 1) = p.extent.y * p.extent.y;
    S2(2, 2) = p.extent.z * p.extent.z;
    Mat3 cov_cam = M * S2 * M.transposed();

    // local affine Jacobian of (u,v) at xc
    double j00 = fl * inv_z, j02 = -fl * xc.x * inv_z * inv_z;
    double j11 = fl * inv_z, j12 = -fl * xc.y * inv_z * inv_z;

    auto row = [&](int r, double a, double b, double c) {
        return a * cov_cam(0, r) + b * cov_cam(1, r) + c * cov_cam(2, r);
    };
    // J Sigma J' for J = [[j00,0,j02],[0,j11,j12]]
    double t0 = row(0, j00, 0, j02), t1 = row(1, j00, 0, j02), t2 = row(2, j00, 0, j02);
    double cxx = j00 * t0 + j02 * t2 + kCovFloor;
    double cxy = j11 * t1 + j12 * t2;
    double cyy = j11 * row(1, 0, j11, j12) + j12 * row(2, 0, j11, j12) + kCovFloor;

    double sx = 3.0 * std::sqrt(cxx), sy = 3.0 * std::sqrt(cyy);
    if (u + sx < 0 || u - sx > cam.width || v + sy < 0 || v - sy > cam.height)
        return std::nullopt;

    Footprint f;
    f.cx = u;
    f.cy = v;
    f.cxx = cxx;
    f.cxy = cxy;
    f.cyy = cyy;
    f.depth = xc.z;
    return f;
}

GeomLists raster_geometry(std::span<const Primitive> prims, const Camera& cam) {
    struct Fp {
        Footprint f;
        int prim;
    };
    std::vector<Fp> fps;
    fps.reserve(prims.size());
    for (size_t i = 0; i < prims.size(); ++i) {
        auto f = project(prims[i], cam);
        if (f) fps.push_back({*f, int(i)});
    }
    std::sort(fps.begin(), fps.end(), [](const Fp& a, const Fp& b) {
        if (a.f.depth != b.f.depth) return a.f.depth < b.f.depth;
        return a.prim < b.prim;
    });

    const int W = cam.width, H = cam.height;
    GeomLists out;
    out.h = H;
    out.w = W;
    out.n_prims = prims.size();

    struct Entry {
        int32_t prim;
        double g;
    };
    // two passes: count per pixel, then fill in depth order
    std::vector<uint32_t> count(size_t(H) * W, 0);

    auto visit = [&](auto&& fn) {
        for (const auto& fp : fps) {
            const Footprint& f = fp.f;
            double det = f.cxx * f.cyy - f.cxy * f.cxy;
            if (det <= 0) continue;
            double ia = f.cyy / det, ib = -f.cxy / det, ic = f.cxx / det;
            double sx = 3.0 * std::sqrt(f.cxx), sy = 3.0 * std::sqrt(f.cyy);
            int x0 = std::max(0, int(std::floor(f.cx - sx)));
            int x1 = std::min(W - 1, int(std::ceil(f.cx + sx)));
            int y0 = std::max(0, int(std::floor(f.cy - sy)));
            int y1 = std::min(H - 1, int(std::ceil(f.cy + sy)));
            for (int y = y0; y <= y1; ++y) {
                double dy = (y + 0.5) - f.cy;
                for (int x = x0; x <= x1; ++x) {
                    double dx = (x + 0.5) - f.cx;
                    double power = -0.5 * (ia * dx * dx + 2.0 * ib * dx * dy + ic * dy * dy);
                    if (power < -30.0) continue;
                    double g = std::exp(power);
                    if (g < kGeomCut) continue;
                    fn(y, x, fp.prim, g);
                }
            }
        }
    };

    visit([&](int y, int x, int, double) { count[size_t(y) * W + x]++; });

    out.start.assign(size_t(H) * W + 1, 0);
    for (size_t i = 0; i < count.size(); ++i) out.start[i + 1] = out.start[i] + count[i];
    out.items.resize(out.start.back());

    std::vector<uint32_t> cursor(out.start.begin(), out.start.end() - 1);
    visit([&](int y, int x, int prim, double g) {
        out.items[cursor[size_t(y) * W + x]++] = {int32_t(prim), g};
    });
    return out;
}

FeatureMap composite(const GeomLists& geom, std::span<const double> alphas,
                     std::span<const double> channels, int n_ch) {
    require(alphas.size() == geom.n_prims, "composite: alpha count mismatch");
    require(channels.size() == geom.n_prims * size_t(n_ch), "composite: channel count mismatch");

    FeatureMap fm;
    fm.h = geom.h;
    fm.w = geom.w;
    fm.c = n_ch;
    fm.data.assign(size_t(geom.h) * geom.w * n_ch, 0.0);
    fm.lists.h = geom.h;
    fm.lists.w = geom.w;
    fm.lists.start.assign(size_t(geom.h) * geom.w + 1, 0);
    fm.lists.items.reserve(geom.items.size());

    const size_t npx = size_t(geom.h) * geom.w;
    for (size_t p = 0; p < npx; ++p) {
        double T = 1.0;
        double* out = &fm.data[p * n_ch];
        for (uint32_t k = geom.start[p]; k < geom.start[p + 1]; ++k) {
            const GeomEntry& e = geom.items[k];
            double g = alphas[e.prim] * e.g_geo;
            if (g < kGeomCut) continue;
            if (g > kAlphaCap) g = kAlphaCap;
            double w = g * T;
            const double* ch = &channels[size_t(e.prim) * n_ch];
            for (int c = 0; c < n_ch; ++c) out[c] += ch[c] * w;
            fm.lists.items.push_back({e.prim, g, w});
            T *= (1.0 - g);
            if (T < kEarlyExitT) break;
        }
        fm.lists.start[p + 1] = uint32_t(fm.lists.items.size());
    }
    return fm;
}

CompositeGrads composite_backward(const GeomLists& geom, std::span<const double> alphas,
                                  std::span<const double> channels, int n_ch,
                                  const FeatureMap& fm, std::span<const double> grad_image) {
    require(fm.c == n_ch && fm.h == geom.h && fm.w == geom.w,
            "composite_backward: shape mismatch");
    require(grad_image.size() == fm.data.size(), "composite_backward: grad size mismatch");

    CompositeGrads g;
    g.d_channels.assign(geom.n_prims * size_t(n_ch), 0.0);
    g.d_alphas.assign(geom.n_prims, 0.0);

    const size_t npx = size_t(geom.h) * geom.w;
    std::vector<double> total(n_ch), prefix(n_ch);
    for (size_t p = 0; p < npx; ++p) {
        uint32_t k0 = fm.lists.start[p], k1 = fm.lists.start[p + 1];
        if (k0 == k1) continue;
        const double* gpx = &grad_image[p * n_ch];

        // totals of c_j g_j T_j per channel over the stored list
        std::fill(total.begin(), total.end(), 0.0);
        for (uint32_t k = k0; k < k1; ++k) {
            const Contrib& e = fm.lists.items[k];
            const double* ch = &channels[size_t(e.prim) * n_ch];
            for (int c = 0; c < n_ch; ++c) total[c] += ch[c] * e.w;
        }

        std::fill(prefix.begin(), prefix.end(), 0.0);
        double T = 1.0;
        for (uint32_t k = k0; k < k1; ++k) {
            const Contrib& e = fm.lists.items[k];
            const double* ch = &channels[size_t(e.prim) * n_ch];
            double* dch = &g.d_channels[size_t(e.prim) * n_ch];

            // d pixel / d g = c*T - (suffix accumulation)/(1-g)
            double dg = 0.0;
            for (int c = 0; c < n_ch; ++c) {
                double contrib = ch[c] * e.w;
                prefix[c] += contrib;
                dch[c] += e.w * gpx[c];
                double suffix = total[c] - prefix[c];
                dg += gpx[c] * (ch[c] * T - suffix / (1.0 - e.g));
            }
            // g = alpha * g_geo; recover g_geo from the stored value
            double raw = alphas[e.prim] > 0 ? e.g / alphas[e.prim] : 0.0;
            if (e.g < kAlphaCap)  // cap region has zero derivative
                g.d_alphas[e.prim] += dg * raw;
            T *= (1.0 - e.g);
        }
    }
    return g;
}

uint64_t prim_fingerprint(std::span<const Primitive> prims, Channels what) {
    // FNV-1a over the fields that feed the forward pass
    uint64_t h = 1469598103934665603ull;
    auto mix = [&](double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        h ^= bits;
        h *= 1099511628211ull;
    };
    mix(double(prims.size()));
    mix(double(int(what)));
    for (const auto& p : prims) {
        mix(p.mu.x); mix(p.mu.y); mix(p.mu.z);
        mix(p.alpha);
        mix(p.masked ? 1.0 : 0.0);
        if (what != Channels::Semantic) {
            mix(p.color.x); mix(p.color.y); mix(p.color.z);
        }
        if (what != Channels::Color)
            for (double s : p.semantic) mix(s);
    }
    return h;
}

namespace {

std::vector<Primitive> visible(std::span<const Primitive> prims) {
    std::vector<Primitive> v;
    v.reserve(prims.size());
    for (const auto& p : prims)
        if (!p.masked) v.push_back(p);
    return v;
}

Vec gather_channels(std::span<const Primitive> prims, Channels what) {
    int n_ch = what == Channels::Color ? 3 : 6;
    Vec ch(prims.size() * n_ch);
    for (size_t i = 0; i < prims.size(); ++i) {
        if (what == Channels::Color) {
            ch[i * 3 + 0] = prims[i].color.x;
            ch[i * 3 + 1] = prims[i].color.y;
            ch[i * 3 + 2] = prims[i].color.z;
        } else {
            require(prims[i].semantic.size() == 6, "rasterize: semantic dim != 6");
            for (int c = 0; c < 6; ++c) ch[i * 6 + c] = prims[i].semantic[c];
        }
    }
    return ch;
}

}  // namespace

RenderOutput rasterize(std::span<const Primitive> prims, const Camera& cam, Channels what) {
    std::vector<Primitive> vis = visible(prims);
    GeomLists geom = raster_geometry(vis, cam);
    Vec alphas(vis.size());
    for (size_t i = 0; i < vis.size(); ++i) alphas[i] = vis[i].alpha;

    // contribution lists refer to indices in the caller's primitive array
    std::vector<int32_t> remap(vis.size());
    {
        int32_t j = 0;
        for (size_t i = 0; i < prims.size(); ++i)
            if (!prims[i].masked) remap[j++] = int32_t(i);
    }
    auto fix_ids = [&](FeatureMap& fm) {
        for (auto& e : fm.lists.items) e.prim = remap[e.prim];
    };

    RenderOutput out;
    if (what == Channels::Color || what == Channels::Both) {
        Vec ch = gather_channels(vis, Channels::Color);
        out.color = composite(geom, alphas, ch, 3);
        fix_ids(out.color);
        out.color.fingerprint = prim_fingerprint(prims, Channels::Color);
    }
    if (what == Channels::Semantic || what == Channels::Both) {
        Vec ch = gather_channels(vis, Channels::Semantic);
        out.semantic = composite(geom, alphas, ch, 6);
        fix_ids(out.semantic);
        out.semantic.fingerprint = prim_fingerprint(prims, Channels::Semantic);
    }
    return out;
}

RasterGrads rasterize_backward(const FeatureMap& fm, std::span<const double> grad_image,
                               std::span<const Primitive> prims, Channels what) {
    require(what != Channels::Both, "rasterize_backward: pass one channel set at a time");
    require(fm.fingerprint == prim_fingerprint(prims, what),
            "rasterize_backward: stale contribution lists (forward/backward mismatch)");
    require(grad_image.size() == fm.data.size(), "rasterize_backward: grad size mismatch");

    const int n_ch = fm.c;
    RasterGrads out;
    out.d_color.assign(prims.size() * 3, 0.0);
    out.d_semantic.assign(prims.size() * 6, 0.0);
    out.d_alpha.assign(prims.size(), 0.0);

    Vec* dch_out = what == Channels::Color ? &out.d_color : &out.d_semantic;

    const size_t npx = size_t(fm.h) * fm.w;
    std::vector<double> total(n_ch), prefix(n_ch);
    for (size_t p = 0; p < npx; ++p) {
        uint32_t k0 = fm.lists.start[p], k1 = fm.lists.start[p + 1];
        if (k0 == k1) continue;
        const double* gpx = &grad_image[p * n_ch];

        std::fill(total.begin(), total.end(), 0.0);
        for (uint32_t k = k0; k < k1; ++k) {
            const Contrib& e = fm.lists.items[k];
            const Primitive& pr = prims[e.prim];
            for (int c = 0; c < n_ch; ++c) {
                double val = n_ch == 3 ? pr.color[c] : pr.semantic[c];
                total[c] += val * e.w;
            }
        }

        std::fill(prefix.begin(), prefix.end(), 0.0);
        double T = 1.0;
        for (uint32_t k = k0; k < k1; ++k) {
            const Contrib& e = fm.lists.items[k];
            const Primitive& pr = prims[e.prim];
            double dg = 0.0;
            for (int c = 0; c < n_ch; ++c) {
                double val = n_ch == 3 ? pr.color[c] : pr.semantic[c];
                double contrib = val * e.w;
                prefix[c] += contrib;
                (*dch_out)[size_t(e.prim) * n_ch + c] += e.w * gpx[c];
                double suffix = total[c] - prefix[c];
                dg += gpx[c] * (val * T - suffix / (1.0 - e.g));
            }
            double raw = pr.alpha > 0 ? e.g / pr.alpha : 0.0;
            if (e.g < kAlphaCap) out.d_alpha[e.prim] += dg * raw;
            T *= (1.0 - e.g);
        }
    }
    return out;
}

double psnr(const Image& a, const Image& b) {
    require(a.h == b.h && a.w == b.w && a.c == b.c, "psnr: shape mismatch");
    double mse = 0.0;
    for (size_t i = 0; i < a.px.size(); ++i) {
        double d = a.px[i] - b.px[i];
        mse += d * d;
    }
    mse /= double(a.px.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double psnr_capped(const Image& a, const Image& b, double cap) {
    return std::min(cap, psnr(a, b));
}

// ---------------------------------------------------------------------------
// SSIM with analytic gradient.
//
// Local stats come from a separable Gaussian window renormalized at borders:
// the smoothing operator S is linear, so the backward pass only needs its
// adjoint, which is a plain correlation of grad/K with the same kernel.

namespace {

struct SsimKernel {
    std::vector<double> k;  // 11 taps, sigma 1.5
    int radius = 5;

    SsimKernel() {
        k.resize(11);
        double s = 0;
        for (int i = -5; i <= 5; ++i) {
            k[i + 5] = std::exp(-0.5 * (i * i) / (1.5 * 1.5));
            s += k[i + 5];
        }
        for (double& v : k) v /= s;
    }
};

const SsimKernel& ssim_kernel() {
    static SsimKernel k;
    return k;
}

// 1D smooth along x then y with border renormalization; src/dst are h*w planes
void smooth_plane(const double* src, double* dst, int h, int w, std::vector<double>& tmp) {
    const auto& K = ssim_kernel();
    tmp.resize(size_t(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0, norm = 0;
            for (int d = -K.radius; d <= K.radius; ++d) {
                int xx = x + d;
                if (xx < 0 || xx >= w) continue;
                double kv = K.k[d + K.radius];
                s += kv * src[size_t(y) * w + xx];
                norm += kv;
            }
            tmp[size_t(y) * w + x] = s / norm;
        }
    }
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            double s = 0, norm = 0;
            for (int d = -K.radius; d <= K.radius; ++d) {
                int yy = y + d;
                if (yy < 0 || yy >= h) continue;
                double kv = K.k[d + K.radius];
                s += kv * tmp[size_t(yy) * w + x];
                norm += kv;
            }
            dst[size_t(y) * w + x] = s / norm;
        }
    }
}

// adjoint of smooth_plane (the renormalizing weights transpose cleanly because
// the kernel is symmetric: divide first, then correlate)
void smooth_plane_adjoint(const double* src, double* dst, int h, int w,
                          std::vector<double>& tmp) {
    const auto& K = ssim_kernel();
    // adjoint of the y pass
    tmp.assign(size_t(h) * w, 0.0);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            double norm = 0;
            for (int d = -K.radius; d <= K.radius; ++d) {
                int yy = y + d;
                if (yy >= 0 && yy < h) norm += K.k[d + K.radius];
            }
            double v = src[size_t(y) * w + x] / norm;
            for (int d = -K.radius; d <= K.radius; ++d) {
                int yy = y + d;
                if (yy >= 0 && yy < h) tmp[size_t(yy) * w + x] += K.k[d + K.radius] * v;
            }
        }
    }
    std::fill(dst, dst + size_t(h) * w, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double norm = 0;
            for (int d = -K.radius; d <= K.radius; ++d) {
                int xx = x + d;
                if (xx >= 0 && xx < w) norm += K.k[d + K.radius];
            }
            double v = tmp[size_t(y) * w + x] / norm;
            for (int d = -K.radius; d <= K.radius; ++d) {
                int xx = x + d;
                if (xx >= 0 && xx < w) dst[size_t(y) * w + xx] += K.k[d + K.radius] * v;
            }
        }
    }
}

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

}  // namespace

static double ssim_impl(const Image& a, const Image& b, Vec* grad_a) {
    require(a.h == b.h && a.w == b.w && a.c == b.c, "ssim: shape mismatch");
    const int h = a.h, w = a.w, C = a.c;
    const size_t n = size_t(h) * w;

    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    std::vector<double> mx(n), my(n), mxx(n), myy(n), mxy(n), tmp;
    if (grad_a) grad_a->assign(a.px.size(), 0.0);

    double total = 0.0;
    std::vector<double> gmx(n), gmxx(n), gmxy(n), acc(n);
    for (int c = 0; c < C; ++c) {
        for (size_t i = 0; i < n; ++i) {
            x[i] = a.px[i * C + c];
            y[i] = b.px[i * C + c];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        smooth_plane(x.data(), mx.data(), h, w, tmp);
        smooth_plane(y.data(), my.data(), h, w, tmp);
        smooth_plane(xx.data(), mxx.data(), h, w, tmp);
        smooth_plane(yy.data(), myy.data(), h, w, tmp);
        smooth_plane(xy.data(), mxy.data(), h, w, tmp);

        double plane_sum = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double vx = mxx[i] - mx[i] * mx[i];
            double vy = myy[i] - my[i] * my[i];
            double cxy = mxy[i] - mx[i] * my[i];
            double A = 2.0 * mx[i] * my[i] + kC1;
            double B = 2.0 * cxy + kC2;
            double D = mx[i] * mx[i] + my[i] * my[i] + kC1;
            double E = vx + vy + kC2;
            double ssim_px = (A * B) / (D * E);
            plane_sum += ssim_px;

            if (grad_a) {
                // partials w.r.t. the smoothed maps
                double dA = B / (D * E);
                double dB = A / (D * E);
                double dD = -ssim_px / D;
                double dE = -ssim_px / E;
                // A,D depend on mx; B,E on cxy/vx which depend on mx, mxx, mxy
                double d_mx = dA * 2.0 * my[i] + dD * 2.0 * mx[i] +
                              dB * 2.0 * (-my[i]) + dE * (-2.0 * mx[i]);
                double d_mxx = dE;
                double d_mxy = dB * 2.0;
                gmx[i] = d_mx;
                gmxx[i] = d_mxx;
                gmxy[i] = d_mxy;
            }
        }
        total += plane_sum / double(n);

        if (grad_a) {
            const double scale = 1.0 / (double(n) * C);
            smooth_plane_adjoint(gmx.data(), acc.data(), h, w, tmp);
            for (size_t i = 0; i < n; ++i) (*grad_a)[i * C + c] += scale * acc[i];
            smooth_plane_adjoint(gmxx.data(), acc.data(), h, w, tmp);
            for (size_t i = 0; i < n; ++i) (*grad_a)[i * C + c] += scale * acc[i] * 2.0 * x[i];
            smooth_plane_adjoint(gmxy.data(), acc.data(), h, w, tmp);
            for (size_t i = 0; i < n; ++i) (*grad_a)[i * C + c] += scale * acc[i] * y[i];
        }
    }
    return total / double(C);
}

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, nullptr); }

double ssim_with_grad(const Image& a, const Image& b, Vec& grad_a) {
    return ssim_impl(a, b, &grad_a);
}

Image feature_map_to_image(const FeatureMap& fm) {
    Image img(fm.h, fm.w, fm.c);
    img.px = fm.data;
    return img;
}

// ---------------------------------------------------------------------------
// image IO

void write_ppm(const std::string& path, const Image& img) {
    require(img.c == 3, "write_ppm: need 3 channels");
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "write_ppm: cannot open " + path);
    f << "P6\n" << img.w << " " << img.h << "\n255\n";
    std::vector<uint8_t> row(size_t(img.w) * 3);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = clamp01(img.at(y, x, c));
                row[size_t(x) * 3 + c] = uint8_t(std::lround(v * 255.0));
            }
        f.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    require(f.good(), "write_ppm: write failed for " + path);
}

Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "read_ppm: cannot open " + path);
    std::string magic;
    int w, h, maxv;
    f >> magic >> w >> h >> maxv;
    require(magic == "P6" && maxv == 255, "read_ppm: unsupported format in " + path);
    f.get();
    Image img(h, w, 3);
    std::vector<uint8_t> row(size_t(w) * 3);
    for (int y = 0; y < h; ++y) {
        f.read(reinterpret_cast<char*>(row.data()), row.size());
        require(f.good(), "read_ppm: truncated file " + path);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = row[size_t(x) * 3 + c] / 255.0;
    }
    return img;
}

void write_f64_dump(const std::string& path, const Image& img) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "write_f64_dump: cannot open " + path);
    f.write("GSF8", 4);
    uint32_t dims[3] = {uint32_t(img.h), uint32_t(img.w), uint32_t(img.c)};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    // planar: channel, then row-major
    for (int c = 0; c < img.c; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) {
                double v = img.at(y, x, c);
                f.write(reinterpret_cast<const char*>(&v), 8);
            }
    require(f.good(), "write_f64_dump: write failed for " + path);
}

Image read_f64_dump(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "read_f64_dump: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    require(f.good() && std::string(magic, 4) == "GSF8", "read_f64_dump: bad magic in " + path);
    uint32_t dims[3];
    f.read(reinterpret_cast<char*>(dims), sizeof(dims));
    Image img(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
              static_cast<int>(dims[2]));
    for (int c = 0; c < img.c; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) {
                double v;
                f.read(reinterpret_cast<char*>(&v), 8);
                img.at(y, x, c) = v;
            }
    require(f.good(), "read_f64_dump: truncated file " + path);
    return img;
}

}  // namespace gsrd
