#include <cmath>
#include <filesystem>
#include <fstream>

#include "gsrd/binio.hpp"
#include "gsrd/render.hpp"
#include "gsrd/scene.hpp"
#include "gsrd/semantics.hpp"

#include <json.hpp>

namespace gsrd {

namespace {

Vec3 hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);
    double i = std::floor(h * 6.0);
    double f = h * 6.0 - i;
    double p = v * (1.0 - s), q = v * (1.0 - f * s), t = v * (1.0 - (1.0 - f) * s);
    switch (int(i) % 6) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, t, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

double safe_logit(double p) { return logit(std::min(0.95, std::max(0.05, p))); }

}  // namespace

SynthResult synth_scene(const SynthConfig& cfg, uint64_t seed) {
    cfg.check();
    Rng rng(seed);

    AnchorScene gt;
    gt.K = cfg.K;
    gt.D_f = cfg.D_f;

    // linear GT decoder: color channel c of every slot reads f[c], alpha reads
    // f[3]; dims 4.. add per-slot jitter so slots of one anchor differ a bit
    gt.decoder = make_zero_mlp({cfg.D_f, 4 * cfg.K}, Act::None, Act::None);
    {
        Mat& W = gt.decoder.layers[0].W;
        for (int k = 0; k < cfg.K; ++k) {
            for (int c = 0; c < 3; ++c) {
                W(3 * k + c, c) = 1.0;
                for (int d = 4; d < cfg.D_f; ++d) W(3 * k + c, d) = 0.35 * rng.normal();
            }
            W(3 * cfg.K + k, 3) = 1.0;
            for (int d = 4; d < cfg.D_f; ++d) W(3 * cfg.K + k, d) = 0.2 * rng.normal();
        }
    }

    const double kOffsetScale = 0.10;   // effective l[0..2]
    const double kExtentScale = 1.0;    // effective l[3..5]

    auto base_scaling = [&](double jitter) {
        std::array<double, 6> s;
        for (int i = 0; i < 3; ++i)
            s[i] = softplus_inv(kOffsetScale * (1.0 + jitter * rng.uniform(-0.3, 0.3)));
        for (int i = 3; i < 6; ++i)
            s[i] = softplus_inv(kExtentScale * (1.0 + jitter * rng.uniform(-0.2, 0.2)));
        return s;
    };

    auto add_anchor = [&](const Vec3& pos, const Vec3& color, double opacity,
                          double extent, int instance, const Vec& style) {
        Anchor a;
        a.pos = pos;
        a.feature.assign(cfg.D_f, 0.0);
        a.feature[0] = safe_logit(color.x);
        a.feature[1] = safe_logit(color.y);
        a.feature[2] = safe_logit(color.z);
        a.feature[3] = safe_logit(opacity);
        for (int d = 4; d < cfg.D_f; ++d) a.feature[d] = style[d - 4];
        a.offsets.resize(cfg.K);
        for (auto& o : a.offsets) o = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        a.scaling_raw = base_scaling(1.0);
        a.semantic.assign(6, 0.0);
        if (instance >= 1) a.semantic[(instance - 1) % 6] = 2.0;
        a.offset_mask_logits.assign(cfg.K, 3.0);
        a.gt_instance = instance;
        gt.anchors.push_back(std::move(a));

        std::vector<SlotGeom> slots(cfg.K);
        for (auto& s : slots) {
            double e = extent * (1.0 + rng.uniform(-0.35, 0.35));
            s.extent_raw = {softplus_inv(e), softplus_inv(e * (1.0 + rng.uniform(-0.2, 0.2))),
                            softplus_inv(e * (1.0 + rng.uniform(-0.2, 0.2)))};
            // random unit quaternion
            double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
            double a1 = std::sqrt(1 - u1), a2 = std::sqrt(u1);
            s.rot = Quat{a1 * std::sin(2 * M_PI * u2), a1 * std::cos(2 * M_PI * u2),
                         a2 * std::sin(2 * M_PI * u3), a2 * std::cos(2 * M_PI * u3)}
                        .normalized();
        }
        gt.slot_geom.push_back(std::move(slots));
    };

    // foreground instances: compact colored blobs on a ring
    double ring_r = 0.85;
    for (int i = 0; i < cfg.instances; ++i) {
        double ang = 2.0 * M_PI * i / cfg.instances + rng.uniform(-0.15, 0.15);
        Vec3 center = {ring_r * std::cos(ang), ring_r * std::sin(ang),
                       rng.uniform(-0.25, 0.25)};
        Vec3 color = hsv_to_rgb(double(i) / cfg.instances + rng.uniform(-0.02, 0.02), 0.85, 0.9);
        double blob_r = 0.28;
        for (int a = 0; a < cfg.anchors_per_instance; ++a) {
            Vec3 off = {rng.normal(), rng.normal(), rng.normal()};
            off = off * (blob_r / 3.0);
            Vec3 tint = {clamp01(color.x + rng.uniform(-0.08, 0.08)),
                         clamp01(color.y + rng.uniform(-0.08, 0.08)),
                         clamp01(color.z + rng.uniform(-0.08, 0.08))};
            Vec style(size_t(std::max(0, cfg.D_f - 4)));
            for (double& v : style) v = 0.5 * rng.normal();
            add_anchor(center + off, tint, rng.uniform(0.86, 0.95), rng.uniform(0.05, 0.085),
                       i + 1, style);
        }
    }

    // background clutter: scattered, dim, noisy colors; deliberately low quality
    for (int a = 0; a < cfg.clutter; ++a) {
        Vec3 pos;
        if (a % 3 == 0) {
            // inside the scene volume, mingling with the objects
            pos = {rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-0.8, 0.8)};
        } else {
            double ang = rng.uniform(0, 2 * M_PI);
            double r = rng.uniform(1.3, 2.1);
            pos = {r * std::cos(ang), r * std::sin(ang), rng.uniform(-1.0, 1.0)};
        }
        Vec3 color = {rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75)};
        Vec style(size_t(std::max(0, cfg.D_f - 4)));
        for (double& v : style) v = 1.2 * rng.normal();
        add_anchor(pos, color, cfg.clutter_alpha * rng.uniform(0.55, 1.3),
                   rng.uniform(0.09, 0.17), 0, style);
    }

    // bounding box with a small pad
    gt.bbox.lo = gt.bbox.hi = gt.anchors.front().pos;
    for (const auto& a : gt.anchors) gt.bbox.expand(a.pos);
    Vec3 pad = {0.05, 0.05, 0.05};
    gt.bbox.lo = gt.bbox.lo - pad;
    gt.bbox.hi = gt.bbox.hi + pad;
    gt.check();

    // cameras on a ring, varied elevation
    SynthDataset ds;
    ds.instance_count = cfg.instances;
    const double elevations[] = {0.12, 0.38, -0.18, 0.55, 0.0, 0.28, -0.35, 0.45};
    for (int v = 0; v < cfg.views; ++v) {
        double ang = 2.0 * M_PI * v / cfg.views + 0.13;
        double el = elevations[v % 8];
        double dist = 3.6;
        Vec3 eye = {dist * std::cos(el) * std::cos(ang), dist * std::cos(el) * std::sin(ang),
                    dist * std::sin(el)};
        double focal = 0.95 * cfg.width;
        ds.cameras.push_back(look_at(eye, {0, 0, 0}, {0, 0, 1}, focal, cfg.width, cfg.height));
        ds.is_eval.push_back(cfg.eval_every > 0 && (v % cfg.eval_every) == cfg.eval_every - 1);
    }
    // never hold out everything
    if (ds.train_views().empty())
        for (size_t i = 0; i < ds.is_eval.size(); ++i) ds.is_eval[i] = false;

    // GT renders and instance masks
    auto prims = derive_all_primitives(gt);
    std::vector<int> prim_instance(prims.size());
    for (size_t i = 0; i < prims.size(); ++i)
        prim_instance[i] = gt.anchors[prims[i].source_anchor].gt_instance;

    for (int v = 0; v < cfg.views; ++v) {
        RenderOutput ro = rasterize(prims, ds.cameras[v], Channels::Color);
        ds.images.push_back(feature_map_to_image(ro.color));
        ds.masks.push_back(masks_from_labels(ro.color.lists, prim_instance, cfg.instances));
    }
    return {std::move(gt), std::move(ds)};
}

// ---------------------------------------------------------------------------
// dataset directory IO

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string view_name(const char* base, int v, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%03d.%s", base, v, ext);
    return buf;
}

}  // namespace

void save_dataset(const std::string& dir, const SynthDataset& ds) {
    fs::create_directories(dir);
    json j;
    j["instance_count"] = ds.instance_count;
    j["views"] = json::array();
    for (size_t v = 0; v < ds.cameras.size(); ++v) {
        const Camera& c = ds.cameras[v];
        json jv;
        jv["R"] = std::vector<double>(c.R.m.begin(), c.R.m.end());
        jv["t"] = {c.t.x, c.t.y, c.t.z};
        jv["focal"] = c.focal;
        jv["width"] = c.width;
        jv["height"] = c.height;
        jv["is_eval"] = bool(ds.is_eval[v]);
        j["views"].push_back(jv);
    }
    std::ofstream f(dir + "/views.json");
    require(f.good(), "save_dataset: cannot write views.json");
    f << j.dump(2) << "\n";

    for (size_t v = 0; v < ds.images.size(); ++v) {
        write_f64_dump(dir + "/" + view_name("view", int(v), "f64"), ds.images[v]);
        write_ppm(dir + "/" + view_name("view", int(v), "ppm"), ds.images[v]);

        const MaskSet& ms = ds.masks[v];
        ByteWriter w;
        w.str4("GSMK");
        w.u16(uint16_t(ms.h));
        w.u16(uint16_t(ms.w));
        w.u32(uint32_t(ms.count()));
        for (int m = 0; m < ms.count(); ++m) {
            w.i32(ms.instance_ids[m]);
            const auto& bits = ms.masks[m];
            uint8_t acc = 0;
            int nb = 0;
            for (size_t i = 0; i < bits.size(); ++i) {
                acc |= uint8_t(bits[i] & 1) << nb;
                if (++nb == 8) {
                    w.u8(acc);
                    acc = 0;
                    nb = 0;
                }
            }
            if (nb) w.u8(acc);
        }
        write_file(dir + "/" + view_name("masks", int(v), "bin"), w.bytes);
    }
}

SynthDataset load_dataset(const std::string& dir) {
    std::ifstream f(dir + "/views.json");
    require(f.good(), "load_dataset: cannot open " + dir + "/views.json");
    json j = json::parse(f);

    SynthDataset ds;
    ds.instance_count = j.at("instance_count").get<int>();
    for (const auto& jv : j.at("views")) {
        Camera c;
        auto R = jv.at("R").get<std::vector<double>>();
        require(R.size() == 9, "load_dataset: bad rotation");
        std::copy(R.begin(), R.end(), c.R.m.begin());
        auto t = jv.at("t").get<std::vector<double>>();
        c.t = {t.at(0), t.at(1), t.at(2)};
        c.focal = jv.at("focal").get<double>();
        c.width = jv.at("width").get<int>();
        c.height = jv.at("height").get<int>();
        ds.cameras.push_back(c);
        ds.is_eval.push_back(jv.at("is_eval").get<bool>());
    }
    for (size_t v = 0; v < ds.cameras.size(); ++v) {
        ds.images.push_back(read_f64_dump(dir + "/" + view_name("view", int(v), "f64")));

        auto bytes = read_file(dir + "/" + view_name("masks", int(v), "bin"));
        ByteReader r(bytes);
        require(r.str4() == "GSMK", "load_dataset: bad mask magic");
        MaskSet ms;
        ms.h = r.u16();
        ms.w = r.u16();
        uint32_t m = r.u32();
        for (uint32_t i = 0; i < m; ++i) {
            ms.instance_ids.push_back(r.i32());
            std::vector<uint8_t> bits(size_t(ms.h) * ms.w, 0);
            for (size_t b = 0; b < bits.size(); b += 8) {
                uint8_t acc = r.u8();
                for (int k = 0; k < 8 && b + k < bits.size(); ++k) bits[b + k] = (acc >> k) & 1;
            }
            ms.masks.push_back(std::move(bits));
        }
        ds.masks.push_back(std::move(ms));
    }
    return ds;
}

}  // namespace gsrd
