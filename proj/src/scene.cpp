#include "gsrd/scene.hpp"

#include <algorithm>
#include <cmath>

#include "gsrd/binio.hpp"

namespace gsrd {

void AnchorScene::check() const {
    require(decoder.output_dim() == K * 4, "scene: decoder output must be 4K");
    require(decoder.input_dim() == D_f, "scene: decoder input must be D_f");
    require(slot_geom.size() == anchors.size(), "scene: slot_geom count mismatch");
    for (const auto& a : anchors) {
        require(int(a.feature.size()) == D_f, "scene: feature dim mismatch");
        require(int(a.offsets.size()) == K, "scene: offset count mismatch");
        require(int(a.semantic.size()) == 6, "scene: semantic dim != 6");
        require(int(a.offset_mask_logits.size()) == K, "scene: mask logit count mismatch");
        require(bbox.contains(a.pos, 1e-9), "scene: anchor outside bounding box");
    }
}

void SynthConfig::check() const {
    require(instances >= 1 && instances <= 16, "synth: instances out of range");
    require(anchors_per_instance >= 1, "synth: anchors_per_instance < 1");
    require(views >= 2, "synth: need at least 2 views");
    require(width >= 16 && height >= 16, "synth: image too small");
    require(K >= 1 && D_f >= 4, "synth: bad K or D_f");
}

std::vector<Primitive> derive_primitives(const Anchor& a, const AnchorScene& scene,
                                         int anchor_index) {
    Vec raw = mlp_forward(scene.decoder, a.feature);
    auto l = a.scaling();
    const auto& slots = scene.slot_geom[anchor_index];
    std::vector<Primitive> out(scene.K);
    for (int k = 0; k < scene.K; ++k) {
        Primitive& p = out[k];
        p.mu = a.pos + a.offsets[k].cwise({l[0], l[1], l[2]});
        p.color = {sigmoid(raw[3 * k + 0]), sigmoid(raw[3 * k + 1]), sigmoid(raw[3 * k + 2])};
        p.alpha = sigmoid(raw[3 * scene.K + k]);
        Vec3 e = {softplus(slots[k].extent_raw.x), softplus(slots[k].extent_raw.y),
                  softplus(slots[k].extent_raw.z)};
        p.extent = e.cwise({l[3], l[4], l[5]});
        p.rot = slots[k].rot.normalized();
        p.semantic = a.semantic;
        p.source_anchor = anchor_index;
        p.masked = a.offset_mask_logits[k] < 0.0;  // sigmoid(logit) < 0.5
    }
    return out;
}

std::vector<Primitive> derive_all_primitives(const AnchorScene& scene) {
    std::vector<Primitive> prims;
    prims.reserve(scene.anchors.size() * scene.K);
    for (size_t i = 0; i < scene.anchors.size(); ++i) {
        auto ps = derive_primitives(scene.anchors[i], scene, int(i));
        prims.insert(prims.end(), ps.begin(), ps.end());
    }
    return prims;
}

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
               int width, int height) {
    Vec3 fwd = target - eye;
    double n = fwd.norm();
    require(n > 0, "look_at: eye == target");
    fwd = fwd * (1.0 / n);
    // right = fwd x up
    Vec3 right = {fwd.y * up.z - fwd.z * up.y, fwd.z * up.x - fwd.x * up.z,
                  fwd.x * up.y - fwd.y * up.x};
    double rn = right.norm();
    require(rn > 1e-12, "look_at: up parallel to view direction");
    right = right * (1.0 / rn);
    Vec3 down = {fwd.y * right.z - fwd.z * right.y, fwd.z * right.x - fwd.x * right.z,
                 fwd.x * right.y - fwd.y * right.x};

    Camera cam;
    // rows: +x right, +y down (image coords), +z forward
    for (int c = 0; c < 3; ++c) {
        cam.R(0, c) = right[c];
        cam.R(1, c) = down[c];
        cam.R(2, c) = fwd[c];
    }
    cam.t = cam.R * (eye * -1.0);
    cam.focal = focal;
    cam.width = width;
    cam.height = height;
    return cam;
}

std::vector<int> SynthDataset::train_views() const {
    std::vector<int> v;
    for (size_t i = 0; i < is_eval.size(); ++i)
        if (!is_eval[i]) v.push_back(int(i));
    return v;
}

std::vector<int> SynthDataset::eval_views() const {
    std::vector<int> v;
    for (size_t i = 0; i < is_eval.size(); ++i)
        if (is_eval[i]) v.push_back(int(i));
    return v;
}

// ---------------------------------------------------------------------------
// GSSC scene container

namespace {

constexpr uint16_t kSceneVersion = 1;

void put_vec3(ByteWriter& w, const Vec3& v) {
    w.f64(v.x);
    w.f64(v.y);
    w.f64(v.z);
}

Vec3 get_vec3(ByteReader& r) {
    Vec3 v;
    v.x = r.f64();
    v.y = r.f64();
    v.z = r.f64();
    return v;
}

}  // namespace

void save_scene(const std::string& path, const AnchorScene& scene) {
    ByteWriter w;
    w.str4("GSSC");
    w.u16(kSceneVersion);
    w.u16(uint16_t(scene.K));
    w.u16(uint16_t(scene.D_f));
    put_vec3(w, scene.bbox.lo);
    put_vec3(w, scene.bbox.hi);
    w.u32(uint32_t(scene.anchors.size()));
    for (const auto& a : scene.anchors) {
        put_vec3(w, a.pos);
        for (double v : a.feature) w.f64(v);
        for (const auto& o : a.offsets) put_vec3(w, o);
        for (double v : a.scaling_raw) w.f64(v);
        for (double v : a.semantic) w.f64(v);
        for (double v : a.offset_mask_logits) w.f64(v);
        w.i32(a.gt_instance);
    }
    for (const auto& slots : scene.slot_geom)
        for (const auto& s : slots) {
            put_vec3(w, s.extent_raw);
            w.f64(s.rot.w);
            w.f64(s.rot.x);
            w.f64(s.rot.y);
            w.f64(s.rot.z);
        }
    write_mlp_f64(w, scene.decoder);
    write_file(path, w.bytes);
}

AnchorScene load_scene(const std::string& path) {
    auto bytes = read_file(path);
    ByteReader r(bytes);
    require(r.str4() == "GSSC", "load_scene: bad magic in " + path);
    uint16_t ver = r.u16();
    require(ver == kSceneVersion,
            "load_scene: unsupported version " + std::to_string(ver));
    AnchorScene s;
    s.K = r.u16();
    s.D_f = r.u16();
    s.bbox.lo = get_vec3(r);
    s.bbox.hi = get_vec3(r);
    uint32_t n = r.u32();
    s.anchors.resize(n);
    for (auto& a : s.anchors) {
        a.pos = get_vec3(r);
        a.feature.resize(s.D_f);
        for (double& v : a.feature) v = r.f64();
        a.offsets.resize(s.K);
        for (auto& o : a.offsets) o = get_vec3(r);
        for (double& v : a.scaling_raw) v = r.f64();
        a.semantic.resize(6);
        for (double& v : a.semantic) v = r.f64();
        a.offset_mask_logits.resize(s.K);
        for (double& v : a.offset_mask_logits) v = r.f64();
        a.gt_instance = r.i32();
    }
    s.slot_geom.resize(n);
    for (auto& slots : s.slot_geom) {
        slots.resize(s.K);
        for (auto& g : slots) {
            g.extent_raw = get_vec3(r);
            g.rot.w = r.f64();
            g.rot.x = r.f64();
            g.rot.y = r.f64();
            g.rot.z = r.f64();
        }
    }
    s.decoder = read_mlp_f64(r);
    require(r.remaining() == 0, "load_scene: trailing bytes in " + path);
    return s;
}

}  // namespace gsrd
