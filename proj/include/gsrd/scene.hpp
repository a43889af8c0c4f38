#pragma once

#include <string>
#include <vector>

#include "gsrd/geom.hpp"
#include "gsrd/image.hpp"
#include "gsrd/ndmath.hpp"

namespace gsrd {

// one anchor's transmitted attributes plus untransmitted GT label.
// scaling_raw maps through softplus componentwise; [0..2] scales offsets,
// [3..5] scales decoded primitive extents.
struct Anchor {
    Vec3 pos;
    Vec feature;                       // D_f
    std::vector<Vec3> offsets;         // K
    std::array<double, 6> scaling_raw{};
    Vec semantic;                      // 6
    Vec offset_mask_logits;            // K
    int gt_instance = 0;               // 0 = background; never transmitted

    std::array<double, 6> scaling() const {
        std::array<double, 6> s;
        for (int i = 0; i < 6; ++i) s[i] = softplus(scaling_raw[i]);
        return s;
    }
};

// frozen per-slot geometry; extent maps through softplus
struct SlotGeom {
    Vec3 extent_raw;
    Quat rot;
};

struct Primitive {
    Vec3 mu;
    Vec3 color;        // [0,1]
    double alpha = 0;  // [0,1]
    Vec3 extent;       // > 0
    Quat rot;
    Vec semantic;      // 6, shared with parent anchor
    int source_anchor = -1;
    bool masked = false;
};

struct AnchorScene {
    std::vector<Anchor> anchors;
    MlpParams decoder;                           // D_f -> 3K colors then K alphas, raw
    std::vector<std::vector<SlotGeom>> slot_geom;  // [anchor][K]
    Aabb bbox;
    int K = 10;
    int D_f = 8;

    size_t anchor_count() const { return anchors.size(); }
    void check() const;  // invariants: dims, bbox containment
};

// K primitives from one anchor: mu_i = x + O_i * l[0..2],
// (c, alpha) = sigmoid(decoder(f)), extent = softplus(extent_raw) * l[3..5]
std::vector<Primitive> derive_primitives(const Anchor& a, const AnchorScene& scene,
                                         int anchor_index);

// all unmasked primitives of the scene (masked ones carry masked=true and are
// still listed; renderers skip them)
std::vector<Primitive> derive_all_primitives(const AnchorScene& scene);

struct Camera {
    Mat3 R;        // world -> camera rotation
    Vec3 t;        // world -> camera translation
    double focal = 60.0;  // px
    int width = 64, height = 64;
};

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
               int width, int height);

struct SynthConfig {
    int instances = 4;           // 3..8
    int anchors_per_instance = 12;
    int clutter = 40;            // background clutter anchors, gt_instance = 0
    int views = 10;              // 8..24
    int width = 64, height = 64; // 64..128
    int K = 10;
    int D_f = 8;
    int eval_every = 5;          // every Nth view held out for evaluation
    double clutter_alpha = 0.22; // peak opacity of clutter primitives

    static SynthConfig standard() { return {}; }
    static SynthConfig clutter_heavy() {
        SynthConfig c;
        c.clutter = 90;
        c.clutter_alpha = 0.32;
        return c;
    }
    void check() const;
};

struct SynthDataset {
    std::vector<Image> images;      // GT renders, H x W x 3
    std::vector<MaskSet> masks;     // GT instance masks per view
    std::vector<Camera> cameras;
    std::vector<bool> is_eval;      // held-out flag per view
    int instance_count = 0;

    std::vector<int> train_views() const;
    std::vector<int> eval_views() const;
};

struct SynthResult {
    AnchorScene gt_scene;
    SynthDataset dataset;
};

SynthResult synth_scene(const SynthConfig& cfg, uint64_t seed);

// versioned binary container, magic "GSSC"
void save_scene(const std::string& path, const AnchorScene& scene);
AnchorScene load_scene(const std::string& path);

void save_dataset(const std::string& dir, const SynthDataset& ds);
SynthDataset load_dataset(const std::string& dir);

}  // namespace gsrd
