#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "gsrd/binio.hpp"
#include "gsrd/render.hpp"
#include "gsrd/scene.hpp"

using namespace gsrd;

namespace {

AnchorScene tiny_scene(int n_anchors, int K = 4, int D_f = 8, uint64_t seed = 1) {
    Rng rng(seed);
    AnchorScene s;
    s.K = K;
    s.D_f = D_f;
    s.decoder = make_mlp({D_f, 16, 4 * K}, Act::Relu, Act::None, rng);
    for (int i = 0; i < n_anchors; ++i) {
        Anchor a;
        a.pos = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        a.feature.resize(D_f);
        for (double& v : a.feature) v = rng.uniform(-1, 1);
        a.offsets.resize(K);
        for (auto& o : a.offsets) o = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        for (auto& v : a.scaling_raw) v = rng.uniform(-1, 1);
        a.semantic.assign(6, 0.0);
        for (double& v : a.semantic) v = rng.uniform(-1, 1);
        a.offset_mask_logits.assign(K, 0.0);
        for (double& v : a.offset_mask_logits) v = rng.uniform(-2, 2);
        a.gt_instance = rng.uniform_int(3);
        s.anchors.push_back(std::move(a));

        std::vector<SlotGeom> slots(K);
        for (auto& g : slots) {
            g.extent_raw = {rng.uniform(-2, 0), rng.uniform(-2, 0), rng.uniform(-2, 0)};
            g.rot = Quat{rng.normal(), rng.normal(), rng.normal(), rng.normal()}.normalized();
        }
        s.slot_geom.push_back(std::move(slots));
    }
    if (!s.anchors.empty()) {
        s.bbox.lo = s.bbox.hi = s.anchors[0].pos;
        for (const auto& a : s.anchors) s.bbox.expand(a.pos);
    }
    return s;
}

}  // namespace

TEST_CASE("derive_primitives: position formula") {
    AnchorScene s = tiny_scene(1, 2);
    Anchor& a = s.anchors[0];
    a.pos = {1, 2, 3};
    a.offsets[0] = {0.5, 0, 0};
    a.offsets[1] = {0, 0, 0};
    for (int i = 0; i < 3; ++i) a.scaling_raw[i] = softplus_inv(2.0);
    auto prims = derive_primitives(a, s, 0);
    CHECK(prims[0].mu.x == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(prims[0].mu.y == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(prims[0].mu.z == doctest::Approx(3.0).epsilon(1e-12));
    // zero offsets: mu = x
    CHECK(prims[1].mu.x == doctest::Approx(1.0));
    CHECK(prims[1].mu.y == doctest::Approx(2.0));
    CHECK(prims[1].mu.z == doctest::Approx(3.0));
}

TEST_CASE("derive_primitives: zero decoder gives sigmoid midpoints") {
    AnchorScene s = tiny_scene(1, 3);
    s.decoder = make_zero_mlp({s.D_f, 4 * s.K}, Act::None, Act::None);
    auto prims = derive_primitives(s.anchors[0], s, 0);
    for (const auto& p : prims) {
        CHECK(p.color.x == 0.5);
        CHECK(p.color.y == 0.5);
        CHECK(p.color.z == 0.5);
        CHECK(p.alpha == 0.5);
    }
}

TEST_CASE("derive_primitives: translation equivariance") {
    AnchorScene s = tiny_scene(3);
    Vec3 t = {0.7, -1.2, 0.3};
    auto before = derive_all_primitives(s);
    for (auto& a : s.anchors) a.pos = a.pos + t;
    s.bbox.lo = s.bbox.lo + t;
    s.bbox.hi = s.bbox.hi + t;
    auto after = derive_all_primitives(s);
    for (size_t i = 0; i < before.size(); ++i) {
        CHECK(after[i].mu.x == doctest::Approx(before[i].mu.x + t.x).epsilon(1e-14));
        CHECK(after[i].mu.y == doctest::Approx(before[i].mu.y + t.y).epsilon(1e-14));
        CHECK(after[i].mu.z == doctest::Approx(before[i].mu.z + t.z).epsilon(1e-14));
    }
}

TEST_CASE("derive_primitives: doubling offset scaling doubles mu - x") {
    AnchorScene s = tiny_scene(2);
    auto before = derive_all_primitives(s);
    for (auto& a : s.anchors) {
        auto l = a.scaling();
        for (int i = 0; i < 3; ++i) a.scaling_raw[i] = softplus_inv(2.0 * l[i]);
    }
    auto after = derive_all_primitives(s);
    for (size_t i = 0; i < before.size(); ++i) {
        const Vec3& x = s.anchors[before[i].source_anchor].pos;
        CHECK(after[i].mu.x - x.x == doctest::Approx(2.0 * (before[i].mu.x - x.x)).epsilon(1e-9));
        CHECK(after[i].mu.y - x.y == doctest::Approx(2.0 * (before[i].mu.y - x.y)).epsilon(1e-9));
        CHECK(after[i].mu.z - x.z == doctest::Approx(2.0 * (before[i].mu.z - x.z)).epsilon(1e-9));
    }
}

TEST_CASE("mask monotonicity: raising a logit never masks an unmasked slot") {
    AnchorScene s = tiny_scene(4);
    auto before = derive_all_primitives(s);
    for (auto& a : s.anchors)
        for (double& l : a.offset_mask_logits) l += 1.5;
    auto after = derive_all_primitives(s);
    for (size_t i = 0; i < before.size(); ++i) {
        if (!before[i].masked) CHECK(!after[i].masked);
    }
}

TEST_CASE("synth_scene: deterministic given seed") {
    SynthConfig cfg;
    cfg.instances = 3;
    cfg.anchors_per_instance = 4;
    cfg.clutter = 6;
    cfg.views = 4;
    cfg.width = cfg.height = 32;
    SynthResult a = synth_scene(cfg, 7);
    SynthResult b = synth_scene(cfg, 7);
    REQUIRE(a.gt_scene.anchors.size() == b.gt_scene.anchors.size());
    for (size_t i = 0; i < a.gt_scene.anchors.size(); ++i) {
        CHECK(a.gt_scene.anchors[i].pos.x == b.gt_scene.anchors[i].pos.x);
        CHECK(a.gt_scene.anchors[i].feature == b.gt_scene.anchors[i].feature);
    }
    for (size_t v = 0; v < a.dataset.images.size(); ++v)
        CHECK(a.dataset.images[v].px == b.dataset.images[v].px);

    SynthResult c = synth_scene(cfg, 8);
    bool differs = false;
    for (size_t v = 0; v < a.dataset.images.size() && !differs; ++v)
        differs = a.dataset.images[v].px != c.dataset.images[v].px;
    CHECK(differs);
}

TEST_CASE("synth_scene: masks are disjoint and bounded by instance count") {
    SynthConfig cfg;
    cfg.instances = 3;
    cfg.anchors_per_instance = 6;
    cfg.clutter = 10;
    cfg.views = 4;
    cfg.width = cfg.height = 48;
    SynthResult r = synth_scene(cfg, 21);
    for (const auto& ms : r.dataset.masks) {
        CHECK(ms.count() <= 3);
        std::vector<int> covered(size_t(ms.h) * ms.w, 0);
        for (const auto& m : ms.masks)
            for (size_t p = 0; p < m.size(); ++p) covered[p] += m[p];
        for (int c : covered) CHECK(c <= 1);
    }
    // at least one mask somewhere, or the scene would be degenerate
    int total = 0;
    for (const auto& ms : r.dataset.masks) total += ms.count();
    CHECK(total > 0);
}

TEST_CASE("synth_scene: GT render of GT scene is exact") {
    SynthConfig cfg;
    cfg.instances = 3;
    cfg.anchors_per_instance = 4;
    cfg.clutter = 5;
    cfg.views = 3;
    cfg.width = cfg.height = 32;
    SynthResult r = synth_scene(cfg, 5);
    auto prims = derive_all_primitives(r.gt_scene);
    RenderOutput ro = rasterize(prims, r.dataset.cameras[0], Channels::Color);
    Image img = feature_map_to_image(ro.color);
    CHECK(std::isinf(psnr(img, r.dataset.images[0])));
    CHECK(psnr_capped(img, r.dataset.images[0]) == 99.0);
}

TEST_CASE("scene container: bit-exact round trip") {
    AnchorScene s = tiny_scene(5, 3, 8, 99);
    save_scene("/tmp/gsrd_scene.gssc", s);
    AnchorScene t = load_scene("/tmp/gsrd_scene.gssc");
    REQUIRE(t.anchors.size() == s.anchors.size());
    CHECK(t.K == s.K);
    CHECK(t.D_f == s.D_f);
    for (size_t i = 0; i < s.anchors.size(); ++i) {
        CHECK(t.anchors[i].pos.x == s.anchors[i].pos.x);
        CHECK(t.anchors[i].feature == s.anchors[i].feature);
        CHECK(t.anchors[i].scaling_raw == s.anchors[i].scaling_raw);
        CHECK(t.anchors[i].semantic == s.anchors[i].semantic);
        CHECK(t.anchors[i].offset_mask_logits == s.anchors[i].offset_mask_logits);
        CHECK(t.anchors[i].gt_instance == s.anchors[i].gt_instance);
        for (int k = 0; k < s.K; ++k) {
            CHECK(t.anchors[i].offsets[k].x == s.anchors[i].offsets[k].x);
            CHECK(t.slot_geom[i][k].extent_raw.x == s.slot_geom[i][k].extent_raw.x);
            CHECK(t.slot_geom[i][k].rot.w == s.slot_geom[i][k].rot.w);
        }
    }
    for (size_t l = 0; l < s.decoder.layers.size(); ++l) {
        CHECK(t.decoder.layers[l].W.a == s.decoder.layers[l].W.a);
        CHECK(t.decoder.layers[l].b == s.decoder.layers[l].b);
    }
}

TEST_CASE("scene container: empty scene round trips") {
    AnchorScene s;
    s.K = 4;
    s.D_f = 8;
    s.decoder = make_zero_mlp({8, 16}, Act::None, Act::None);
    save_scene("/tmp/gsrd_empty.gssc", s);
    AnchorScene t = load_scene("/tmp/gsrd_empty.gssc");
    CHECK(t.anchors.empty());
    CHECK(t.K == 4);
}

TEST_CASE("scene container: truncated and corrupt files give structured errors") {
    AnchorScene s = tiny_scene(3);
    save_scene("/tmp/gsrd_trunc.gssc", s);
    auto bytes = read_file("/tmp/gsrd_trunc.gssc");
    std::vector<uint8_t> cut(bytes.begin(), bytes.begin() + bytes.size() / 2);
    write_file("/tmp/gsrd_trunc.gssc", cut);
    CHECK_THROWS_AS(load_scene("/tmp/gsrd_trunc.gssc"), Error);

    bytes[0] = 'X';
    write_file("/tmp/gsrd_badmagic.gssc", bytes);
    CHECK_THROWS_AS(load_scene("/tmp/gsrd_badmagic.gssc"), Error);
}

TEST_CASE("dataset directory round trip") {
    SynthConfig cfg;
    cfg.instances = 3;
    cfg.anchors_per_instance = 4;
    cfg.clutter = 5;
    cfg.views = 5;
    cfg.width = cfg.height = 32;
    SynthResult r = synth_scene(cfg, 11);
    std::string dir = "/tmp/gsrd_ds_test";
    std::filesystem::remove_all(dir);
    save_dataset(dir, r.dataset);
    SynthDataset d = load_dataset(dir);
    REQUIRE(d.cameras.size() == r.dataset.cameras.size());
    CHECK(d.instance_count == r.dataset.instance_count);
    for (size_t v = 0; v < d.cameras.size(); ++v) {
        CHECK(d.images[v].px == r.dataset.images[v].px);
        CHECK(d.cameras[v].R.m == r.dataset.cameras[v].R.m);
        CHECK(d.cameras[v].focal == r.dataset.cameras[v].focal);
        CHECK(d.is_eval[v] == r.dataset.is_eval[v]);
        REQUIRE(d.masks[v].count() == r.dataset.masks[v].count());
        for (int m = 0; m < d.masks[v].count(); ++m) {
            CHECK(d.masks[v].masks[m] == r.dataset.masks[v].masks[m]);
            CHECK(d.masks[v].instance_ids[m] == r.dataset.masks[v].instance_ids[m]);
        }
    }
    CHECK(d.train_views().size() + d.eval_views().size() == d.cameras.size());
}
