#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gsrd/render.hpp"
#include "test_util.hpp"

using namespace gsrd;
using gsrd::testing::rel_err;

namespace {

Camera test_cam(int w = 8, int h = 8, double focal = 40.0) {
    Camera c;
    c.R = Mat3::identity();
    c.t = {0, 0, 0};
    c.focal = focal;
    c.width = w;
    c.height = h;
    return c;
}

Primitive make_prim(Vec3 mu, Vec3 color, double alpha, double extent, Vec sem = {}) {
    Primitive p;
    p.mu = mu;
    p.color = color;
    p.alpha = alpha;
    p.extent = {extent, extent, extent};
    p.rot = Quat{1, 0, 0, 0};
    if (sem.empty()) sem.assign(6, 0.0);
    p.semantic = sem;
    return p;
}

}  // namespace

TEST_CASE("project: on-axis primitive lands at image center") {
    Camera cam = test_cam(64, 64, 50.0);
    Primitive p = make_prim({0, 0, 4.0}, {1, 0, 0}, 0.8, 0.1);
    auto f = project(p, cam);
    REQUIRE(f.has_value());
    CHECK(f->cx == doctest::Approx(32.0));
    CHECK(f->cy == doctest::Approx(32.0));
    CHECK(f->depth == doctest::Approx(4.0));
}

TEST_CASE("project: fronto-parallel isotropic covariance matches hand Jacobian") {
    Camera cam = test_cam(64, 64, 50.0);
    double sigma = 0.2, d = 5.0;
    Primitive p = make_prim({0, 0, d}, {1, 1, 1}, 0.5, sigma);
    auto f = project(p, cam);
    REQUIRE(f.has_value());
    double expect = (50.0 * sigma / d) * (50.0 * sigma / d) + 0.3;
    CHECK(f->cxx == doctest::Approx(expect).epsilon(1e-12));
    CHECK(f->cyy == doctest::Approx(expect).epsilon(1e-12));
    CHECK(f->cxy == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("project: negative depth is culled") {
    Camera cam = test_cam();
    Primitive p = make_prim({0, 0, -2.0}, {1, 0, 0}, 0.5, 0.1);
    CHECK(!project(p, cam).has_value());
}

TEST_CASE("project: far off-screen is culled") {
    Camera cam = test_cam(8, 8, 40.0);
    Primitive p = make_prim({100.0, 0, 2.0}, {1, 0, 0}, 0.5, 0.01);
    CHECK(!project(p, cam).has_value());
}

TEST_CASE("rasterize: single near-opaque primitive dominates its pixel") {
    Camera cam = test_cam(8, 8, 40.0);
    std::vector<Primitive> prims = {make_prim({0, 0, 2.0}, {0.2, 0.7, 0.9}, 0.999, 1.5)};
    RenderOutput ro = rasterize(prims, cam, Channels::Color);
    // center pixel
    double v = ro.color.at(4, 4, 1);
    CHECK(v == doctest::Approx(0.7).epsilon(1e-2));
    auto lst = ro.color.lists.pixel(4, 4);
    REQUIRE(lst.size() == 1);
    CHECK(lst[0].w == doctest::Approx(1.0).epsilon(2e-3));
}

TEST_CASE("rasterize: two stacked equal primitives blend 0.5 / 0.25") {
    Camera cam = test_cam(4, 4, 20.0);
    // big flat footprints so g_geo ~ 1 at the center; alpha = 0.5 gives g = 0.5
    std::vector<Primitive> prims = {make_prim({0, 0, 2.0}, {1, 0, 0}, 0.5, 4.0),
                                    make_prim({0, 0, 2.5}, {0, 1, 0}, 0.5, 4.0)};
    RenderOutput ro = rasterize(prims, cam, Channels::Color);
    auto lst = ro.color.lists.pixel(2, 2);
    REQUIRE(lst.size() == 2);
    CHECK(lst[0].w == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(lst[1].w == doctest::Approx(0.25).epsilon(1e-3));
    CHECK(ro.color.at(2, 2, 0) + ro.color.at(2, 2, 1) == doctest::Approx(0.75).epsilon(1e-3));
}

TEST_CASE("rasterize: empty scene gives zero image") {
    Camera cam = test_cam();
    std::vector<Primitive> prims;
    RenderOutput ro = rasterize(prims, cam, Channels::Color);
    for (double v : ro.color.data) CHECK(v == 0.0);
}

TEST_CASE("rasterize: masked primitives are excluded") {
    Camera cam = test_cam();
    std::vector<Primitive> prims = {make_prim({0, 0, 2.0}, {1, 0, 0}, 0.9, 1.0)};
    prims[0].masked = true;
    RenderOutput ro = rasterize(prims, cam, Channels::Color);
    for (double v : ro.color.data) CHECK(v == 0.0);
}

TEST_CASE("rasterize: transmittance bound per pixel") {
    Camera cam = test_cam(8, 8, 30.0);
    Rng rng(3);
    std::vector<Primitive> prims;
    for (int i = 0; i < 30; ++i)
        prims.push_back(make_prim({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                                   rng.uniform(1.5, 4.0)},
                                  {rng.uniform(), rng.uniform(), rng.uniform()},
                                  rng.uniform(0.2, 0.95), rng.uniform(0.1, 0.6)));
    RenderOutput ro = rasterize(prims, cam, Channels::Color);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            double sum = 0;
            for (const auto& e : ro.color.lists.pixel(y, x)) {
                CHECK(e.w >= 0.0);
                sum += e.w;
            }
            CHECK(sum <= 1.0 + 1e-9);
        }
}

TEST_CASE("rasterize: channel linearity") {
    Camera cam = test_cam(8, 8, 30.0);
    Rng rng(5);
    std::vector<Primitive> prims;
    for (int i = 0; i < 10; ++i)
        prims.push_back(make_prim({rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                                   rng.uniform(1.5, 3.0)},
                                  {rng.uniform(), rng.uniform(), rng.uniform()},
                                  rng.uniform(0.3, 0.9), rng.uniform(0.1, 0.4)));
    RenderOutput a = rasterize(prims, cam, Channels::Color);
    const double lam = 0.37;
    auto scaled = prims;
    for (auto& p : scaled) p.color = p.color * lam;
    RenderOutput b = rasterize(scaled, cam, Channels::Color);
    for (size_t i = 0; i < a.color.data.size(); ++i)
        CHECK(b.color.data[i] == doctest::Approx(lam * a.color.data[i]).epsilon(1e-12));
}

TEST_CASE("rasterize: semantic pass reuses color-pass weights bit-exactly") {
    Camera cam = test_cam(8, 8, 30.0);
    Rng rng(6);
    std::vector<Primitive> prims;
    for (int i = 0; i < 12; ++i) {
        Vec sem(6);
        for (double& s : sem) s = rng.uniform(-2, 2);
        prims.push_back(make_prim({rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                                   rng.uniform(1.5, 3.0)},
                                  {rng.uniform(), rng.uniform(), rng.uniform()},
                                  rng.uniform(0.3, 0.9), rng.uniform(0.1, 0.4), sem));
    }
    RenderOutput ro = rasterize(prims, cam, Channels::Both);

    // identical lists
    REQUIRE(ro.color.lists.items.size() == ro.semantic.lists.items.size());
    for (size_t i = 0; i < ro.color.lists.items.size(); ++i) {
        CHECK(ro.color.lists.items[i].prim == ro.semantic.lists.items[i].prim);
        CHECK(ro.color.lists.items[i].w == ro.semantic.lists.items[i].w);
    }
    // semantic map equals weights applied to semantic vectors
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            Vec acc(6, 0.0);
            for (const auto& e : ro.color.lists.pixel(y, x))
                for (int c = 0; c < 6; ++c) acc[c] += prims[e.prim].semantic[c] * e.w;
            for (int c = 0; c < 6; ++c) CHECK(ro.semantic.at(y, x, c) == acc[c]);
        }
}

TEST_CASE("rasterize_backward: single primitive linearity") {
    Camera cam = test_cam(4, 4, 20.0);
    std::vector<Primitive> prims = {make_prim({0, 0, 2.0}, {0.5, 0.5, 0.5}, 0.9999, 6.0)};
    RenderOutput ro = rasterize(prims, cam, Channels::Color);
    auto lst = ro.color.lists.pixel(2, 2);
    REQUIRE(lst.size() == 1);

    Vec grad(ro.color.data.size(), 0.0);
    grad[(2 * 4 + 2) * 3 + 1] = 1.0;  // e2 at one pixel
    RasterGrads g = rasterize_backward(ro.color, grad, prims, Channels::Color);
    CHECK(g.d_color[1] == doctest::Approx(lst[0].w));
    CHECK(g.d_color[0] == 0.0);
}

TEST_CASE("rasterize_backward: zero grad image gives zero gradients") {
    Camera cam = test_cam(4, 4, 20.0);
    std::vector<Primitive> prims = {make_prim({0, 0, 2.0}, {0.5, 0.5, 0.5}, 0.7, 1.0)};
    RenderOutput ro = rasterize(prims, cam, Channels::Color);
    Vec grad(ro.color.data.size(), 0.0);
    RasterGrads g = rasterize_backward(ro.color, grad, prims, Channels::Color);
    for (double v : g.d_color) CHECK(v == 0.0);
    for (double v : g.d_alpha) CHECK(v == 0.0);
}

TEST_CASE("rasterize_backward: stale lists are rejected") {
    Camera cam = test_cam(4, 4, 20.0);
    std::vector<Primitive> prims = {make_prim({0, 0, 2.0}, {0.5, 0.5, 0.5}, 0.7, 1.0)};
    RenderOutput ro = rasterize(prims, cam, Channels::Color);
    prims[0].color.x = 0.9;  // mutate after forward
    Vec grad(ro.color.data.size(), 0.0);
    CHECK_THROWS_AS(rasterize_backward(ro.color, grad, prims, Channels::Color), Error);
}

TEST_CASE("rasterize_backward: finite differences on 4x4, 3 primitives") {
    Camera cam = test_cam(4, 4, 18.0);
    Rng rng(11);
    std::vector<Primitive> prims = {
        make_prim({-0.1, 0.05, 2.0}, {0.8, 0.2, 0.4}, 0.55, 0.5),
        make_prim({0.12, -0.02, 2.6}, {0.1, 0.9, 0.3}, 0.4, 0.6),
        make_prim({0.0, 0.1, 3.1}, {0.5, 0.5, 0.9}, 0.7, 0.7)};

    Vec grad(4 * 4 * 3);
    for (double& v : grad) v = rng.uniform(-1, 1);

    RenderOutput ro = rasterize(prims, cam, Channels::Color);
    RasterGrads g = rasterize_backward(ro.color, grad, prims, Channels::Color);

    auto loss = [&]() {
        RenderOutput r = rasterize(prims, cam, Channels::Color);
        double s = 0;
        for (size_t i = 0; i < r.color.data.size(); ++i) s += grad[i] * r.color.data[i];
        return s;
    };

    double max_rel_c = 0.0;
    for (size_t i = 0; i < prims.size(); ++i)
        for (int c = 0; c < 3; ++c) {
            double fd = gsrd::testing::central_diff(loss, prims[i].color[c]);
            max_rel_c = std::max(max_rel_c, rel_err(g.d_color[i * 3 + c], fd));
        }
    CHECK(max_rel_c <= 1e-6);  // map is linear in channels

    double max_rel_a = 0.0;
    for (size_t i = 0; i < prims.size(); ++i) {
        double fd = gsrd::testing::central_diff(loss, prims[i].alpha);
        max_rel_a = std::max(max_rel_a, rel_err(g.d_alpha[i], fd));
    }
    CHECK(max_rel_a <= 1e-3);
}

TEST_CASE("psnr: closed forms") {
    Image a(4, 4, 3), b(4, 4, 3);
    for (size_t i = 0; i < a.px.size(); ++i) a.px[i] = 0.5;
    b.px = a.px;
    CHECK(std::isinf(psnr(a, b)));
    CHECK(psnr_capped(a, b) == 99.0);

    for (size_t i = 0; i < b.px.size(); ++i) b.px[i] = 0.6;
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));

    Image c(2, 2, 1), d(2, 2, 1);
    c.px = {0, 1, 0, 1};
    d.px = {1, 0, 1, 0};
    CHECK(psnr(c, d) == doctest::Approx(0.0).epsilon(1e-12));

    Image e(2, 2, 3);
    CHECK_THROWS_AS(psnr(a, e), Error);
}

TEST_CASE("ssim: identical images give 1, gradient matches finite differences") {
    Rng rng(13);
    Image a(8, 8, 2), b(8, 8, 2);
    for (double& v : a.px) v = rng.uniform(0.2, 0.8);
    for (size_t i = 0; i < b.px.size(); ++i) b.px[i] = clamp01(a.px[i] + 0.1 * rng.uniform(-1, 1));

    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

    Vec grad;
    double s0 = ssim_with_grad(a, b, grad);
    CHECK(s0 < 1.0);
    CHECK(s0 > 0.3);

    auto loss = [&]() { return ssim(a, b); };
    double max_rel = 0.0;
    for (size_t i = 0; i < a.px.size(); i += 7) {
        double fd = gsrd::testing::central_diff(loss, a.px[i], 1e-5);
        max_rel = std::max(max_rel, rel_err(grad[i], fd));
    }
    CHECK(max_rel <= 1e-3);
}

TEST_CASE("ppm round trip") {
    Rng rng(17);
    Image a(6, 5, 3);
    for (double& v : a.px) v = rng.uniform();
    write_ppm("/tmp/gsrd_test.ppm", a);
    Image b = read_ppm("/tmp/gsrd_test.ppm");
    REQUIRE(b.h == 6);
    REQUIRE(b.w == 5);
    for (size_t i = 0; i < a.px.size(); ++i) CHECK(std::abs(a.px[i] - b.px[i]) <= 0.5 / 255.0);
}

TEST_CASE("f64 dump round trip is bit exact") {
    Rng rng(19);
    Image a(3, 4, 6);
    for (double& v : a.px) v = rng.normal();
    write_f64_dump("/tmp/gsrd_test.f64", a);
    Image b = read_f64_dump("/tmp/gsrd_test.f64");
    CHECK(a.px == b.px);
    CHECK(b.c == 6);
}
