#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "affssl/geometry/affine.hpp"
#include "affssl/geometry/warp.hpp"
#include "support/oracles.hpp"

using namespace affssl;

namespace {
double max_abs_diff(const AffineMatrix& m, const oracle::Mat3& o) {
    double worst = 0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) worst = std::max(worst, std::abs(m.at(i, j) - o[i][j]));
    return worst;
}

AffineParams random_params(Rng& rng) {
    return sample_affine_params(rng, ComponentMask::all(), AffineRanges::paper());
}
}  // namespace

TEST_CASE("sample_affine_params respects mask and ranges") {
    Rng rng = make_rng({42});
    ComponentMask rot_only = ComponentMask::only_rotation();
    for (int i = 0; i < 200; ++i) {
        AffineParams p = sample_affine_params(rng, rot_only, AffineRanges::paper());
        CHECK(p.theta >= -90.0);
        CHECK(p.theta <= 90.0);
        CHECK(p.tx == 0.0);
        CHECK(p.ty == 0.0);
        CHECK(p.sigma == 1.0);
        CHECK(p.sx == 0.0);
        CHECK(p.sy == 0.0);
    }
}

TEST_CASE("all components disabled rejected") {
    Rng rng = make_rng({1});
    ComponentMask none{false, false, false, false};
    CHECK_THROWS_AS(sample_affine_params(rng, none, AffineRanges::paper()), ConfigError);
}

TEST_CASE("invalid intervals rejected") {
    Rng rng = make_rng({1});
    AffineRanges bad = AffineRanges::paper();
    bad.theta = {10.0, -10.0};
    CHECK_THROWS_AS(sample_affine_params(rng, ComponentMask::all(), bad), ConfigError);
    AffineRanges zero_scale = AffineRanges::paper();
    zero_scale.sigma = {0.0, 1.3};
    CHECK_THROWS_AS(sample_affine_params(rng, ComponentMask::all(), zero_scale), ConfigError);
}

TEST_CASE("Monte Carlo bounds over 1e5 samples") {
    Rng rng = make_rng({7});
    double theta_min = 1e9, theta_max = -1e9, theta_sum = 0;
    double sg_min = 1e9, sg_max = -1e9;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        AffineParams p = random_params(rng);
        theta_min = std::min(theta_min, p.theta);
        theta_max = std::max(theta_max, p.theta);
        theta_sum += p.theta;
        sg_min = std::min(sg_min, p.sigma);
        sg_max = std::max(sg_max, p.sigma);
        CHECK(std::abs(p.tx) <= 0.25);
        CHECK(std::abs(p.ty) <= 0.25);
        CHECK(std::abs(p.sx) <= 25.0);
        CHECK(std::abs(p.sy) <= 25.0);
    }
    CHECK(theta_min >= -90.0);
    CHECK(theta_max <= 90.0);
    CHECK(std::abs(theta_sum / n) < 1.0);
    CHECK(sg_min >= 0.7);
    CHECK(sg_max <= 1.3);
}

TEST_CASE("build_matrix identity params gives exact identity") {
    AffineMatrix m = build_matrix(AffineParams::identity(), 100, 64);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(m.at(i, j) == (i == j ? 1.0 : 0.0));
}

TEST_CASE("build_matrix matches explicit product oracle") {
    AffineParams p;
    p.theta = 90.0;
    AffineMatrix m = build_matrix(p, 100, 100);
    CHECK(max_abs_diff(m, oracle::affine_matrix_oracle(p, 100, 100)) <= 1e-9);

    Rng rng = make_rng({11});
    for (int i = 0; i < 500; ++i) {
        AffineParams q = random_params(rng);
        AffineMatrix mq = build_matrix(q, 37, 53);
        CHECK(max_abs_diff(mq, oracle::affine_matrix_oracle(q, 37, 53)) <= 1e-9);
    }
}

TEST_CASE("pure scale hand expansion") {
    AffineParams p;
    p.sigma = 2.0;
    AffineMatrix m = build_matrix(p, 10, 10);
    const double c = 4.5;  // center of a 10-px axis
    CHECK(m.at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(m.at(1, 1) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(m.at(0, 1) == doctest::Approx(0.0));
    CHECK(m.at(0, 2) == doctest::Approx(c * (1.0 - 2.0)).epsilon(1e-12));
    CHECK(m.at(1, 2) == doctest::Approx(c * (1.0 - 2.0)).epsilon(1e-12));
}

TEST_CASE("invert: identity, product check, forced singularity") {
    AffineMatrix id = invert(AffineMatrix::identity());
    for (int i = 0; i < 9; ++i) CHECK(id.m[i] == AffineMatrix::identity().m[i]);

    Rng rng = make_rng({13});
    for (int i = 0; i < 100; ++i) {
        AffineMatrix m = build_matrix(random_params(rng), 32, 32);
        AffineMatrix prod = m * invert(m);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                CHECK(std::abs(prod.at(r, c) - (r == c ? 1.0 : 0.0)) <= 1e-9);
    }

    AffineParams tiny;
    tiny.sigma = 1e-13;
    CHECK_THROWS_AS(invert(build_matrix(tiny, 32, 32)), NumericError);
}

TEST_CASE("warp_image identity and translation") {
    ImageBatch img(1, 1, 8, 8);
    Rng rng = make_rng({5});
    for (auto& v : img.data.vec()) v = uniform(rng, 0.0, 1.0);

    ImageBatch same = warp_image(img, AffineMatrix::identity());
    for (int64_t i = 0; i < img.data.numel(); ++i)
        CHECK(std::abs(same.data[i] - img.data[i]) <= 1e-6);

    // one hot pixel, tx = 0.5 of width -> displaced by w/2
    ImageBatch hot(1, 1, 8, 8);
    hot.at(0, 0, 4, 2) = 1.0;
    AffineParams p;
    p.tx = 0.5;
    ImageBatch moved = warp_image(hot, build_matrix(p, 8, 8));
    for (int64_t y = 0; y < 8; ++y)
        for (int64_t x = 0; x < 8; ++x) {
            const double expect = (y == 4 && x == 6) ? 1.0 : 0.0;
            CHECK(std::abs(moved.at(0, 0, y, x) - expect) <= 1e-9);
        }
}

TEST_CASE("warp_image rotation by 180 equals double flip") {
    ImageBatch img(1, 1, 4, 4);
    for (int i = 0; i < 16; ++i) img.data[i] = i / 16.0;  // asymmetric pattern
    AffineParams p;
    p.theta = 180.0;
    ImageBatch rot = warp_image(img, build_matrix(p, 4, 4));
    for (int64_t y = 0; y < 4; ++y)
        for (int64_t x = 0; x < 4; ++x)
            CHECK(std::abs(rot.at(0, 0, y, x) - img.at(0, 0, 3 - y, 3 - x)) <= 1e-5);
}

TEST_CASE("warp_image shape mismatch rejected") {
    ImageBatch empty;
    CHECK_THROWS_AS(warp_image(empty, AffineMatrix::identity()), ContractError);
}

TEST_CASE("warp round trip on interior pixels") {
    // smooth content: bilinear double-resampling only round-trips
    // band-limited images
    const int64_t n = 48;
    ImageBatch img(1, 1, n, n);
    Rng rng = make_rng({17});
    for (int64_t y = 0; y < n; ++y)
        for (int64_t x = 0; x < n; ++x)
            img.at(0, 0, y, x) = 0.5 + 0.25 * std::sin(2 * M_PI * x / 24.0) *
                                           std::cos(2 * M_PI * y / 20.0) +
                                 0.15 * std::sin(2 * M_PI * (x + y) / 32.0);
    for (int trial = 0; trial < 10; ++trial) {
        AffineMatrix m = build_matrix(random_params(rng), n, n);
        AffineMatrix mi = invert(m);
        ImageBatch round = warp_image(warp_image(img, m), mi);
        const Quad fp = footprint_polygon(m, n, n);
        for (int64_t y = 0; y < n; ++y)
            for (int64_t x = 0; x < n; ++x) {
                // only pixels whose forward image stays >= 2 px inside both
                // the image bounds and the valid warped footprint
                double fx, fy;
                m.apply(static_cast<double>(x), static_cast<double>(y), fx, fy);
                if (fx < 2 || fx > n - 3 || fy < 2 || fy > n - 3) continue;
                if (!point_in_convex_polygon(fp, fx, fy, -2.0)) continue;
                CHECK(std::abs(round.at(0, 0, y, x) - img.at(0, 0, y, x)) <= 2e-2);
            }
    }
}

TEST_CASE("footprint_polygon identity and closed forms") {
    Quad q = footprint_polygon(AffineMatrix::identity(), 10, 8);
    CHECK(q[0].x == doctest::Approx(-0.5));
    CHECK(q[2].x == doctest::Approx(9.5));
    CHECK(q[2].y == doctest::Approx(7.5));

    // 45 degree rotation of a square: corners at distance (w/2)*sqrt(2) on axes
    AffineParams p;
    p.theta = 45.0;
    const int w = 10;
    Quad rq = footprint_polygon(build_matrix(p, w, w), w, w);
    const double c = 0.5 * (w - 1);
    const double r = 0.5 * w * std::sqrt(2.0);
    bool found_top = false;
    for (const auto& v : rq)
        if (std::abs(v.x - c) <= 1e-9 && std::abs(v.y - (c - r)) <= 1e-9) found_top = true;
    CHECK(found_top);

    // shear -> parallelogram, opposite sides parallel
    AffineParams sh;
    sh.sx = 25.0;
    Quad pg = footprint_polygon(build_matrix(sh, w, w), w, w);
    const double d1x = pg[1].x - pg[0].x, d1y = pg[1].y - pg[0].y;
    const double d2x = pg[2].x - pg[3].x, d2y = pg[2].y - pg[3].y;
    CHECK(std::abs(d1x * d2y - d1y * d2x) <= 1e-9);
}

TEST_CASE("max_inscribed_rect axis-aligned square is the square") {
    Quad sq = footprint_polygon(AffineMatrix::identity(), 20, 20);
    BoundedCropRect r = max_inscribed_rect(sq);
    CHECK(r.area() == doctest::Approx(400.0).epsilon(1e-4));
}

TEST_CASE("max_inscribed_rect of 45-degree square is half area") {
    AffineParams p;
    p.theta = 45.0;
    Quad q = footprint_polygon(build_matrix(p, 20, 20), 20, 20);
    BoundedCropRect r = max_inscribed_rect(q);
    CHECK(r.area() == doctest::Approx(200.0).epsilon(0.01));
    const double grid = oracle::inscribed_rect_area_grid(q);
    CHECK(r.area() >= 0.99 * grid);
}

TEST_CASE("max_inscribed_rect beats grid oracle on random footprints") {
    Rng rng = make_rng({23});
    ComponentMask rot_shear{false, true, true, false};
    for (int i = 0; i < 15; ++i) {
        AffineParams p = sample_affine_params(rng, rot_shear, AffineRanges::paper());
        Quad q = footprint_polygon(build_matrix(p, 32, 32), 32, 32);
        BoundedCropRect r = max_inscribed_rect(q);
        CHECK(r.area() >= 0.99 * oracle::inscribed_rect_area_grid(q));
        CHECK(point_in_convex_polygon(q, r.x0, r.y0));
        CHECK(point_in_convex_polygon(q, r.x1, r.y0));
        CHECK(point_in_convex_polygon(q, r.x0, r.y1));
        CHECK(point_in_convex_polygon(q, r.x1, r.y1));
    }
}

TEST_CASE("max_inscribed_rect degenerate polygon rejected") {
    Quad line = {Point{0, 0}, Point{10, 0}, Point{10, 0.05}, Point{0, 0.05}};
    CHECK_THROWS_AS(max_inscribed_rect(line), NumericError);
}

TEST_CASE("normalize_params mapping and round trip") {
    const AffineRanges ranges = AffineRanges::paper();
    const ComponentMask full = ComponentMask::all();

    // signed translation mode: identity maps to all zeros
    std::vector<double> v = normalize_params(AffineParams::identity(), full, ranges);
    REQUIRE(v.size() == 6);
    for (double x : v) CHECK(std::abs(x) <= 1e-12);

    // one-sided mode: tx=0 sits at the bottom of the magnitude interval
    AffineRanges unsigned_ranges = ranges;
    unsigned_ranges.signed_translation = false;
    std::vector<double> u = normalize_params(AffineParams::identity(), full, unsigned_ranges);
    CHECK(u[1] == doctest::Approx(-1.0));
    CHECK(u[2] == doctest::Approx(-1.0));

    // midpoints map to zero
    AffineParams mid;
    mid.theta = 0;
    mid.tx = 0;
    mid.ty = 0;
    mid.sigma = 1.0;
    mid.sx = 0;
    mid.sy = 0;
    std::vector<double> vm = normalize_params(mid, full, ranges);
    for (double x : vm) CHECK(std::abs(x) <= 1e-12);

    // round trip
    Rng rng = make_rng({31});
    for (int i = 0; i < 10000; ++i) {
        AffineParams p = sample_affine_params(rng, full, ranges);
        AffineParams back = denormalize_params(normalize_params(p, full, ranges), full, ranges);
        CHECK(std::abs(back.theta - p.theta) <= 1e-9);
        CHECK(std::abs(back.tx - p.tx) <= 1e-9);
        CHECK(std::abs(back.ty - p.ty) <= 1e-9);
        CHECK(std::abs(back.sigma - p.sigma) <= 1e-9);
        CHECK(std::abs(back.sx - p.sx) <= 1e-9);
        CHECK(std::abs(back.sy - p.sy) <= 1e-9);
    }
}

TEST_CASE("normalize_params out of range rejected") {
    AffineParams p;
    p.theta = 120.0;
    CHECK_THROWS_AS(normalize_params(p, ComponentMask::all(), AffineRanges::paper()), ContractError);
}

TEST_CASE("disabled components give constant normalized coordinates") {
    Rng rng = make_rng({37});
    ComponentMask mask{true, false, true, false};  // translation + rotation
    for (int i = 0; i < 100; ++i) {
        AffineParams p = sample_affine_params(rng, mask, AffineRanges::paper());
        std::vector<double> v = normalize_params(p, ComponentMask::all(), AffineRanges::paper());
        CHECK(v[3] == doctest::Approx(0.0));  // sigma pinned at midpoint
        CHECK(v[4] == doctest::Approx(0.0));
        CHECK(v[5] == doctest::Approx(0.0));
    }
    CHECK(mask.active_dim() == 3);
    CHECK(ComponentMask::only_rotation().active_dim() == 1);
    CHECK(ComponentMask::only_translation().active_dim() == 2);
}
