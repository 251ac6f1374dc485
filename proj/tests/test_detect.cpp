#include <doctest.h>

#include <cmath>

#include "phasemark/detect.hpp"
#include "phasemark/pipeline.hpp"
#include "phasemark/render.hpp"

using namespace phasemark;

namespace {

// forward render map: marker point -> pixel
Vec2 marker_to_pixel(const Vec2& m, int P, const RenderPose& pose, int w, int h) {
    const Vec2 c((w - 1) / 2.0, (h - 1) / 2.0);
    const Vec2 m_mid((P - 1) / 2.0, (P - 1) / 2.0);
    return c + pose.pixels_per_period *
                   (rotation2d(pose.theta) * (m - m_mid) + Vec2(pose.tx, pose.ty));
}

ImageGray blend_max(const ImageGray& a, const ImageGray& b) {
    ImageGray out = a;
    out.v = a.v.max(b.v);
    return out;
}

} // namespace

TEST_CASE("three finder patterns at the known corners") {
    const MarkerLayout m = layout_hpcode({.periods_across = 21, .marker_id = 6});
    const RenderPose pose{.tx = 0, .ty = 0, .theta = 0, .pixels_per_period = 10};
    const ImageGray img = render(m, pose, 280, 280);
    const auto patterns = detect_finder_patterns(img);
    REQUIRE(patterns.size() == 3);
    for (const Vec2& expected : m.geometry.finder_centers) {
        const Vec2 p = marker_to_pixel(expected, 21, pose, 280, 280);
        double best = 1e30;
        for (const auto& fp : patterns) best = std::min(best, (Vec2(fp.cx, fp.cy) - p).norm());
        CHECK(best < 1.0);
    }
    for (const auto& fp : patterns) {
        CHECK(fp.score > 0.5);
        CHECK(fp.module_size == doctest::Approx(5.0).epsilon(0.2)); // half period at 10 px
    }
}

TEST_CASE("blank and noise images yield no patterns and no regions") {
    const ImageGray blank(128, 128, 0.0);
    CHECK(detect_finder_patterns(blank).empty());
    CHECK(detect_quadrilateral(blank).empty());

    int false_regions = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        detail::SplitMix64 rng(seed);
        ImageGray noise(128, 128);
        for (int i = 0; i < 128 * 128; ++i) noise.v.data()[i] = rng.uniform01();
        false_regions += int(group_markers(detect_finder_patterns(noise)).size());
        false_regions += int(detect_quadrilateral(noise).size());
    }
    CHECK(false_regions == 0);
}

TEST_CASE("two markers give six patterns grouped into two regions") {
    const MarkerLayout m = layout_hpcode({.periods_across = 17, .marker_id = 1});
    const RenderPose a{.tx = -16, .ty = 0, .theta = 0.05, .pixels_per_period = 10};
    const RenderPose b{.tx = 16, .ty = 0, .theta = -0.1, .pixels_per_period = 10};
    const ImageGray img =
        blend_max(render(m, a, 600, 280), render(m, b, 600, 280));
    const auto patterns = detect_finder_patterns(img);
    CHECK(patterns.size() == 6);
    const auto regions = group_markers(patterns);
    REQUIRE(regions.size() == 2);
    const double split = (regions[0].center().x() + regions[1].center().x()) / 2;
    for (const auto& r : regions)
        for (const auto& c : r.corners) CHECK((c.x() < split) == (r.center().x() < split));
}

TEST_CASE("collinear false positives never form a region") {
    std::vector<FinderPattern> fake;
    for (int i = 0; i < 3; ++i) fake.push_back({100.0 + 60 * i, 50.0, 5.0, 0.9});
    CHECK(group_markers(fake).empty());
}

TEST_CASE("stamp quadrilateral detection hits the outer corners") {
    const MarkerLayout m = layout_stamp({.periods_across = 21, .border_thickness = 1, .marker_id = 9});
    const RenderPose pose{.tx = 0.2, .ty = -0.1, .theta = 0.1, .pixels_per_period = 10};
    const ImageGray img = render(m, pose, 300, 300);
    const auto regions = detect_quadrilateral(img);
    REQUIRE(regions.size() == 1);
    // expected outer corners
    const double e = 21 - 0.5;
    for (const Vec2& mc : {Vec2(-0.5, -0.5), Vec2(e, -0.5), Vec2(e, e), Vec2(-0.5, e)}) {
        const Vec2 p = marker_to_pixel(mc, 21, pose, 300, 300);
        double best = 1e30;
        for (const auto& c : regions[0].corners) best = std::min(best, (c - p).norm());
        CHECK(best < 1.5);
    }
}

TEST_CASE("a filled circle is not a quadrilateral") {
    ImageGray img(200, 200, 0.0);
    for (int y = 0; y < 200; ++y)
        for (int x = 0; x < 200; ++x)
            if (std::hypot(x - 99.5, y - 99.5) <= 70) img.v(y, x) = 1.0;
    CHECK(detect_quadrilateral(img).empty());
}

TEST_CASE("two stamps give two regions") {
    const MarkerLayout m = layout_stamp({.periods_across = 15, .border_thickness = 1});
    const ImageGray img = blend_max(
        render(m, {.tx = -12, .ty = 0, .theta = 0.05, .pixels_per_period = 9}, 440, 220),
        render(m, {.tx = 12, .ty = 0, .theta = -0.07, .pixels_per_period = 9}, 440, 220));
    CHECK(detect_quadrilateral(img).size() == 2);
}

TEST_CASE("hp marker pose and id round trip") {
    const int id = 11;
    const MarkerLayout m = layout_hpcode({.periods_across = 21, .marker_id = id});
    const RenderPose pose{.tx = 0.3, .ty = -0.2, .theta = 0.15, .pixels_per_period = 10};
    const ImageGray img = render(m, pose, 300, 300);
    const auto regions = group_markers(detect_finder_patterns(img));
    REQUIRE(regions.size() == 1);
    const SmallMarkerEstimate est = estimate_small_marker(img, regions[0], 21);
    CHECK(std::abs(est.tx - 0.3) < 0.01);
    CHECK(std::abs(est.ty - (-0.2)) < 0.01);
    CHECK(std::abs(wrap_angle(est.theta - 0.15)) < 0.002);
    CHECK(est.marker_id == id);
}

TEST_CASE("stamp marker pose and id round trip") {
    const int id = 5;
    const MarkerLayout m = layout_stamp({.periods_across = 21, .border_thickness = 1, .marker_id = id});
    const RenderPose pose{.tx = -0.35, .ty = 0.15, .theta = -0.08, .pixels_per_period = 10};
    const ImageGray img = render(m, pose, 300, 300);
    const auto regions = detect_quadrilateral(img);
    REQUIRE(regions.size() == 1);
    const SmallMarkerEstimate est = estimate_small_marker(img, regions[0], 21);
    CHECK(std::abs(est.tx - (-0.35)) < 0.01);
    CHECK(std::abs(est.ty - 0.15) < 0.01);
    CHECK(std::abs(wrap_angle(est.theta - (-0.08 + kTwoPi))) < 0.002);
    CHECK(est.marker_id == id);
}

TEST_CASE("marker at theta + pi keeps its center and flips orientation") {
    const MarkerLayout m = layout_hpcode({.periods_across = 21, .marker_id = 3});
    const RenderPose p1{.tx = 0.1, .ty = 0.1, .theta = 0.15, .pixels_per_period = 10};
    RenderPose p2 = p1;
    p2.theta = 0.15 + kPi;
    p2.tx = -0.1; // rotating the scene about the center negates the offset
    p2.ty = -0.1;
    const ImageGray i1 = render(m, p1, 300, 300);
    const ImageGray i2 = render(m, p2, 300, 300);
    const auto r1 = group_markers(detect_finder_patterns(i1));
    const auto r2 = group_markers(detect_finder_patterns(i2));
    REQUIRE(r1.size() == 1);
    REQUIRE(r2.size() == 1);
    const SmallMarkerEstimate e1 = estimate_small_marker(i1, r1[0], 21);
    const SmallMarkerEstimate e2 = estimate_small_marker(i2, r2[0], 21);
    CHECK(std::abs(e1.tx + e2.tx) < 0.01);
    CHECK(std::abs(e1.ty + e2.ty) < 0.01);
    CHECK(std::abs(wrap_angle(e2.theta - e1.theta - kPi)) < 0.002);
}

TEST_CASE("20% dot-zone occlusion still gives a usable pose") {
    const MarkerLayout m = layout_hpcode({.periods_across = 21, .marker_id = 2});
    const RenderPose pose{.tx = 0.2, .ty = 0.1, .theta = 0.05, .pixels_per_period = 10};
    ImageGray img = render(m, pose, 300, 300);
    // occlude a block in the dot zone away from the glyph (which sits
    // top-left of center) and away from the finder squares
    const Vec2 blk = marker_to_pixel(Vec2(14.0, 14.0), 21, pose, 300, 300);
    for (int y = int(blk.y()) - 25; y < int(blk.y()) + 25; ++y)
        for (int x = int(blk.x()) - 40; x < int(blk.x()) + 40; ++x)
            if (y >= 0 && x >= 0 && y < 300 && x < 300) img.v(y, x) = 0.0;
    const auto regions = group_markers(detect_finder_patterns(img));
    REQUIRE(regions.size() == 1);
    const SmallMarkerEstimate est = estimate_small_marker(img, regions[0], 21);
    CHECK(std::abs(est.tx - 0.2) < 0.02);
    CHECK(std::abs(est.ty - 0.1) < 0.02);
}

TEST_CASE("detection recall over random poses with mild noise") {
    const MarkerLayout hp = layout_hpcode({.periods_across = 21, .marker_id = 7});
    detail::SplitMix64 rng(404);
    int ok = 0;
    const int trials = 40;
    for (int t = 0; t < trials; ++t) {
        const double s = 7.0 + 8.0 * rng.uniform01();
        const RenderPose pose{.tx = rng.uniform01() - 0.5, .ty = rng.uniform01() - 0.5,
                              .theta = 0.6 * rng.uniform01() - 0.3, .pixels_per_period = s};
        const int size = int(std::ceil(26 * s));
        ImageGray img = render(hp, pose, size, size);
        img = degrade(img, {.bit_depth = 8, .gaussian_noise_sigma = 0.02, .blur_sigma = 0}, 1000 + t);
        try {
            const auto est = estimate_small_markers(img, MarkerKind::HpCode, 21);
            if (est.markers.size() == 1 && std::abs(est.markers[0].tx - pose.tx) < 0.05 &&
                std::abs(wrap_angle(est.markers[0].theta - wrap_angle_positive(pose.theta))) < 0.01)
                ++ok;
        } catch (const Error&) {
        }
    }
    CHECK(ok >= trials - 1);
}

TEST_CASE("differential pose between two markers") {
    const MarkerLayout m = layout_hpcode({.periods_across = 17, .marker_id = 1});
    detail::SplitMix64 rng(77);
    for (int t = 0; t < 5; ++t) {
        const double dx = 20 + 10 * rng.uniform01(); // periods
        const double dy = 4 * rng.uniform01() - 2;
        const RenderPose pa{.tx = -dx / 2, .ty = -dy / 2, .theta = 0.04, .pixels_per_period = 10};
        RenderPose pb{.tx = dx / 2, .ty = dy / 2, .theta = 0.04, .pixels_per_period = 10};
        const ImageGray img =
            blend_max(render(m, pa, 560, 260), render(m, pb, 560, 260));
        const auto est = estimate_small_markers(img, MarkerKind::HpCode, 17);
        REQUIRE(est.markers.size() == 2);
        const auto& a = est.markers[0].tx < est.markers[1].tx ? est.markers[0] : est.markers[1];
        const auto& b = est.markers[0].tx < est.markers[1].tx ? est.markers[1] : est.markers[0];
        const Pose2D rel = relative_pose(small_marker_pose(a, nullptr, 1.0),
                                         small_marker_pose(b, nullptr, 1.0));
        const Pose2D truth = relative_pose(Pose2D{pa.tx, pa.ty, pa.theta, 0, 0},
                                           Pose2D{pb.tx, pb.ty, pb.theta, 0, 0});
        CHECK(std::abs(rel.x - truth.x) < 0.01);
        CHECK(std::abs(rel.y - truth.y) < 0.01);
        CHECK(std::abs(wrap_angle(rel.theta - truth.theta)) < 0.002);
    }
}
