#include <doctest.h>

#include <cmath>

#include "phasemark/image.hpp"
#include "phasemark/phase.hpp"
#include "phasemark/render.hpp"

using namespace phasemark;

namespace {

ImageGray plain_lattice(int periods, const RenderPose& pose, int size) {
    const DotLayout l = DotLayout::filled(periods, periods);
    return render(l, pose, size, size);
}

ImageGray rotate_quarter(const ImageGray& img) { // lossless +90 deg: (x,y) -> (y, W-1-x)
    ImageGray out(img.height(), img.width());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) out.v(img.width() - 1 - x, y) = img.v(y, x);
    return out;
}

} // namespace

TEST_CASE("exact carrier field recovers the plane to 1e-6") {
    const int n = 96;
    const double fx = 0.093, fy = -0.011, c0 = 1.234;
    WrappedPhaseMap map;
    map.phase.resize(n, n);
    map.amplitude = ArrayXXd::Constant(n, n, 1.0);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            map.phase(y, x) = std::remainder(kTwoPi * (fx * x + fy * y) + c0, kTwoPi);
    // hand the fitter a slightly wrong carrier to exercise the unwrap
    const SpectralPeak peak{.fx = fx + 0.0015, .fy = fy - 0.001, .magnitude = 1};
    const PhasePlane plane = fit_phase_plane(map, peak);
    CHECK(plane.a == doctest::Approx(kTwoPi * fx).epsilon(1e-9));
    CHECK(std::abs(plane.a - kTwoPi * fx) < 1e-6);
    CHECK(std::abs(plane.b - kTwoPi * fy) < 1e-6);
    CHECK(std::abs(std::remainder(plane.c - c0, kTwoPi)) < 1e-6);
    CHECK(plane.rms_residual < 1e-6);
}

TEST_CASE("noise-only field degenerates the fit") {
    detail::SplitMix64 rng(17);
    WrappedPhaseMap map;
    map.phase.resize(64, 64);
    map.amplitude.resize(64, 64);
    for (int i = 0; i < 64 * 64; ++i) {
        map.phase.data()[i] = (rng.uniform01() - 0.5) * kTwoPi;
        map.amplitude.data()[i] = rng.uniform01();
    }
    const SpectralPeak peak{.fx = 0.1, .fy = 0.0, .magnitude = 1};
    CHECK_THROWS_AS(fit_phase_plane(map, peak), Error);
}

TEST_CASE("analyze: pitch and orientation of a rendered lattice") {
    const ImageGray img = plain_lattice(21, {.theta = 0.1, .pixels_per_period = 10}, 256);
    const PhaseResult res = analyze(img);
    CHECK(std::abs(res.period_px - 10.0) < 0.05);
    CHECK(std::abs(res.orientation - 0.1) < 0.001);
    CHECK(std::abs(res.plane1.period_px() / res.plane2.period_px() - 1.0) < 0.02);
}

TEST_CASE("analyze: quarter-turn image rotation folds away") {
    const ImageGray img = plain_lattice(21, {.theta = 0.08, .pixels_per_period = 10}, 256);
    const PhaseResult a = analyze(img);
    const PhaseResult b = analyze(rotate_quarter(img));
    CHECK(std::abs(a.period_px - b.period_px) < 0.02);
    CHECK(std::abs(a.orientation - b.orientation) < 0.002);
}

TEST_CASE("analyze: survives 1 px defocus") {
    ImageGray img = plain_lattice(21, {.theta = 0.05, .pixels_per_period = 10}, 256);
    img = degrade(img, {.bit_depth = 16, .gaussian_noise_sigma = 0, .blur_sigma = 1.0}, 0);
    const PhaseResult res = analyze(img);
    CHECK(std::abs(res.orientation - 0.05) < 0.005);
}

TEST_CASE("translation shifts the plane offset, not the gradient") {
    const RenderPose base{.tx = 0, .ty = 0, .theta = 0, .pixels_per_period = 10};
    RenderPose moved = base;
    moved.tx = 0.25;
    const PhaseResult a = analyze(plain_lattice(21, base, 256));
    const PhaseResult b = analyze(plain_lattice(21, moved, 256));
    const double dc = std::remainder(b.plane1.c - a.plane1.c, kTwoPi);
    CHECK(dc == doctest::Approx(-kTwoPi * 0.25).epsilon(0.02));
    CHECK(std::abs(dc + kTwoPi * 0.25) < 0.01);
    CHECK(std::abs(b.plane1.a - a.plane1.a) < 1e-3);
    CHECK(std::abs(b.plane1.b - a.plane1.b) < 1e-3);
}

TEST_CASE("gradient check: dc/dtx matches -2*pi/period by finite differences") {
    const double h = 0.1; // periods
    const PhaseResult lo =
        analyze(plain_lattice(21, {.tx = -h, .pixels_per_period = 10}, 256));
    const PhaseResult hi =
        analyze(plain_lattice(21, {.tx = +h, .pixels_per_period = 10}, 256));
    const double dcdtx = std::remainder(hi.plane1.c - lo.plane1.c, kTwoPi) / (2 * h);
    CHECK(dcdtx == doctest::Approx(-kTwoPi).epsilon(0.01));
}

TEST_CASE("rotation equivariance within 2 mrad") {
    for (double alpha : {-0.15, -0.05, 0.07, 0.18}) {
        const PhaseResult res =
            analyze(plain_lattice(21, {.theta = alpha, .pixels_per_period = 10}, 256));
        CHECK(std::abs(res.orientation - alpha) < 0.002);
    }
}

TEST_CASE("phase planes are orthogonal and equal-pitch for square lattices") {
    const ImageGray img = plain_lattice(25, {.theta = -0.12, .pixels_per_period = 9}, 288);
    const PhaseResult res = analyze(img);
    double sep = std::abs(wrap_angle(std::atan2(res.plane1.b, res.plane1.a) -
                                     std::atan2(res.plane2.b, res.plane2.a)));
    if (sep > kPi / 2) sep = kPi - sep;
    CHECK(std::abs(sep - kPi / 2) < 0.05);
    CHECK(std::abs(res.plane1.period_px() - res.plane2.period_px()) /
              res.period_px <
          0.02);
}

TEST_CASE("analyze propagates lattice-free failures") {
    detail::SplitMix64 rng(23);
    ImageGray img(96, 96);
    for (int i = 0; i < 96 * 96; ++i) img.v.data()[i] = rng.uniform01();
    CHECK_THROWS_AS(analyze(img), Error);
}
