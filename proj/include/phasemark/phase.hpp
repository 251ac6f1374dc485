#pragma once

#include <chrono>
#include <cmath>
#include <optional>

#include "phasemark/spectral.hpp"

namespace phasemark {

/// Affine phase model phi(x, y) = a*x + b*y + c fitted to one lobe's
/// unwrapped phase. The gradient (a, b) encodes the lattice pitch and
/// direction, c the sub-period offset.
struct PhasePlane {
    double a = 0, b = 0; // radians/pixel
    double c = 0;        // radians, normalized to (-pi, pi]
    double rms_residual = 0;

    double value(double x, double y) const { return a * x + b * y + c; }
    double gradient_norm() const { return std::hypot(a, b); }
    double period_px() const { return kTwoPi / gradient_norm(); }
};

/// Amplitude-weighted least-squares plane through the unwrapped phase.
///
/// Unwrapping subtracts the sub-bin carrier 2*pi*(fx*x + fy*y), unwraps
/// the slowly varying residual outward from the image center (center row
/// first, then each column), and re-adds the carrier. Throws
/// FitDegenerate when the weighted residual RMS exceeds 1 rad, which is
/// what a wrong peak or a lattice-free image produces.
inline PhasePlane fit_phase_plane(const WrappedPhaseMap& map, const SpectralPeak& peak) {
    const int w = map.width(), h = map.height();
    const int xc = w / 2, yc = h / 2;

    ArrayXXd resid(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            resid(y, x) = std::remainder(map.phase(y, x) - kTwoPi * (peak.fx * x + peak.fy * y),
                                         kTwoPi);

    const auto unwrap_towards = [&](double prev, double raw) {
        return raw + kTwoPi * std::round((prev - raw) / kTwoPi);
    };
    for (int x = xc + 1; x < w; ++x) resid(yc, x) = unwrap_towards(resid(yc, x - 1), resid(yc, x));
    for (int x = xc - 1; x >= 0; --x) resid(yc, x) = unwrap_towards(resid(yc, x + 1), resid(yc, x));
    for (int x = 0; x < w; ++x) {
        for (int y = yc + 1; y < h; ++y) resid(y, x) = unwrap_towards(resid(y - 1, x), resid(y, x));
        for (int y = yc - 1; y >= 0; --y) resid(y, x) = unwrap_towards(resid(y + 1, x), resid(y, x));
    }

    // weighted centroid first, then a centered normal-equation solve
    double sw = 0, sx = 0, sy = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double wgt = map.amplitude(y, x);
            sw += wgt;
            sx += wgt * x;
            sy += wgt * y;
        }
    if (sw <= 0) raise(ErrorCode::FitDegenerate, "phase map carries no amplitude");
    const double mx = sx / sw, my = sy / sw;

    double sxx = 0, sxy = 0, syy = 0, spx = 0, spy = 0, sp = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double wgt = map.amplitude(y, x);
            const double dx = x - mx, dy = y - my;
            const double phi = kTwoPi * (peak.fx * x + peak.fy * y) + resid(y, x);
            sxx += wgt * dx * dx;
            sxy += wgt * dx * dy;
            syy += wgt * dy * dy;
            spx += wgt * dx * phi;
            spy += wgt * dy * phi;
            sp += wgt * phi;
        }
    Mat2 A;
    A << sxx, sxy, sxy, syy;
    const Vec2 g = A.ldlt().solve(Vec2(spx, spy));

    PhasePlane plane;
    plane.a = g.x();
    plane.b = g.y();
    plane.c = wrap_angle(sp / sw - plane.a * mx - plane.b * my);
    if (!(plane.gradient_norm() > 0))
        raise(ErrorCode::FitDegenerate, "fitted plane has zero gradient");

    double werr2 = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double e = std::remainder(map.phase(y, x) - plane.value(x, y), kTwoPi);
            werr2 += map.amplitude(y, x) * e * e;
        }
    const double weighted_rms = std::sqrt(werr2 / sw);
    if (weighted_rms > 1.0)
        raise(ErrorCode::FitDegenerate,
              "weighted residual RMS " + std::to_string(weighted_rms) + " rad");

    // report the residual over the upper-amplitude half of the pixels
    std::vector<double> amps(map.amplitude.data(), map.amplitude.data() + map.amplitude.size());
    std::nth_element(amps.begin(), amps.begin() + amps.size() / 2, amps.end());
    const double amp_median = amps[amps.size() / 2];
    double err2 = 0;
    std::int64_t cnt = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (map.amplitude(y, x) > amp_median) {
                const double e = std::remainder(map.phase(y, x) - plane.value(x, y), kTwoPi);
                err2 += e * e;
                ++cnt;
            }
    plane.rms_residual = cnt ? std::sqrt(err2 / double(cnt)) : weighted_rms;
    return plane;
}

struct AnalyzeConfig {
    bool apodize = true;
    std::optional<double> sigma_f;                           // cycles/pixel
    std::optional<std::pair<double, double>> period_hint_px; // [min, max]
};

/// Wall-clock breakdown of one estimation, milliseconds.
struct StageTimings {
    double spectrum_ms = 0;
    double peaks_ms = 0;
    double phase_ms = 0;  // band-pass, inverse transform and plane fits
    double decode_ms = 0; // sampling, classification and absolute decode
    double total_ms = 0;
};

namespace detail {

struct StageClock {
    std::chrono::steady_clock::time_point t = std::chrono::steady_clock::now();
    double lap() {
        const auto now = std::chrono::steady_clock::now();
        const double ms = std::chrono::duration<double, std::milli>(now - t).count();
        t = now;
        return ms;
    }
};

} // namespace detail

/// Full fine-measurement result: the two phase planes, the lattice pitch
/// and its orientation folded into (-pi/4, pi/4]. The quarter-turn
/// ambiguity is inherent here and resolved by the absolute decoders.
struct PhaseResult {
    PhasePlane plane1, plane2;
    SpectralPeak peak1, peak2;
    double period_px = 0;
    double orientation = 0; // (-pi/4, pi/4]
    int width = 0, height = 0;

    Vec2 image_center() const { return Vec2((width - 1) / 2.0, (height - 1) / 2.0); }

    /// Continuous lattice coordinates (u, v) of a pixel: integer values
    /// land on dot centers.
    Vec2 lattice_coords(double x, double y) const {
        return Vec2(plane1.value(x, y) / kTwoPi, plane2.value(x, y) / kTwoPi);
    }

    /// Pixel position of lattice coordinates (u, v).
    Vec2 pixel_of_lattice(double u, double v) const {
        Mat2 m;
        m << plane1.a, plane1.b, plane2.a, plane2.b;
        return m.partialPivLu().solve(Vec2(kTwoPi * u - plane1.c, kTwoPi * v - plane2.c));
    }
};

inline double fold_quarter(double angle) { // into (-pi/4, pi/4]
    double f = std::remainder(angle, kPi / 2);
    if (f <= -kPi / 4) f += kPi / 2;
    return f;
}

/// Run the spectral pipeline on both lobes and assemble the fine result.
inline PhaseResult analyze(const ImageGray& img, const AnalyzeConfig& config = {},
                           StageTimings* timings = nullptr) {
    detail::StageClock clock;
    const Spectrum spec = forward_spectrum(img, config.apodize);
    if (timings) timings->spectrum_ms = clock.lap();
    const auto [peak1, peak2] = find_lattice_peaks(spec, config.period_hint_px);
    if (timings) timings->peaks_ms = clock.lap();

    PhaseResult res;
    res.peak1 = peak1;
    res.peak2 = peak2;
    res.width = img.width();
    res.height = img.height();

    const auto fit_lobe = [&](const SpectralPeak& pk) {
        const double sigma = config.sigma_f.value_or(pk.freq_norm() / 6.0);
        const Spectrum filtered = gaussian_bandpass(spec, pk, sigma);
        return fit_phase_plane(wrapped_phase(filtered), pk);
    };
    res.plane1 = fit_lobe(peak1);
    res.plane2 = fit_lobe(peak2);
    if (timings) timings->phase_ms = clock.lap();

    const double t1 = res.plane1.period_px(), t2 = res.plane2.period_px();
    res.period_px = 0.5 * (t1 + t2);

    double sep = std::abs(wrap_angle(std::atan2(res.plane1.b, res.plane1.a) -
                                     std::atan2(res.plane2.b, res.plane2.a)));
    if (sep > kPi / 2) sep = kPi - sep;
    if (std::abs(sep - kPi / 2) > 0.05)
        raise(ErrorCode::NonOrthogonalLattice, "fitted phase planes are not orthogonal");

    res.orientation = fold_quarter(std::atan2(res.plane1.b, res.plane1.a));
    return res;
}

} // namespace phasemark
