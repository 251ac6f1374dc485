#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "phasemark/detail/fft.hpp"
#include "phasemark/errors.hpp"
#include "phasemark/image.hpp"

namespace phasemark {

/// 2D discrete spectrum. DC sits at index (0, 0); bin (kx, ky) carries
/// frequency (freq_x(kx), freq_y(ky)) in cycles/pixel with the negative
/// half mapped above the Nyquist index.
struct Spectrum {
    ArrayXXcd v; // v(ky, kx)

    int width() const { return int(v.cols()); }
    int height() const { return int(v.rows()); }

    double freq_x(int kx) const {
        const int w = width();
        return (kx <= w / 2 ? kx : kx - w) / double(w);
    }
    double freq_y(int ky) const {
        const int h = height();
        return (ky <= h / 2 ? ky : ky - h) / double(h);
    }
};

/// One lattice lobe at sub-bin resolution.
struct SpectralPeak {
    double fx = 0, fy = 0; // cycles/pixel
    double magnitude = 0;

    double freq_norm() const { return std::hypot(fx, fy); }
};

struct WrappedPhaseMap {
    ArrayXXd phase;     // values in (-pi, pi]
    ArrayXXd amplitude; // nonnegative weights
    int width() const { return int(phase.cols()); }
    int height() const { return int(phase.rows()); }
};

/// DFT of the zero-mean image, optionally apodized by a separable Hann
/// window before transforming. Unnormalized forward convention:
/// sum |spectrum|^2 == N * sum |zero-mean image|^2 when unapodized.
inline Spectrum forward_spectrum(const ImageGray& img, bool apodize) {
    const int w = img.width(), h = img.height();
    if (w < 32 || h < 32) raise(ErrorCode::InvalidArgument, "image must be at least 32x32");

    const double mean = img.v.mean();
    Spectrum spec;
    spec.v.resize(h, w);
    if (apodize) {
        Eigen::ArrayXd wx(w), wy(h);
        for (int x = 0; x < w; ++x) wx(x) = 0.5 * (1 - std::cos(kTwoPi * x / (w - 1)));
        for (int y = 0; y < h; ++y) wy(y) = 0.5 * (1 - std::cos(kTwoPi * y / (h - 1)));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) spec.v(y, x) = (img.v(y, x) - mean) * wy(y) * wx(x);
    } else {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) spec.v(y, x) = img.v(y, x) - mean;
    }
    fft::forward2d(spec.v);
    return spec;
}

namespace detail {

inline double wrap_unit(double f) { // to [-0.5, 0.5)
    f -= std::floor(f + 0.5);
    return f;
}

/// Vertex offset of the parabola through (-1,a) (0,b) (1,c), clamped to
/// half a bin. Flat neighborhoods return 0.
inline double parabolic_offset(double a, double b, double c) {
    const double denom = a - 2 * b + c;
    if (std::abs(denom) < 1e-300) return 0.0;
    return std::clamp((a - c) / (2 * denom), -0.5, 0.5);
}

} // namespace detail

/// Locate the two dominant lattice lobes.
///
/// Candidate bins are restricted to frequencies above DC and below
/// Nyquist (or to 1/period_hint when given). The strongest bin must
/// exceed 5x the median non-DC magnitude, the second lobe is the
/// strongest bin outside the first lobe's neighborhood, and the pair
/// must be orthogonal within 0.35 rad. Each peak is refined to sub-bin
/// precision by a quadratic fit of log-magnitude over its 3x3 bin
/// neighborhood, and the pair is ordered by polar angle in [0, pi).
inline std::pair<SpectralPeak, SpectralPeak> find_lattice_peaks(
    const Spectrum& spec, std::optional<std::pair<double, double>> period_hint_px = {}) {
    const int w = spec.width(), h = spec.height();
    double f_lo = 3.0 / std::min(w, h), f_hi = 0.45;
    if (period_hint_px) {
        f_lo = std::max(f_lo, 1.0 / period_hint_px->second);
        f_hi = std::min(f_hi, 1.0 / period_hint_px->first);
    }

    ArrayXXd mag(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) mag(y, x) = std::abs(spec.v(y, x));

    // noise floor from the median non-DC magnitude
    std::vector<double> all;
    all.reserve(size_t(w) * size_t(h) - 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (x || y) all.push_back(mag(y, x));
    std::nth_element(all.begin(), all.begin() + all.size() / 2, all.end());
    const double median = all[all.size() / 2];

    const auto in_band = [&](int kx, int ky) {
        const double f = std::hypot(spec.freq_x(kx), spec.freq_y(ky));
        return f >= f_lo && f <= f_hi;
    };

    const auto best_bin = [&](const auto& excluded) {
        int bx = -1, by = -1;
        double bm = -1;
        for (int ky = 0; ky < h; ++ky)
            for (int kx = 0; kx < w; ++kx)
                if (mag(ky, kx) > bm && in_band(kx, ky) && !excluded(kx, ky)) {
                    bm = mag(ky, kx);
                    bx = kx;
                    by = ky;
                }
        return std::make_tuple(bx, by, bm);
    };

    const auto [p1x, p1y, m1] = best_bin([](int, int) { return false; });
    if (p1x < 0 || m1 < 5.0 * median)
        raise(ErrorCode::NoLatticeFound, "no spectral lobe above the noise floor");

    const double f1x = spec.freq_x(p1x), f1y = spec.freq_y(p1y);
    const double excl = std::max(2.0 / std::min(w, h), 0.25 * std::hypot(f1x, f1y));
    const auto near = [&](int kx, int ky, double cx, double cy) {
        const double dx = detail::wrap_unit(spec.freq_x(kx) - cx);
        const double dy = detail::wrap_unit(spec.freq_y(ky) - cy);
        return std::hypot(dx, dy) < excl;
    };
    const auto [p2x, p2y, m2] =
        best_bin([&](int kx, int ky) { return near(kx, ky, f1x, f1y) || near(kx, ky, -f1x, -f1y); });
    if (p2x < 0 || m2 < 5.0 * median)
        raise(ErrorCode::NoLatticeFound, "second lattice lobe below the noise floor");

    const double ang1 = std::atan2(f1y, f1x);
    const double ang2 = std::atan2(spec.freq_y(p2y), spec.freq_x(p2x));
    double sep = std::abs(wrap_angle(ang1 - ang2));
    if (sep > kPi / 2) sep = kPi - sep; // lobes are +/- pairs, compare mod pi
    if (std::abs(sep - kPi / 2) > 0.35)
        raise(ErrorCode::NonOrthogonalLattice,
              "lobe separation " + std::to_string(sep) + " rad is not close to pi/2");

    const auto refine = [&](int kx, int ky) {
        const auto lm = [&](int x, int y) {
            return std::log(1e-300 + mag(((y % h) + h) % h, ((x % w) + w) % w));
        };
        SpectralPeak p;
        const double dx = detail::parabolic_offset(lm(kx - 1, ky), lm(kx, ky), lm(kx + 1, ky));
        const double dy = detail::parabolic_offset(lm(kx, ky - 1), lm(kx, ky), lm(kx, ky + 1));
        p.fx = spec.freq_x(kx) + dx / w;
        p.fy = spec.freq_y(ky) + dy / h;
        p.magnitude = mag(ky, kx);
        // canonical representative: polar angle in [0, pi)
        if (p.fy < 0 || (p.fy == 0 && p.fx < 0)) {
            p.fx = -p.fx;
            p.fy = -p.fy;
        }
        return p;
    };

    SpectralPeak a = refine(p1x, p1y);
    SpectralPeak b = refine(p2x, p2y);
    if (std::atan2(a.fy, a.fx) > std::atan2(b.fy, b.fx)) std::swap(a, b);
    return {a, b};
}

/// Multiply the spectrum by a unit-gain Gaussian centered on one lobe.
/// The conjugate lobe is not mirrored, which is what turns the inverse
/// transform into a complex carrier with meaningful phase.
inline Spectrum gaussian_bandpass(const Spectrum& spec, const SpectralPeak& peak, double sigma_f) {
    if (!(sigma_f > 0)) raise(ErrorCode::InvalidArgument, "sigma_f must be > 0");
    const int w = spec.width(), h = spec.height();
    Spectrum out;
    out.v.resize(h, w);
    const double inv2s2 = 1.0 / (2 * sigma_f * sigma_f);
    for (int ky = 0; ky < h; ++ky) {
        const double dy = detail::wrap_unit(spec.freq_y(ky) - peak.fy);
        for (int kx = 0; kx < w; ++kx) {
            const double dx = detail::wrap_unit(spec.freq_x(kx) - peak.fx);
            out.v(ky, kx) = spec.v(ky, kx) * std::exp(-(dx * dx + dy * dy) * inv2s2);
        }
    }
    return out;
}

/// Inverse-transform a single-lobe spectrum into per-pixel phase and
/// amplitude.
inline WrappedPhaseMap wrapped_phase(const Spectrum& filtered) {
    ArrayXXcd field = filtered.v;
    fft::inverse2d(field);
    WrappedPhaseMap map;
    map.phase.resize(field.rows(), field.cols());
    map.amplitude.resize(field.rows(), field.cols());
    for (Eigen::Index i = 0; i < field.size(); ++i) {
        const std::complex<double> z = field.data()[i];
        map.phase.data()[i] = std::arg(z);
        map.amplitude.data()[i] = std::abs(z);
    }
    return map;
}

} // namespace phasemark
