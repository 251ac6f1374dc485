#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "phasemark/errors.hpp"
#include "phasemark/types.hpp"

namespace phasemark {

/// Grayscale image with intensities in [0, 1].
///
/// Pixel (0, 0) is top-left, pixel centers sit on integer coordinates,
/// x grows rightward (columns) and y grows downward (rows). Storage is
/// row-major, so `v.data()[y * width + x]` addresses pixel (x, y).
template <typename Scalar = double>
struct Image {
    using Pixels = ArrayXX<Scalar>;

    Pixels v;

    Image() = default;
    Image(int width, int height, Scalar fill = Scalar(0))
        : v(Pixels::Constant(height, width, fill)) {}
    explicit Image(Pixels pixels) : v(std::move(pixels)) {}

    int width() const { return static_cast<int>(v.cols()); }
    int height() const { return static_cast<int>(v.rows()); }
    std::int64_t size() const { return v.size(); }

    Scalar& at(int x, int y) { return v(y, x); }
    Scalar at(int x, int y) const { return v(y, x); }

    bool contains(double x, double y) const {
        return x >= 0.0 && y >= 0.0 && x <= width() - 1.0 && y <= height() - 1.0;
    }
};

using ImageGray = Image<double>;

/// Camera degradation model: optical blur, additive read noise, ADC depth.
struct SensorSpec {
    int bit_depth = 8;                 // one of 8, 10, 12, 16
    double gaussian_noise_sigma = 0.0; // intensity units
    double blur_sigma = 0.0;           // pixels

    void validate() const {
        if (bit_depth != 8 && bit_depth != 10 && bit_depth != 12 && bit_depth != 16)
            raise(ErrorCode::InvalidArgument, "bit_depth must be 8, 10, 12 or 16");
        if (gaussian_noise_sigma < 0 || blur_sigma < 0)
            raise(ErrorCode::InvalidArgument, "noise/blur sigma must be >= 0");
    }
};

/// Bilinear sample with edge clamping; (x, y) in pixel coordinates.
template <typename Scalar>
Scalar sample_bilinear(const Image<Scalar>& img, double x, double y) {
    const int w = img.width(), h = img.height();
    x = std::clamp(x, 0.0, double(w - 1));
    y = std::clamp(y, 0.0, double(h - 1));
    const int x0 = std::min(int(x), w - 2 >= 0 ? w - 2 : 0);
    const int y0 = std::min(int(y), h - 2 >= 0 ? h - 2 : 0);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0, fy = y - y0;
    const double i00 = double(img.v(y0, x0)), i10 = double(img.v(y0, x1));
    const double i01 = double(img.v(y1, x0)), i11 = double(img.v(y1, x1));
    return Scalar((1 - fy) * ((1 - fx) * i00 + fx * i10) + fy * ((1 - fx) * i01 + fx * i11));
}

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& x : k) x /= sum;
    return k;
}

/// SplitMix64: tiny, portable, seed-reproducible.
struct SplitMix64 {
    std::uint64_t state;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    double uniform01() { // in (0, 1]
        return (double(next() >> 11) + 1.0) * 0x1.0p-53;
    }
};

/// Box-Muller standard normal pairs on SplitMix64 uniforms. Chosen over
/// std::normal_distribution because the stream must be identical across
/// standard library implementations.
struct GaussianGen {
    SplitMix64 rng;
    double cached = 0;
    bool has_cached = false;
    explicit GaussianGen(std::uint64_t seed) : rng(seed) {}
    double next() {
        if (has_cached) {
            has_cached = false;
            return cached;
        }
        const double u1 = rng.uniform01();
        const double u2 = rng.uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        cached = r * std::sin(kTwoPi * u2);
        has_cached = true;
        return r * std::cos(kTwoPi * u2);
    }
};

} // namespace detail

/// Separable Gaussian blur, kernel radius ceil(3*sigma), edges clamped.
template <typename Scalar>
Image<Scalar> gaussian_blur(const Image<Scalar>& img, double sigma) {
    if (sigma <= 0) return img;
    const auto k = detail::gaussian_kernel(sigma);
    const int radius = (static_cast<int>(k.size()) - 1) / 2;
    const int w = img.width(), h = img.height();

    Image<Scalar> tmp(w, h), out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * double(img.v(y, std::clamp(x + i, 0, w - 1)));
            tmp.v(y, x) = Scalar(acc);
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * double(tmp.v(std::clamp(y + i, 0, h - 1), x));
            out.v(y, x) = Scalar(acc);
        }
    }
    return out;
}

/// Quantize to the given ADC depth, round half away from zero, clamp to [0, 1].
template <typename Scalar>
Image<Scalar> quantize(const Image<Scalar>& img, int bit_depth) {
    const double maxv = double((1u << bit_depth) - 1u);
    Image<Scalar> out(img.width(), img.height());
    for (Eigen::Index i = 0; i < img.v.size(); ++i) {
        const double q = std::llround(double(img.v.data()[i]) * maxv) / maxv;
        out.v.data()[i] = Scalar(std::clamp(q, 0.0, 1.0));
    }
    return out;
}

/// Apply the full sensor model: blur, then additive Gaussian noise from a
/// deterministic seeded generator, then quantization, then clamping.
template <typename Scalar>
Image<Scalar> degrade(const Image<Scalar>& img, const SensorSpec& spec, std::uint64_t seed) {
    spec.validate();
    Image<Scalar> out = gaussian_blur(img, spec.blur_sigma);
    if (spec.gaussian_noise_sigma > 0) {
        detail::GaussianGen gen(seed);
        for (Eigen::Index i = 0; i < out.v.size(); ++i)
            out.v.data()[i] += Scalar(spec.gaussian_noise_sigma * gen.next());
    }
    return quantize(out, spec.bit_depth);
}

} // namespace phasemark
