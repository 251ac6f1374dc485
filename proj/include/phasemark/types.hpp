#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>

namespace phasemark {

// Dense storage is row-major throughout: row y = image line, column x = pixel.
template <typename Scalar>
using ArrayXX = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ArrayXXd = ArrayXX<double>;
using ArrayXXb = ArrayXX<bool>;
using ArrayXXcd = ArrayXX<std::complex<double>>;

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

/// Fold an angle into (-pi, pi].
inline double wrap_angle(double a) {
    a = std::remainder(a, kTwoPi);
    if (a <= -kPi) a += kTwoPi;
    return a;
}

/// Fold an angle into [0, 2*pi).
inline double wrap_angle_positive(double a) {
    a = std::fmod(a, kTwoPi);
    if (a < 0) a += kTwoPi;
    return a;
}

/// Rotation matrix acting on image coordinates (x right, y down).
inline Mat2 rotation2d(double theta) {
    Mat2 r;
    r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return r;
}

} // namespace phasemark
