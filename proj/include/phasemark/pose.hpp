#pragma once

#include <cmath>

#include "phasemark/errors.hpp"
#include "phasemark/types.hpp"

namespace phasemark {

/// In-plane pose with scalar standard uncertainties. Absolute poses are
/// normalized to theta in [0, 2*pi); relative poses (from relative_pose)
/// carry theta in (-pi, pi].
struct Pose2D {
    double x = 0, y = 0;   // physical length units
    double theta = 0;      // radians
    double sigma_xy = 0;   // length
    double sigma_theta = 0; // radians
};

/// Homogeneous marker-to-camera transform.
struct Transform {
    Mat3 m = Mat3::Identity();

    Vec2 apply(const Vec2& p) const { return m.topLeftCorner<2, 2>() * p + m.topRightCorner<2, 1>(); }
};

inline Transform to_transform(const Pose2D& p) {
    Transform t;
    const double c = std::cos(p.theta), s = std::sin(p.theta);
    t.m << c, -s, p.x, s, c, p.y, 0, 0, 1;
    return t;
}

inline Transform inverse(const Transform& t) {
    Transform out;
    const Mat2 rt = t.m.topLeftCorner<2, 2>().transpose();
    out.m.topLeftCorner<2, 2>() = rt;
    out.m.topRightCorner<2, 1>() = -rt * t.m.topRightCorner<2, 1>();
    out.m.row(2) << 0, 0, 1;
    return out;
}

inline Pose2D inverse(const Pose2D& p) {
    const Transform t = inverse(to_transform(p));
    Pose2D out;
    out.x = t.m(0, 2);
    out.y = t.m(1, 2);
    out.theta = wrap_angle_positive(-p.theta);
    out.sigma_xy = p.sigma_xy;
    out.sigma_theta = p.sigma_theta;
    return out;
}

/// Pose of b expressed in a's frame (T_a^-1 * T_b). Uncertainties combine
/// in quadrature; covariances are not tracked.
inline Pose2D relative_pose(const Pose2D& a, const Pose2D& b) {
    const Mat3 rel = inverse(to_transform(a)).m * to_transform(b).m;
    Pose2D out;
    out.x = rel(0, 2);
    out.y = rel(1, 2);
    out.theta = wrap_angle(std::atan2(rel(1, 0), rel(0, 0)));
    out.sigma_xy = std::hypot(a.sigma_xy, b.sigma_xy);
    out.sigma_theta = std::hypot(a.sigma_theta, b.sigma_theta);
    return out;
}

/// Scale a pose measured in lattice periods into physical units.
inline Pose2D periods_to_physical(const Pose2D& pose_in_periods, double period) {
    if (!(period > 0)) raise(ErrorCode::InvalidArgument, "period must be > 0");
    Pose2D out = pose_in_periods;
    out.x *= period;
    out.y *= period;
    out.sigma_xy *= period;
    return out;
}

} // namespace phasemark
