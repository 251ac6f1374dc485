#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "phasemark/image.hpp"
#include "phasemark/layout.hpp"

namespace phasemark {

/// In-plane pose of a marker within a rendered frame.
///
/// The layout is first centered (its middle cell maps to the image
/// center), rotated by theta about the image center, then translated by
/// (tx, ty) periods along the image axes. A marker point m (in periods)
/// lands at
///
///   p = image_center + s*R(theta)*(m - m_mid) + s*(tx, ty)
///
/// with s = pixels_per_period and m_mid = ((cols-1)/2, (rows-1)/2).
/// The inverse map gives the marker coordinates seen at the image center:
/// m_center = m_mid - R(-theta)*(tx, ty).
struct RenderPose {
    double tx = 0.0;
    double ty = 0.0;
    double theta = 0.0;
    double pixels_per_period = 10.0;

    void validate() const {
        if (!(pixels_per_period > 0))
            raise(ErrorCode::InvalidArgument, "pixels_per_period must be > 0");
    }
};

namespace detail {

// 4x4 subsample offsets used for coverage anti-aliasing.
inline constexpr double kSub[4] = {-0.375, -0.125, 0.125, 0.375};

template <typename Scalar>
void paint_rect(Image<Scalar>& img, const PaintRect& rect, const Vec2& c_img, const Vec2& m_mid,
                const Vec2& t, const Mat2& rot, double s) {
    // bounding box of the rect's four image-space corners
    double lox = 1e30, loy = 1e30, hix = -1e30, hiy = -1e30;
    for (const Vec2& m : {Vec2(rect.x0, rect.y0), Vec2(rect.x1, rect.y0), Vec2(rect.x0, rect.y1),
                         Vec2(rect.x1, rect.y1)}) {
        const Vec2 p = c_img + s * (rot * (m - m_mid) + t);
        lox = std::min(lox, p.x());
        hix = std::max(hix, p.x());
        loy = std::min(loy, p.y());
        hiy = std::max(hiy, p.y());
    }
    const int x0 = std::max(0, int(std::floor(lox - 1)));
    const int x1 = std::min(img.width() - 1, int(std::ceil(hix + 1)));
    const int y0 = std::max(0, int(std::floor(loy - 1)));
    const int y1 = std::min(img.height() - 1, int(std::ceil(hiy + 1)));

    const Mat2 inv = rot.transpose();
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            int hits = 0;
            for (double oy : kSub) {
                for (double ox : kSub) {
                    const Vec2 m = m_mid + inv * (Vec2(x + ox, y + oy) - c_img) / s - inv * t;
                    if (m.x() >= rect.x0 && m.x() <= rect.x1 && m.y() >= rect.y0 &&
                        m.y() <= rect.y1)
                        ++hits;
                }
            }
            if (hits) {
                const double cov = hits / 16.0;
                img.v(y, x) = Scalar((1 - cov) * double(img.v(y, x)) + cov * rect.value);
            }
        }
    }
}

} // namespace detail

/// Render white dots (and solid overlay geometry) on a black background.
/// Dots are anti-aliased discs of diameter dot_diameter_ratio * period,
/// coverage-sampled on a 4x4 subpixel grid. Dots outside the frame clip.
template <typename Scalar = double>
Image<Scalar> render(const DotLayout& layout, const std::vector<PaintRect>& overlay,
                     const RenderPose& pose, int out_w, int out_h) {
    layout.validate();
    pose.validate();
    Image<Scalar> img(out_w, out_h, Scalar(0));

    const double s = pose.pixels_per_period;
    const Mat2 rot = rotation2d(pose.theta);
    const Mat2 inv = rot.transpose();
    const Vec2 c_img((out_w - 1) / 2.0, (out_h - 1) / 2.0);
    const Vec2 m_mid((layout.cols - 1) / 2.0, (layout.rows - 1) / 2.0);
    const Vec2 t(pose.tx, pose.ty);

    for (const PaintRect& rect : overlay)
        detail::paint_rect(img, rect, c_img, m_mid, t, rot, s);

    // cull to the lattice cells that can touch the frame
    double lou = 1e30, lov = 1e30, hiu = -1e30, hiv = -1e30;
    for (const Vec2& p : {Vec2(-1, -1), Vec2(out_w, -1), Vec2(-1, out_h), Vec2(out_w, out_h)}) {
        const Vec2 m = m_mid + inv * ((p - c_img) / s - t);
        lou = std::min(lou, m.x());
        hiu = std::max(hiu, m.x());
        lov = std::min(lov, m.y());
        hiv = std::max(hiv, m.y());
    }
    const int j0 = std::max(0, int(std::floor(lou)) - 1);
    const int j1 = std::min(layout.cols - 1, int(std::ceil(hiu)) + 1);
    const int i0 = std::max(0, int(std::floor(lov)) - 1);
    const int i1 = std::min(layout.rows - 1, int(std::ceil(hiv)) + 1);

    const double radius = 0.5 * layout.dot_diameter_ratio * s;
    const double r2 = radius * radius;
    for (int i = i0; i <= i1; ++i) {
        for (int j = j0; j <= j1; ++j) {
            if (!layout.present(i, j)) continue;
            const Vec2 q = c_img + s * (rot * (Vec2(j, i) - m_mid) + t);
            const int x0 = std::max(0, int(std::floor(q.x() - radius - 1)));
            const int x1 = std::min(out_w - 1, int(std::ceil(q.x() + radius + 1)));
            const int y0 = std::max(0, int(std::floor(q.y() - radius - 1)));
            const int y1 = std::min(out_h - 1, int(std::ceil(q.y() + radius + 1)));
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    int hits = 0;
                    for (double oy : detail::kSub) {
                        const double dy = y + oy - q.y();
                        for (double ox : detail::kSub) {
                            const double dx = x + ox - q.x();
                            if (dx * dx + dy * dy <= r2) ++hits;
                        }
                    }
                    if (hits) {
                        const double cov = hits / 16.0;
                        img.v(y, x) = Scalar((1 - cov) * double(img.v(y, x)) + cov);
                    }
                }
            }
        }
    }
    return img;
}

template <typename Scalar = double>
Image<Scalar> render(const DotLayout& layout, const RenderPose& pose, int out_w, int out_h) {
    return render<Scalar>(layout, {}, pose, out_w, out_h);
}

template <typename Scalar = double>
Image<Scalar> render(const MarkerLayout& marker, const RenderPose& pose, int out_w, int out_h) {
    return render<Scalar>(marker.dots, marker.overlay, pose, out_w, out_h);
}

namespace detail {

inline std::string svg_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

} // namespace detail

/// Write the layout as SVG 1.1: one circle per present dot plus rects for
/// solid geometry, physical units in millimeters (layout.period is mm).
inline void export_svg(const DotLayout& layout, const std::vector<PaintRect>& overlay,
                       const std::string& path) {
    layout.validate();
    std::ofstream out(path);
    if (!out) raise(ErrorCode::IoError, "cannot write " + path);
    const double p = layout.period;
    const double w = layout.cols * p, h = layout.rows * p;
    // cell (i, j) occupies [j*p, (j+1)*p] x [i*p, (i+1)*p]; dot center at +p/2
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\""
        << detail::svg_num(w) << "mm\" height=\"" << detail::svg_num(h) << "mm\" viewBox=\"0 0 "
        << detail::svg_num(w) << " " << detail::svg_num(h) << "\">\n"
        << "<rect width=\"" << detail::svg_num(w) << "\" height=\"" << detail::svg_num(h)
        << "\" fill=\"black\"/>\n";
    for (const PaintRect& r : overlay) {
        // overlay rects are in period units centered on dot (0,0); shift to document frame
        const double x = (r.x0 + 0.5) * p, y = (r.y0 + 0.5) * p;
        out << "<rect x=\"" << detail::svg_num(x) << "\" y=\"" << detail::svg_num(y)
            << "\" width=\"" << detail::svg_num((r.x1 - r.x0) * p) << "\" height=\""
            << detail::svg_num((r.y1 - r.y0) * p) << "\" fill=\""
            << (r.value > 0.5 ? "white" : "black") << "\"/>\n";
    }
    const double radius = 0.5 * layout.dot_diameter_ratio * p;
    for (int i = 0; i < layout.rows; ++i)
        for (int j = 0; j < layout.cols; ++j)
            if (layout.present(i, j))
                out << "<circle cx=\"" << detail::svg_num((j + 0.5) * p) << "\" cy=\""
                    << detail::svg_num((i + 0.5) * p) << "\" r=\"" << detail::svg_num(radius)
                    << "\" fill=\"white\"/>\n";
    out << "</svg>\n";
    if (!out) raise(ErrorCode::IoError, "write failed for " + path);
}

inline void export_svg(const DotLayout& layout, const std::string& path) {
    export_svg(layout, {}, path);
}

inline void export_svg(const MarkerLayout& marker, const std::string& path) {
    export_svg(marker.dots, marker.overlay, path);
}

} // namespace phasemark
