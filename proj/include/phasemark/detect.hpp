#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "phasemark/decode.hpp"
#include "phasemark/image.hpp"
#include "phasemark/layout.hpp"
#include "phasemark/phase.hpp"

namespace phasemark {

/// One QR-style finder square candidate.
struct FinderPattern {
    double cx = 0, cy = 0;
    double module_size = 0; // one ring width, pixels
    double score = 0;       // run-length match quality in [0, 1]
};

/// A detected small marker: four sub-pixel corner points ordered clockwise
/// from the detected origin corner. For HP markers the corners are the
/// three finder centers plus the parallelogram-completed fourth; for Stamp
/// markers they are the outer border corners.
struct MarkerRegion {
    std::array<Vec2, 4> corners{};
    MarkerKind kind = MarkerKind::HpCode;
    int marker_id = -1; // unknown until estimated

    Vec2 center() const { return (corners[0] + corners[1] + corners[2] + corners[3]) / 4.0; }
};

namespace detail {

inline double otsu_threshold(const ImageGray& img) {
    std::array<std::int64_t, 256> hist{};
    for (Eigen::Index i = 0; i < img.v.size(); ++i) {
        int b = int(img.v.data()[i] * 255.0);
        hist[size_t(std::clamp(b, 0, 255))]++;
    }
    const double total = double(img.v.size());
    double sum = 0;
    for (int i = 0; i < 256; ++i) sum += i * double(hist[size_t(i)]);
    double sum_b = 0, w_b = 0, best = -1;
    int thr = 127;
    for (int i = 0; i < 256; ++i) {
        w_b += double(hist[size_t(i)]);
        if (w_b == 0) continue;
        const double w_f = total - w_b;
        if (w_f == 0) break;
        sum_b += i * double(hist[size_t(i)]);
        const double m_b = sum_b / w_b, m_f = (sum - sum_b) / w_f;
        const double between = w_b * w_f * (m_b - m_f) * (m_b - m_f);
        if (between > best) {
            best = between;
            thr = i;
        }
    }
    return (thr + 0.5) / 255.0;
}

inline bool ratio_ok(double len, double unit, double expect, double tol = 0.4) {
    // half-pixel quantization slack on the narrow rings only; the wide
    // core must hold the 3x ratio or dot rows (1:1:1 runs) slip through
    const double slack = expect == 1 ? 0.5 : 0.0;
    return std::abs(len - expect * unit) <= tol * expect * unit + slack;
}

/// Both diagonals through (x, y) must also carry the 1:1:3:1:1 signature
/// (any straight cut through centered square rings preserves the ratios).
/// This is what separates a finder core from grazing cuts of the dot grid.
inline bool cross_check_diagonal(const ArrayXXb& bin, int x, int y) {
    const int w = int(bin.cols()), h = int(bin.rows());
    const auto at = [&](int xx, int yy) {
        return xx >= 0 && yy >= 0 && xx < w && yy < h && bin(yy, xx);
    };
    for (int sy : {1, -1}) { // main and anti diagonal
        const auto run = [&](int dir, bool value, int skip) {
            int n = 0, xx = x + dir * (skip + 1), yy = y + dir * sy * (skip + 1);
            while (at(xx, yy) == value && n < h) {
                xx += dir;
                yy += dir * sy;
                ++n;
            }
            return n;
        };
        if (!at(x, y)) return false;
        const int core_p = run(1, true, 0), core_m = run(-1, true, 0);
        const double core = core_p + core_m + 1;
        const int b_p = run(1, false, core_p), b_m = run(-1, false, core_m);
        const int w_p = run(1, true, core_p + b_p), w_m = run(-1, true, core_m + b_m);
        const double unit = (core + b_p + b_m + w_p + w_m) / 7.0;
        if (unit < 1.0) return false;
        if (!ratio_ok(core, unit, 3) || !ratio_ok(b_p, unit, 1) || !ratio_ok(b_m, unit, 1) ||
            !ratio_ok(w_p, unit, 1) || !ratio_ok(w_m, unit, 1))
            return false;
    }
    return true;
}

/// Vertical cross-check of a 1:1:3:1:1 signature through (x, y); returns
/// the refined center y and the vertical unit, or nothing.
inline std::optional<std::pair<double, double>> cross_check_column(const ArrayXXb& bin, int x,
                                                                   int y, double unit_hint) {
    const int h = int(bin.rows());
    if (!bin(y, x)) return {};
    int top = y;
    while (top > 0 && bin(top - 1, x)) --top;
    int bot = y;
    while (bot < h - 1 && bin(bot + 1, x)) ++bot;
    const double core = bot - top + 1;

    const auto run_up = [&](int from, bool value) {
        int i = from, n = 0;
        while (i >= 0 && bin(i, x) == value) {
            --i;
            ++n;
        }
        return n;
    };
    const auto run_dn = [&](int from, bool value) {
        int i = from, n = 0;
        while (i < h && bin(i, x) == value) {
            ++i;
            ++n;
        }
        return n;
    };
    const int b_up = run_up(top - 1, false), b_dn = run_dn(bot + 1, false);
    const int w_up = run_up(top - 1 - b_up, true), w_dn = run_dn(bot + 1 + b_dn, true);

    const double unit = (core + b_up + b_dn + w_up + w_dn) / 7.0;
    if (unit < 1.0 || std::abs(unit - unit_hint) > 0.5 * unit_hint) return {};
    if (!ratio_ok(core, unit, 3) || !ratio_ok(b_up, unit, 1) || !ratio_ok(b_dn, unit, 1) ||
        !ratio_ok(w_up, unit, 1) || !ratio_ok(w_dn, unit, 1))
        return {};
    return std::make_pair(top + (core - 1) / 2.0, unit);
}

} // namespace detail

/// Scan for the white-black-white(3x)-black-white run-length signature of
/// the marker finder squares, cross-check each hit vertically, cluster the
/// crossings and refine centers by intensity centroid over the core.
/// Returns all candidates sorted by descending score.
inline std::vector<FinderPattern> detect_finder_patterns(const ImageGray& img) {
    const int w = img.width(), h = img.height();
    const double thr = detail::otsu_threshold(img);
    ArrayXXb bin(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) bin(y, x) = img.v(y, x) > thr;

    struct Hit {
        double x, y, unit, dev;
    };
    std::vector<Hit> hits;

    std::vector<std::pair<int, bool>> runs; // (length, value)
    for (int y = 0; y < h; ++y) {
        runs.clear();
        int x = 0;
        while (x < w) {
            const bool v = bin(y, x);
            int n = 0;
            while (x < w && bin(y, x) == v) {
                ++x;
                ++n;
            }
            runs.emplace_back(n, v);
        }
        if (runs.size() < 5) continue;
        int pos = 0;
        for (size_t i = 0; i + 4 < runs.size(); ++i) {
            const int l0 = runs[i].first, l1 = runs[i + 1].first, l2 = runs[i + 2].first,
                      l3 = runs[i + 3].first, l4 = runs[i + 4].first;
            if (runs[i].second) { // white black white black white
                const double unit = (l0 + l1 + l2 + l3 + l4) / 7.0;
                if (unit >= 1.5 && detail::ratio_ok(l0, unit, 1) && detail::ratio_ok(l1, unit, 1) &&
                    detail::ratio_ok(l2, unit, 3) && detail::ratio_ok(l3, unit, 1) &&
                    detail::ratio_ok(l4, unit, 1)) {
                    const double cx = pos + l0 + l1 + (l2 - 1) / 2.0;
                    const auto vert = detail::cross_check_column(bin, int(std::lround(cx)), y, unit);
                    if (vert && detail::cross_check_diagonal(
                                    bin, int(std::lround(cx)), int(std::lround(vert->first)))) {
                        double dev = 0;
                        for (auto [len, expect] : {std::pair{l0, 1}, {l1, 1}, {l2, 3}, {l3, 1},
                                                   {l4, 1}})
                            dev += std::abs(len - expect * unit) / (expect * unit);
                        hits.push_back({cx, vert->first, (unit + vert->second) / 2, dev / 5.0});
                    }
                }
            }
            pos += runs[i].first;
        }
    }

    // cluster crossings that belong to one finder square
    std::vector<FinderPattern> out;
    std::vector<bool> used(hits.size(), false);
    for (size_t i = 0; i < hits.size(); ++i) {
        if (used[i]) continue;
        double sx = 0, sy = 0, su = 0, sd = 0;
        int n = 0;
        for (size_t j = i; j < hits.size(); ++j) {
            if (used[j]) continue;
            if (std::abs(hits[j].x - hits[i].x) < 2 * hits[i].unit &&
                std::abs(hits[j].y - hits[i].y) < 2 * hits[i].unit) {
                used[j] = true;
                sx += hits[j].x;
                sy += hits[j].y;
                su += hits[j].unit;
                sd += hits[j].dev;
                ++n;
            }
        }
        if (n < 2) continue; // a real core is several rows tall
        FinderPattern p;
        p.cx = sx / n;
        p.cy = sy / n;
        p.module_size = su / n;
        p.score = std::clamp(1.0 - sd / n, 0.0, 1.0);

        // refine by intensity centroid over the bright core
        const double r = 1.5 * p.module_size;
        double swt = 0, cx = 0, cy = 0;
        for (int y = std::max(0, int(p.cy - r)); y <= std::min(h - 1, int(p.cy + r)); ++y)
            for (int x = std::max(0, int(p.cx - r)); x <= std::min(w - 1, int(p.cx + r)); ++x) {
                const double wt = img.v(y, x);
                swt += wt;
                cx += wt * x;
                cy += wt * y;
            }
        if (swt > 0) {
            p.cx = cx / swt;
            p.cy = cy / swt;
        }
        out.push_back(p);
    }
    std::sort(out.begin(), out.end(),
              [](const FinderPattern& a, const FinderPattern& b) { return a.score > b.score; });
    return out;
}

/// Group finder patterns into marker regions: triads with consistent
/// module size (20%), near-equal arms and a right angle (0.15 rad) at the
/// corner pattern. The fourth corner is completed as a parallelogram and
/// corners are ordered clockwise from the right-angle (origin) corner.
inline std::vector<MarkerRegion> group_markers(const std::vector<FinderPattern>& patterns) {
    struct Triad {
        size_t a, b, c;
        double err;
    };
    std::vector<Triad> triads;
    const size_t n = patterns.size();
    for (size_t a = 0; a < n; ++a) {
        for (size_t b = 0; b < n; ++b) {
            for (size_t c = b + 1; c < n; ++c) {
                if (a == b || a == c) continue;
                const auto &A = patterns[a], &B = patterns[b], &C = patterns[c];
                const double ms = (A.module_size + B.module_size + C.module_size) / 3;
                if (std::abs(A.module_size - ms) > 0.2 * ms ||
                    std::abs(B.module_size - ms) > 0.2 * ms ||
                    std::abs(C.module_size - ms) > 0.2 * ms)
                    continue;
                const Vec2 ab(B.cx - A.cx, B.cy - A.cy), ac(C.cx - A.cx, C.cy - A.cy);
                const double lab = ab.norm(), lac = ac.norm();
                if (lab < 6 * ms || lac < 6 * ms) continue; // arms must clear the squares
                if (std::abs(lab - lac) > 0.2 * std::max(lab, lac)) continue;
                const double ang =
                    std::acos(std::clamp(ab.dot(ac) / (lab * lac), -1.0, 1.0));
                if (std::abs(ang - kPi / 2) > 0.15) continue;
                triads.push_back({a, b, c,
                                  std::abs(ang - kPi / 2) + std::abs(lab - lac) / lab});
            }
        }
    }
    std::sort(triads.begin(), triads.end(),
              [](const Triad& x, const Triad& y) { return x.err < y.err; });

    std::vector<MarkerRegion> out;
    std::vector<bool> used(n, false);
    for (const Triad& t : triads) {
        if (used[t.a] || used[t.b] || used[t.c]) continue;
        used[t.a] = used[t.b] = used[t.c] = true;
        const auto &A = patterns[t.a], &B = patterns[t.b], &C = patterns[t.c];
        Vec2 pa(A.cx, A.cy), pb(B.cx, B.cy), pc(C.cx, C.cy);
        // clockwise in image coordinates (y down)
        const Vec2 ab = pb - pa, ac = pc - pa;
        if (ab.x() * ac.y() - ab.y() * ac.x() < 0) std::swap(pb, pc);
        MarkerRegion r;
        r.kind = MarkerKind::HpCode;
        r.corners = {pa, pb, pb + pc - pa, pc};
        out.push_back(r);
    }
    return out;
}

namespace detail {

/// Moore-neighbor boundary trace of one connected component, clockwise.
/// Terminates when the walk re-enters the start pixel from the original
/// direction (Jacob's criterion).
inline std::vector<Vec2> trace_contour(const ArrayXXb& mask, int sx, int sy) {
    static const int dx8[8] = {1, 1, 0, -1, -1, -1, 0, 1};
    static const int dy8[8] = {0, 1, 1, 1, 0, -1, -1, -1};
    const int w = int(mask.cols()), h = int(mask.rows());
    const auto at = [&](int x, int y) {
        return x >= 0 && y >= 0 && x < w && y < h && mask(y, x);
    };
    std::vector<Vec2> contour;
    contour.emplace_back(sx, sy);
    int px = sx, py = sy;
    int back = 4; // the start pixel is row-major first, so west is background
    int first_px = -1, first_py = -1, first_back = -1;
    const size_t guard_max = size_t(4) * size_t(w) * size_t(h) + 16;
    for (size_t guard = 0; guard < guard_max; ++guard) {
        int found = -1;
        for (int k = 1; k <= 8; ++k) {
            const int dd = (back + k) % 8;
            if (at(px + dx8[dd], py + dy8[dd])) {
                found = dd;
                break;
            }
        }
        if (found < 0) break; // isolated pixel
        px += dx8[found];
        py += dy8[found];
        back = (found + 4) % 8;
        if (first_back < 0) {
            first_px = px;
            first_py = py;
            first_back = back;
        } else if (px == first_px && py == first_py && back == first_back) {
            contour.pop_back(); // the start pixel is already first
            break;
        }
        contour.emplace_back(px, py);
    }
    return contour;
}

inline double polyline_length(const std::vector<Vec2>& pts, bool closed) {
    double len = 0;
    for (size_t i = 1; i < pts.size(); ++i) len += (pts[i] - pts[i - 1]).norm();
    if (closed && pts.size() > 1) len += (pts.front() - pts.back()).norm();
    return len;
}

inline void douglas_peucker(const std::vector<Vec2>& pts, size_t i0, size_t i1, double eps,
                            std::vector<size_t>& keep) {
    if (i1 <= i0 + 1) return;
    const Vec2 a = pts[i0], b = pts[i1];
    const Vec2 ab = b - a;
    const double lab = ab.norm();
    double worst = -1;
    size_t wi = i0;
    for (size_t i = i0 + 1; i < i1; ++i) {
        const Vec2 ap = pts[i] - a;
        const double d = lab > 1e-12 ? std::abs(ab.x() * ap.y() - ab.y() * ap.x()) / lab
                                     : ap.norm();
        if (d > worst) {
            worst = d;
            wi = i;
        }
    }
    if (worst > eps) {
        douglas_peucker(pts, i0, wi, eps, keep);
        keep.push_back(wi);
        douglas_peucker(pts, wi, i1, eps, keep);
    }
}

/// Simplify a closed contour; anchor at the two mutually farthest points.
inline std::vector<Vec2> simplify_closed(const std::vector<Vec2>& contour, double eps) {
    const size_t n = contour.size();
    if (n < 4) return contour;
    size_t a = 0, b = n / 2;
    double best = -1;
    for (size_t i = 0; i < n; i += std::max<size_t>(1, n / 256)) {
        for (size_t j = i + 1; j < n; j += std::max<size_t>(1, n / 256)) {
            const double d = (contour[i] - contour[j]).squaredNorm();
            if (d > best) {
                best = d;
                a = i;
                b = j;
            }
        }
    }
    std::vector<Vec2> half1(contour.begin() + long(a), contour.begin() + long(b) + 1);
    std::vector<Vec2> half2(contour.begin() + long(b), contour.end());
    half2.insert(half2.end(), contour.begin(), contour.begin() + long(a) + 1);

    std::vector<Vec2> out;
    for (const auto& half : {half1, half2}) {
        std::vector<size_t> keep;
        douglas_peucker(half, 0, half.size() - 1, eps, keep);
        std::sort(keep.begin(), keep.end());
        out.push_back(half.front());
        for (size_t k : keep) out.push_back(half[k]);
    }
    return out;
}

inline double polygon_area(const std::vector<Vec2>& poly) {
    double acc = 0;
    for (size_t i = 0; i < poly.size(); ++i) {
        const Vec2 &p = poly[i], &q = poly[(i + 1) % poly.size()];
        acc += p.x() * q.y() - q.x() * p.y();
    }
    return std::abs(acc) / 2;
}

inline bool is_convex(const std::array<Vec2, 4>& q) {
    double sign = 0;
    for (int i = 0; i < 4; ++i) {
        const Vec2 a = q[size_t((i + 1) % 4)] - q[size_t(i)];
        const Vec2 b = q[size_t((i + 2) % 4)] - q[size_t((i + 1) % 4)];
        const double cr = a.x() * b.y() - a.y() * b.x();
        if (i == 0)
            sign = cr;
        else if (cr * sign < 0)
            return false;
    }
    return true;
}

/// Least-squares line through contour points between two corners,
/// trimmed away from the corners; returns (point, direction).
inline std::pair<Vec2, Vec2> fit_edge_line(const std::vector<Vec2>& pts) {
    Vec2 mean = Vec2::Zero();
    for (const Vec2& p : pts) mean += p;
    mean /= double(pts.size());
    double sxx = 0, sxy = 0, syy = 0;
    for (const Vec2& p : pts) {
        const Vec2 d = p - mean;
        sxx += d.x() * d.x();
        sxy += d.x() * d.y();
        syy += d.y() * d.y();
    }
    Mat2 cov;
    cov << sxx, sxy, sxy, syy;
    Eigen::SelfAdjointEigenSolver<Mat2> es(cov);
    return {mean, es.eigenvectors().col(1)};
}

inline Vec2 intersect_lines(const std::pair<Vec2, Vec2>& l1, const std::pair<Vec2, Vec2>& l2) {
    Mat2 m;
    m << l1.second.x(), -l2.second.x(), l1.second.y(), -l2.second.y();
    if (std::abs(m.determinant()) < 1e-12) return (l1.first + l2.first) / 2;
    const Vec2 st = m.partialPivLu().solve(l2.first - l1.first);
    return l1.first + st.x() * l1.second;
}

} // namespace detail

/// Global Otsu binarization, border tracing of large components and
/// polygon simplification (epsilon = 2% of the perimeter). Components
/// that simplify to a convex quadrilateral with solidity > 0.9 and a
/// near-square aspect come back as Stamp regions with corners refined by
/// edge-line intersection.
inline std::vector<MarkerRegion> detect_quadrilateral(const ImageGray& img) {
    const int w = img.width(), h = img.height();
    const double thr = detail::otsu_threshold(img);
    ArrayXXb bin(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) bin(y, x) = img.v(y, x) > thr;

    ArrayXX<int> label = ArrayXX<int>::Constant(h, w, -1);
    std::vector<MarkerRegion> out;
    std::vector<std::pair<int, int>> stack;
    int next = 0;
    for (int y0 = 0; y0 < h; ++y0) {
        for (int x0 = 0; x0 < w; ++x0) {
            if (!bin(y0, x0) || label(y0, x0) >= 0) continue;
            const int id = next++;
            stack.assign(1, {x0, y0});
            label(y0, x0) = id;
            std::int64_t count = 0;
            bool touches_border = false;
            while (!stack.empty()) {
                const auto [x, y] = stack.back();
                stack.pop_back();
                ++count;
                touches_border = touches_border || x == 0 || y == 0 || x == w - 1 || y == h - 1;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        if (bin(ny, nx) && label(ny, nx) < 0) {
                            label(ny, nx) = id;
                            stack.emplace_back(nx, ny);
                        }
                    }
            }
            // markers partially outside the frame are out of scope, and
            // border-touching noise blobs are never markers
            if (count < 200 || touches_border) continue;

            ArrayXXb mask(h, w);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) mask(y, x) = label(y, x) == id;
            const std::vector<Vec2> contour = detail::trace_contour(mask, x0, y0);
            if (contour.size() < 16) continue;

            const double per = detail::polyline_length(contour, true);
            std::vector<Vec2> poly = detail::simplify_closed(contour, 0.02 * per);
            if (poly.size() != 4) continue;

            std::array<Vec2, 4> corners{poly[0], poly[1], poly[2], poly[3]};
            if (!detail::is_convex(corners)) continue;
            const double quad_area = detail::polygon_area(poly);
            if (quad_area < 1 || detail::polygon_area(contour) / quad_area < 0.9) continue;
            // the border is a thin ring: solid blobs are not stamps
            if (double(count) / quad_area > 0.55) continue;
            const double e0 = (corners[1] - corners[0]).norm(),
                         e1 = (corners[2] - corners[1]).norm();
            const double aspect = e0 > e1 ? e0 / e1 : e1 / e0;
            if (aspect > 1.25) continue;

            // refine corners: fit each edge on mid-contour points, intersect
            std::array<size_t, 4> vidx{};
            for (int k = 0; k < 4; ++k) {
                double best = 1e30;
                for (size_t i = 0; i < contour.size(); ++i) {
                    const double d = (contour[i] - corners[size_t(k)]).squaredNorm();
                    if (d < best) {
                        best = d;
                        vidx[size_t(k)] = i;
                    }
                }
            }
            std::array<std::pair<Vec2, Vec2>, 4> lines;
            bool lines_ok = true;
            for (int k = 0; k < 4; ++k) {
                const size_t i0 = vidx[size_t(k)], i1 = vidx[size_t((k + 1) % 4)];
                std::vector<Vec2> seg;
                const size_t len = (i1 + contour.size() - i0) % contour.size();
                const size_t trim = std::max<size_t>(2, len / 10);
                for (size_t s = trim; s + trim < len; ++s)
                    seg.push_back(contour[(i0 + s) % contour.size()]);
                if (seg.size() < 4) {
                    lines_ok = false;
                    break;
                }
                lines[size_t(k)] = detail::fit_edge_line(seg);
            }
            if (!lines_ok) continue;
            std::array<Vec2, 4> refined;
            for (int k = 0; k < 4; ++k)
                refined[size_t(k)] =
                    detail::intersect_lines(lines[size_t((k + 3) % 4)], lines[size_t(k)]);

            MarkerRegion r;
            r.kind = MarkerKind::Stamp;
            // clockwise in image coordinates, starting top-left-most
            const Vec2 c = (refined[0] + refined[1] + refined[2] + refined[3]) / 4;
            std::sort(refined.begin(), refined.end(), [&](const Vec2& a, const Vec2& b) {
                return std::atan2(a.y() - c.y(), a.x() - c.x()) <
                       std::atan2(b.y() - c.y(), b.x() - c.x());
            });
            size_t first = 0;
            for (size_t k = 1; k < 4; ++k)
                if (refined[k].x() + refined[k].y() < refined[first].x() + refined[first].y())
                    first = k;
            for (size_t k = 0; k < 4; ++k) r.corners[k] = refined[(first + k) % 4];
            out.push_back(r);
        }
    }
    return out;
}

/// Pose of a small marker within the image, in lattice periods and
/// radians, matching the renderer's pose convention.
struct SmallMarkerEstimate {
    double tx = 0, ty = 0;      // image-center offset of the marker center, periods
    double theta = 0;           // [0, 2*pi)
    double period_px = 0;
    int marker_id = 0;
    int quadrant = 0;
    Vec2 center_px = Vec2::Zero();
    double rms_residual = 0;
};

/// Fine pose of one detected marker: crop with one period of margin,
/// apodize, run the phase engine, fix the integer lattice offset from the
/// contour, pick the orientation quadrant with the asymmetry glyph and
/// read the id zone.
inline SmallMarkerEstimate estimate_small_marker(const ImageGray& img, const MarkerRegion& region,
                                                 int periods_across, int border_thickness = 1) {
    const int P = periods_across;
    const SmallMarkerGeometry geom = region.kind == MarkerKind::HpCode
                                         ? hp_geometry(P)
                                         : stamp_geometry(P, border_thickness);
    // reference presence grid (id = 0) tells us which neighbour cells are
    // guaranteed dots when sampling the glyph and id zones
    const DotLayout reference =
        region.kind == MarkerKind::HpCode
            ? layout_hpcode({.periods_across = P}).dots
            : layout_stamp({.periods_across = P, .border_thickness = border_thickness}).dots;
    const auto is_reference_dot = [&](int r, int c) {
        if (r < 0 || c < 0 || r >= P || c >= P || !reference.present(r, c)) return false;
        for (const auto& [ir, ic] : geom.id_cells)
            if (ir == r && ic == c) return false;
        return true;
    };

    // marker outline corners; HP regions carry finder centers, which sit
    // inside the outline by 1.75 periods of the (P - 3.5)-period span
    std::array<Vec2, 4> outline = region.corners;
    const Vec2 center = region.center();
    if (region.kind == MarkerKind::HpCode) {
        const double scale = double(P) / (P - 3.5);
        for (auto& p : outline) p = center + (p - center) * scale;
    }

    double span = 0;
    for (int k = 0; k < 4; ++k)
        span += (outline[size_t((k + 1) % 4)] - outline[size_t(k)]).norm();
    const double s_est = span / 4.0 / P; // pixels per period

    double lox = 1e30, loy = 1e30, hix = -1e30, hiy = -1e30;
    for (const Vec2& p : outline) {
        lox = std::min(lox, p.x());
        hix = std::max(hix, p.x());
        loy = std::min(loy, p.y());
        hiy = std::max(hiy, p.y());
    }
    const int margin = int(std::ceil(s_est));
    const int cx0 = std::max(0, int(lox) - margin), cy0 = std::max(0, int(loy) - margin);
    const int cx1 = std::min(img.width() - 1, int(hix) + margin);
    const int cy1 = std::min(img.height() - 1, int(hiy) + margin);
    if (cx1 - cx0 < 31 || cy1 - cy0 < 31)
        raise(ErrorCode::NoMarkerFound, "marker crop degenerate or outside the frame");

    ImageGray crop(cx1 - cx0 + 1, cy1 - cy0 + 1);
    for (int y = cy0; y <= cy1; ++y)
        for (int x = cx0; x <= cx1; ++x) crop.v(y - cy0, x - cx0) = img.v(y, x);

    // Solid features (finder squares, the stamp border) leak into the
    // lattice lobes and bias the fitted pitch by ~1e-3, which a long
    // differential lever arm cannot afford. Flatten them, and everything
    // outside the marker, to the lattice-area mean before the transform.
    ImageGray analysis = crop;
    {
        // affine marker->crop map from the outline corners
        const Vec2 o0(-0.5, -0.5);
        const Vec2 e1 = (outline[1] - outline[0]) / double(P);
        const Vec2 e2 = (outline[3] - outline[0]) / double(P);
        Mat2 fwd;
        fwd << e1.x(), e2.x(), e1.y(), e2.y();
        const Mat2 inv_m = fwd.inverse();
        const Vec2 origin_px(outline[0].x() - cx0, outline[0].y() - cy0);
        const int b = region.kind == MarkerKind::Stamp ? border_thickness : 0;
        const double f = 7.0 * geom.finder_unit; // hp finder width in periods

        const auto masked = [&](int x, int y) {
            const Vec2 m = inv_m * (Vec2(x, y) - origin_px) + o0;
            if (region.kind == MarkerKind::Stamp)
                return m.x() < b - 0.35 || m.y() < b - 0.35 || m.x() > P - b - 0.65 ||
                       m.y() > P - b - 0.65;
            if (m.x() < -0.6 || m.y() < -0.6 || m.x() > P - 0.4 || m.y() > P - 0.4) return true;
            const auto zone = [&](double ax, double ay) {
                return m.x() >= ax - 1.6 && m.x() <= ax + f + 1.3 && m.y() >= ay - 1.6 &&
                       m.y() <= ay + f + 1.3;
            };
            const double a0 = -0.5, a1 = P - 0.5 - f;
            return zone(a0, a0) || zone(a1, a0) || zone(a0, a1);
        };
        double acc = 0;
        long n = 0;
        for (int y = 0; y < crop.height(); ++y)
            for (int x = 0; x < crop.width(); ++x)
                if (!masked(x, y)) {
                    acc += crop.v(y, x);
                    ++n;
                }
        const double lattice_mean = n ? acc / n : crop.v.mean();
        for (int y = 0; y < crop.height(); ++y)
            for (int x = 0; x < crop.width(); ++x)
                if (masked(x, y)) analysis.v(y, x) = lattice_mean;
    }

    AnalyzeConfig cfg;
    cfg.apodize = true;
    cfg.period_hint_px = {{0.6 * s_est, 1.6 * s_est}};
    const PhaseResult phase = analyze(analysis, cfg);

    const Vec2 center_crop(center.x() - cx0, center.y() - cy0);
    const Vec2 uv_c = phase.lattice_coords(center_crop.x(), center_crop.y());
    const Vec2 m_center((P - 1) / 2.0, (P - 1) / 2.0);

    Mat2 grad;
    grad << phase.plane1.a, phase.plane1.b, phase.plane2.a, phase.plane2.b;
    const Mat2 grad_inv = grad.inverse() * kTwoPi;

    const auto rot_uv = [](int k, const Vec2& m) {
        switch (k & 3) {
            case 0: return m;
            case 1: return Vec2(-m.y(), m.x());
            case 2: return Vec2(-m.x(), -m.y());
            default: return Vec2(m.y(), -m.x());
        }
    };

    const double stencil = phase.period_px / 8.0;
    const auto sample_cell = [&](int k, const Vec2& d, int row, int col) {
        const Vec2 uv = rot_uv(k, Vec2(col, row)) + d;
        const Vec2 p = phase.pixel_of_lattice(uv.x(), uv.y());
        double acc = 0;
        for (int sy = -1; sy <= 1; ++sy)
            for (int sx = -1; sx <= 1; ++sx)
                acc += sample_bilinear(crop, p.x() + sx * stencil, p.y() + sy * stencil);
        return acc / 9.0;
    };

    int valid_k = -1;
    Vec2 valid_d = Vec2::Zero();
    for (int k = 0; k < 4; ++k) {
        const Vec2 d_float = uv_c - rot_uv(k, m_center);
        const Vec2 d(std::round(d_float.x()), std::round(d_float.y()));
        if (std::abs(d_float.x() - d.x()) > 0.35 || std::abs(d_float.y() - d.y()) > 0.35)
            continue;

        // bright reference: guaranteed dots ringing the glyph block
        const auto [gi, gj] = geom.glyph_cells[0];
        std::vector<double> ring;
        for (int dr = -1; dr <= 2; ++dr)
            for (int dc = -1; dc <= 2; ++dc) {
                if (dr >= 0 && dr <= 1 && dc >= 0 && dc <= 1) continue;
                if (!is_reference_dot(gi + dr, gj + dc)) continue;
                ring.push_back(sample_cell(k, d, gi + dr, gj + dc));
            }
        if (ring.size() < 2) continue;
        std::nth_element(ring.begin(), ring.begin() + ring.size() / 2, ring.end());
        const double bright = ring[ring.size() / 2];

        double glyph[4];
        double dark = 1e30;
        for (int g = 0; g < 4; ++g) {
            const auto [r, c] = geom.glyph_cells[size_t(g)];
            glyph[g] = sample_cell(k, d, r, c);
            dark = std::min(dark, glyph[g]);
        }
        if (bright - dark < 0.1) continue; // no contrast: not this rotation
        const double cell_thr = 0.5 * (bright + dark);
        const bool pattern_ok = glyph[0] < cell_thr && glyph[1] < cell_thr &&
                                glyph[2] < cell_thr && glyph[3] > cell_thr;
        if (!pattern_ok) continue;
        if (valid_k >= 0)
            raise(ErrorCode::GlyphAmbiguous, "more than one orientation matches the glyph");
        valid_k = k;
        valid_d = d;
    }
    if (valid_k < 0) raise(ErrorCode::GlyphAmbiguous, "no orientation matches the glyph");

    SmallMarkerEstimate est;
    est.quadrant = valid_k;
    est.period_px = phase.period_px;
    est.rms_residual = std::max(phase.plane1.rms_residual, phase.plane2.rms_residual);

    // id bits: compare each id cell against guaranteed-dot neighbours,
    // with the inter-dot background as the dark reference
    int id = 0;
    for (const auto& [r, c] : geom.id_cells) {
        double bright = -1;
        for (const auto& [nr, nc] :
             {std::pair{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}, {r - 1, c - 1},
              {r + 1, c + 1}})
            if (is_reference_dot(nr, nc))
                bright = std::max(bright, sample_cell(valid_k, valid_d, nr, nc));
        const Vec2 uv_bg = rot_uv(valid_k, Vec2(c + 0.5, r - 0.5)) + valid_d;
        const Vec2 pbg = phase.pixel_of_lattice(uv_bg.x(), uv_bg.y());
        const double dark = sample_bilinear(crop, pbg.x(), pbg.y());
        const double v = sample_cell(valid_k, valid_d, r, c);
        const bool absent = bright > dark && v < 0.5 * (bright + dark);
        id = (id << 1) | (absent ? 1 : 0);
    }
    est.marker_id = id;

    // pose: marker center pixel from the phase lattice, theta from the
    // rotated marker x-axis
    const Vec2 uv_center = rot_uv(valid_k, m_center) + valid_d;
    const Vec2 p_center = phase.pixel_of_lattice(uv_center.x(), uv_center.y());
    est.center_px = Vec2(p_center.x() + cx0, p_center.y() + cy0);
    const Vec2 img_center((img.width() - 1) / 2.0, (img.height() - 1) / 2.0);
    est.tx = (est.center_px.x() - img_center.x()) / phase.period_px;
    est.ty = (est.center_px.y() - img_center.y()) / phase.period_px;
    const Vec2 dir = grad_inv * rot_uv(valid_k, Vec2(1, 0));
    est.theta = wrap_angle_positive(std::atan2(dir.y(), dir.x()));
    return est;
}

} // namespace phasemark
