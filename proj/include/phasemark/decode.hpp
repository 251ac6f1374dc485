#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "phasemark/image.hpp"
#include "phasemark/layout.hpp"
#include "phasemark/lfsr.hpp"
#include "phasemark/phase.hpp"

namespace phasemark {

/// Intensities sampled at every lattice node predicted by the phase
/// planes. Cell (r, c) carries lattice labels (i0 + r, j0 + c); labels are
/// integer lattice coordinates (v, u) with an unknown offset and
/// quarter-turn relative to the true pattern frame.
struct DotSampleGrid {
    long i0 = 0, j0 = 0; // labels of cell (0, 0): i along v (rows), j along u (cols)
    ArrayXXd intensity;
    ArrayXXb valid;
    ArrayXXd px, py; // predicted sub-pixel centers
    double period_px = 0;

    int rows() const { return int(intensity.rows()); }
    int cols() const { return int(intensity.cols()); }
};

/// Sample every lattice node whose predicted center lies at least one
/// period inside the frame; intensity is the bilinear mean over a 3x3
/// sub-pixel stencil. Throws FewerThanMinimumCells when fewer than
/// min_span_per_axis lattice lines are visible on either axis (pass
/// 3*(n+1) for an n-bit pattern, 0 to skip the check).
inline DotSampleGrid sample_dots(const ImageGray& img, const PhaseResult& phase,
                                 int min_span_per_axis = 0) {
    const int w = img.width(), h = img.height();
    const double margin = phase.period_px;

    double lou = 1e30, lov = 1e30, hiu = -1e30, hiv = -1e30;
    for (const Vec2& corner :
         {Vec2(0, 0), Vec2(w - 1, 0), Vec2(0, h - 1), Vec2(w - 1, h - 1)}) {
        const Vec2 uv = phase.lattice_coords(corner.x(), corner.y());
        lou = std::min(lou, uv.x());
        hiu = std::max(hiu, uv.x());
        lov = std::min(lov, uv.y());
        hiv = std::max(hiv, uv.y());
    }

    DotSampleGrid grid;
    grid.period_px = phase.period_px;
    grid.j0 = long(std::ceil(lou));
    grid.i0 = long(std::ceil(lov));
    const int nc = int(std::floor(hiu) - grid.j0) + 1;
    const int nr = int(std::floor(hiv) - grid.i0) + 1;
    if (nc < 1 || nr < 1) raise(ErrorCode::FewerThanMinimumCells, "no lattice nodes in frame");

    grid.intensity = ArrayXXd::Zero(nr, nc);
    grid.valid = ArrayXXb::Constant(nr, nc, false);
    grid.px = ArrayXXd::Zero(nr, nc);
    grid.py = ArrayXXd::Zero(nr, nc);

    const double stencil = phase.period_px / 8.0;
    for (int r = 0; r < nr; ++r) {
        for (int c = 0; c < nc; ++c) {
            const Vec2 p = phase.pixel_of_lattice(double(grid.j0 + c), double(grid.i0 + r));
            grid.px(r, c) = p.x();
            grid.py(r, c) = p.y();
            if (p.x() < margin || p.x() > w - 1 - margin || p.y() < margin ||
                p.y() > h - 1 - margin)
                continue;
            double acc = 0;
            for (int sy = -1; sy <= 1; ++sy)
                for (int sx = -1; sx <= 1; ++sx)
                    acc += sample_bilinear(img, p.x() + sx * stencil, p.y() + sy * stencil);
            grid.intensity(r, c) = acc / 9.0;
            grid.valid(r, c) = true;
        }
    }

    if (min_span_per_axis > 0) {
        int vis_rows = 0, vis_cols = 0;
        for (int r = 0; r < nr; ++r)
            if (grid.valid.row(r).any()) ++vis_rows;
        for (int c = 0; c < nc; ++c)
            if (grid.valid.col(c).any()) ++vis_cols;
        if (vis_rows < min_span_per_axis || vis_cols < min_span_per_axis)
            raise(ErrorCode::FewerThanMinimumCells,
                  "visible lattice span " + std::to_string(std::min(vis_rows, vis_cols)) +
                      " is below the required " + std::to_string(min_span_per_axis));
    }
    return grid;
}

struct DotClassification {
    ArrayXXb present;
    ArrayXXd margin; // |intensity - threshold| / cluster separation
    ArrayXXb known;  // cell was sampled and classified
};

namespace detail {

inline std::pair<double, double> two_means(const std::vector<double>& xs) {
    double lo = xs[0], hi = xs[0];
    for (double x : xs) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    for (int iter = 0; iter < 24; ++iter) {
        double slo = 0, shi = 0;
        int nlo = 0, nhi = 0;
        const double mid = 0.5 * (lo + hi);
        for (double x : xs) {
            if (x <= mid) {
                slo += x;
                ++nlo;
            } else {
                shi += x;
                ++nhi;
            }
        }
        const double nlo2 = nlo ? slo / nlo : lo;
        const double nhi2 = nhi ? shi / nhi : hi;
        if (nlo2 == lo && nhi2 == hi) break;
        lo = nlo2;
        hi = nhi2;
    }
    return {lo, hi};
}

} // namespace detail

/// Local adaptive threshold: per cell, run 2-means over the intensities of
/// the surrounding 9x9 cell window and split at the midpoint of the two
/// cluster centers. Windows with intensity spread below 0.05 have no
/// lattice contrast and inherit the threshold of the nearest valid cell;
/// if no window anywhere has contrast the grid is DegenerateClustering.
inline DotClassification classify_dots(const DotSampleGrid& grid) {
    const int nr = grid.rows(), nc = grid.cols();
    if (nr < 9 || nc < 9)
        raise(ErrorCode::FewerThanMinimumCells, "classification needs at least 9x9 cells");

    ArrayXXd threshold = ArrayXXd::Constant(nr, nc, std::nan(""));
    ArrayXXd separation = ArrayXXd::Constant(nr, nc, 0.0);
    std::vector<double> window;
    window.reserve(81);
    for (int r = 0; r < nr; ++r) {
        for (int c = 0; c < nc; ++c) {
            if (!grid.valid(r, c)) continue;
            window.clear();
            for (int dr = -4; dr <= 4; ++dr) {
                for (int dc = -4; dc <= 4; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || cc < 0 || rr >= nr || cc >= nc || !grid.valid(rr, cc)) continue;
                    window.push_back(grid.intensity(rr, cc));
                }
            }
            if (window.size() < 4) continue;
            double lo = window[0], hi = window[0];
            for (double x : window) {
                lo = std::min(lo, x);
                hi = std::max(hi, x);
            }
            if (hi - lo < 0.05) continue; // flat: inherit later
            const auto [clo, chi] = detail::two_means(window);
            threshold(r, c) = 0.5 * (clo + chi);
            separation(r, c) = chi - clo;
        }
    }

    // collect valid thresholds for nearest-neighbour inheritance
    std::vector<std::pair<int, int>> anchors;
    for (int r = 0; r < nr; ++r)
        for (int c = 0; c < nc; ++c)
            if (!std::isnan(threshold(r, c))) anchors.emplace_back(r, c);
    if (anchors.empty())
        raise(ErrorCode::DegenerateClustering, "no lattice contrast anywhere in the grid");

    DotClassification out;
    out.present = ArrayXXb::Constant(nr, nc, false);
    out.margin = ArrayXXd::Zero(nr, nc);
    out.known = ArrayXXb::Constant(nr, nc, false);
    for (int r = 0; r < nr; ++r) {
        for (int c = 0; c < nc; ++c) {
            if (!grid.valid(r, c)) continue;
            double thr = threshold(r, c), sep = separation(r, c);
            if (std::isnan(thr)) {
                long bd = -1;
                for (const auto& [ar, ac] : anchors) {
                    const long d = std::abs(long(ar) - r) + std::abs(long(ac) - c);
                    if (bd < 0 || d < bd) {
                        bd = d;
                        thr = threshold(ar, ac);
                        sep = separation(ar, ac);
                    }
                }
            }
            out.known(r, c) = true;
            out.present(r, c) = grid.intensity(r, c) > thr;
            out.margin(r, c) = sep > 0 ? std::abs(grid.intensity(r, c) - thr) / sep : 0.0;
        }
    }
    return out;
}

/// The two observed code windows, one per lattice axis. Bits are 0/1 with
/// kUnknownBit erasures; anchors are the lattice labels of the first
/// coding line of each window.
struct CodeWindows {
    std::vector<int> x_bits; // along u (grid columns)
    std::vector<int> y_bits; // along v (grid rows)
    long x_anchor_cell = 0;
    long y_anchor_cell = 0;
    int x_residue = 0, y_residue = 0;          // label residue (mod 3) of coding lines
    double intersection_absent_fraction = 0.0; // structural check input
};

namespace detail {

struct LineStats {
    std::vector<long> labels;
    std::vector<double> absent_frac;
    std::vector<int> count;
};

inline int coding_residue(const LineStats& s, const char* axis) {
    double var[3] = {0, 0, 0};
    for (int r = 0; r < 3; ++r) {
        double sum = 0, sum2 = 0;
        int n = 0;
        for (size_t k = 0; k < s.labels.size(); ++k) {
            if (((s.labels[k] % 3) + 3) % 3 != r) continue;
            sum += s.absent_frac[k];
            sum2 += s.absent_frac[k] * s.absent_frac[k];
            ++n;
        }
        var[r] = n >= 2 ? std::max(0.0, sum2 / n - (sum / n) * (sum / n)) : 0.0;
    }
    int best = 0;
    for (int r = 1; r < 3; ++r)
        if (var[r] > var[best]) best = r;
    double second = -1;
    for (int r = 0; r < 3; ++r)
        if (r != best) second = std::max(second, var[r]);
    if (var[best] <= 0 || var[best] - second < 0.05 * var[best])
        raise(ErrorCode::AmbiguousCodingPhase,
              std::string("coding-line residue is ambiguous along ") + axis);
    return best;
}

} // namespace detail

/// Identify which residue (mod 3) of lattice lines carries the code on
/// each axis (the residue maximizing the variance of per-line absent-dot
/// fractions) and read one bit per coding line by majority vote over its
/// informative cells. Lines with a sub-70% majority, or too few votes,
/// come out as kUnknownBit.
inline CodeWindows extract_code(const DotSampleGrid& grid, const DotClassification& cls) {
    const int nr = grid.rows(), nc = grid.cols();
    CodeWindows out;

    const auto line_stats = [&](bool columns) {
        detail::LineStats s;
        const int n_lines = columns ? nc : nr;
        for (int k = 0; k < n_lines; ++k) {
            int absent = 0, total = 0;
            for (int m = 0; m < (columns ? nr : nc); ++m) {
                const int r = columns ? m : k, c = columns ? k : m;
                if (!cls.known(r, c)) continue;
                ++total;
                if (!cls.present(r, c)) ++absent;
            }
            if (total < 3) continue;
            s.labels.push_back((columns ? grid.j0 : grid.i0) + k);
            s.absent_frac.push_back(double(absent) / total);
            s.count.push_back(total);
        }
        return s;
    };

    const detail::LineStats col_stats = line_stats(true);
    const detail::LineStats row_stats = line_stats(false);
    if (col_stats.labels.size() < 2 || row_stats.labels.size() < 2)
        raise(ErrorCode::FewerThanMinimumCells, "too few sampled lines to extract a code");
    out.x_residue = detail::coding_residue(col_stats, "x");
    out.y_residue = detail::coding_residue(row_stats, "y");

    const auto read_axis = [&](bool columns, int residue, int other_residue, long& anchor) {
        std::vector<int> bits;
        const int n_lines = columns ? nc : nr;
        const long base = columns ? grid.j0 : grid.i0;
        bool first = true;
        for (int k = 0; k < n_lines; ++k) {
            const long label = base + k;
            if (((label % 3) + 3) % 3 != residue) continue;
            int votes1 = 0, votes0 = 0;
            for (int m = 0; m < (columns ? nr : nc); ++m) {
                const int r = columns ? m : k, c = columns ? k : m;
                if (!cls.known(r, c)) continue;
                // cells on the other axis' coding lines carry that axis'
                // code (or the forced 3x3 absence), so they do not vote
                const long cross = (columns ? grid.i0 + r : grid.j0 + c);
                if (((cross % 3) + 3) % 3 == other_residue) continue;
                (cls.present(r, c) ? votes1 : votes0)++;
            }
            const int total = votes1 + votes0;
            int bit = kUnknownBit;
            if (total >= 3) {
                const double frac = double(std::max(votes1, votes0)) / total;
                if (frac >= 0.70) bit = votes1 > votes0 ? 1 : 0;
            }
            if (first) {
                anchor = label;
                first = false;
            }
            bits.push_back(bit);
        }
        return bits;
    };

    out.x_bits = read_axis(true, out.x_residue, out.y_residue, out.x_anchor_cell);
    out.y_bits = read_axis(false, out.y_residue, out.x_residue, out.y_anchor_cell);

    // fraction of coding-line intersections that are absent, as designed
    int inter = 0, inter_absent = 0;
    for (int r = 0; r < nr; ++r) {
        if ((((grid.i0 + r) % 3) + 3) % 3 != out.y_residue) continue;
        for (int c = 0; c < nc; ++c) {
            if ((((grid.j0 + c) % 3) + 3) % 3 != out.x_residue) continue;
            if (!cls.known(r, c)) continue;
            ++inter;
            if (!cls.present(r, c)) ++inter_absent;
        }
    }
    out.intersection_absent_fraction = inter ? double(inter_absent) / inter : 0.0;
    return out;
}

/// Absolute in-plane pose with respect to the pattern's top-left dot.
struct AbsolutePose2D {
    double x = 0, y = 0; // physical units (periods * period length)
    double theta = 0;    // [0, 2*pi)
    double confidence = 0;
};

struct QuadrantSolution {
    int quadrant = -1;
    int code_x = -1, code_y = -1;
    double x_periods = 0, y_periods = 0;
    double theta = 0;
};

namespace detail {

inline std::vector<int> reversed(std::vector<int> v) {
    std::reverse(v.begin(), v.end());
    return v;
}

/// Integer lattice rotation by k quarter turns: (x, y) -> R_k (x, y).
inline void rot_k(int k, long x, long y, long& ox, long& oy) {
    switch (k & 3) {
        case 0: ox = x; oy = y; break;
        case 1: ox = -y; oy = x; break;
        case 2: ox = -x; oy = -y; break;
        default: ox = y; oy = -x; break;
    }
}

} // namespace detail

/// Resolve the quarter-turn and 2k*pi ambiguities by decoding the two
/// windows under all four quadrant hypotheses. Exactly one hypothesis may
/// produce singleton sequence positions on both axes inside the
/// materialized pattern; the absolute position then combines the decoded
/// integer part with the continuous lattice coordinates of the image
/// center taken from the phase planes.
inline QuadrantSolution resolve_absolute(const CodeWindows& windows, const WindowIndex& index_x,
                                         const WindowIndex& index_y, const PhaseResult& phase,
                                         const MegarenaSpec& spec) {
    const int n = spec.n;
    if (int(windows.x_bits.size()) < n || int(windows.y_bits.size()) < n)
        raise(ErrorCode::DecodeFailed, "observed code windows shorter than the code depth");
    if (windows.intersection_absent_fraction < 0.8)
        raise(ErrorCode::DecodeFailed, "coding-line intersections are not consistently absent");

    const Vec2 center = phase.image_center();
    const Vec2 uv = phase.lattice_coords(center.x(), center.y());

    const long lx = long(windows.x_bits.size()), ly = long(windows.y_bits.size());
    const long x_first = windows.x_anchor_cell, x_last = windows.x_anchor_cell + 3 * (lx - 1);
    const long y_first = windows.y_anchor_cell, y_last = windows.y_anchor_cell + 3 * (ly - 1);

    // decode candidates must fit inside the materialized (non-cyclic) pattern
    const auto singleton = [&](const WindowIndex& idx, const std::vector<int>& bits) {
        std::vector<int> cands = decode_window(idx, bits);
        std::erase_if(cands, [&](int p) { return p + int(bits.size()) > spec.extent_codes; });
        return cands.size() == 1 ? cands[0] : -1;
    };

    Mat2 grad;
    grad << phase.plane1.a, phase.plane1.b, phase.plane2.a, phase.plane2.b;
    const Mat2 grad_inv = grad.inverse() * kTwoPi;

    std::vector<QuadrantSolution> valid;
    for (int k = 0; k < 4; ++k) {
        // observed window data seen as the x/y code under hypothesis k
        std::vector<int> wx, wy;
        long du = 0, dv = 0; // (u, v) = R_k (x_m, y_m) + (du, dv)
        int px = -1, py = -1;
        switch (k) {
            case 0:
                wx = windows.x_bits;
                wy = windows.y_bits;
                px = singleton(index_x, wx);
                py = singleton(index_y, wy);
                if (px < 0 || py < 0) continue;
                du = x_first - (3l * px + 2);
                dv = y_first - (3l * py + 2);
                break;
            case 1:
                wx = windows.y_bits;
                wy = detail::reversed(windows.x_bits);
                px = singleton(index_x, wx);
                py = singleton(index_y, wy);
                if (px < 0 || py < 0) continue;
                dv = y_first - (3l * px + 2);
                du = x_last + (3l * py + 2);
                break;
            case 2:
                wx = detail::reversed(windows.x_bits);
                wy = detail::reversed(windows.y_bits);
                px = singleton(index_x, wx);
                py = singleton(index_y, wy);
                if (px < 0 || py < 0) continue;
                du = x_last + (3l * px + 2);
                dv = y_last + (3l * py + 2);
                break;
            default:
                wx = detail::reversed(windows.y_bits);
                wy = windows.x_bits;
                px = singleton(index_x, wx);
                py = singleton(index_y, wy);
                if (px < 0 || py < 0) continue;
                dv = y_last + (3l * px + 2);
                du = x_first - (3l * py + 2);
                break;
        }

        // marker coordinates of the image center: R_{-k} ((u, v) - d)
        const double U = uv.x() - double(du), V = uv.y() - double(dv);
        double xc = 0, yc = 0;
        switch (k) {
            case 0: xc = U; yc = V; break;
            case 1: xc = V; yc = -U; break;
            case 2: xc = -U; yc = -V; break;
            default: xc = -V; yc = U; break;
        }
        const double extent = 3.0 * spec.extent_codes;
        if (xc < -0.5 || yc < -0.5 || xc > extent - 0.5 || yc > extent - 0.5) continue;

        QuadrantSolution sol;
        sol.quadrant = k;
        sol.code_x = px;
        sol.code_y = py;
        sol.x_periods = xc;
        sol.y_periods = yc;
        long ex, ey;
        detail::rot_k(k, 1, 0, ex, ey); // marker x-axis in (u, v) space
        const Vec2 dir = grad_inv * Vec2(double(ex), double(ey));
        sol.theta = wrap_angle_positive(std::atan2(dir.y(), dir.x()));
        valid.push_back(sol);
    }

    if (valid.empty()) raise(ErrorCode::DecodeFailed, "no quadrant hypothesis decodes");
    if (valid.size() > 1)
        raise(ErrorCode::AmbiguousDecode, std::to_string(valid.size()) +
                                              " quadrant hypotheses decode; pattern damaged?");
    return valid.front();
}

/// Median offset (in periods) between predicted dot centers and the local
/// intensity centroid, over a sample of cells classified as present. This
/// is the fine/coarse consistency gate: a phase lattice that does not sit
/// on the actual dots shows up here.
inline double lattice_alignment_offset(const ImageGray& img, const DotSampleGrid& grid,
                                       const DotClassification& cls, int max_cells = 200) {
    const double radius = 0.5 * grid.period_px;
    std::vector<double> offsets;
    const int nr = grid.rows(), nc = grid.cols();
    const int stride = std::max(1, (nr * nc) / std::max(1, max_cells * 2));
    int seen = 0;
    for (int r = 0; r < nr && int(offsets.size()) < max_cells; ++r) {
        for (int c = 0; c < nc && int(offsets.size()) < max_cells; ++c) {
            if (!cls.known(r, c) || !cls.present(r, c)) continue;
            if (seen++ % stride) continue;
            const double cx = grid.px(r, c), cy = grid.py(r, c);
            const int x0 = int(std::floor(cx - radius)), x1 = int(std::ceil(cx + radius));
            const int y0 = int(std::floor(cy - radius)), y1 = int(std::ceil(cy + radius));
            if (x0 < 0 || y0 < 0 || x1 >= img.width() || y1 >= img.height()) continue;
            double lo = 1e30;
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) lo = std::min(lo, img.v(y, x));
            double sw = 0, sx = 0, sy = 0;
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    const double wgt = img.v(y, x) - lo;
                    sw += wgt;
                    sx += wgt * x;
                    sy += wgt * y;
                }
            }
            if (sw <= 1e-12) continue;
            offsets.push_back(std::hypot(sx / sw - cx, sy / sw - cy) / grid.period_px);
        }
    }
    if (offsets.empty()) return 1.0;
    std::nth_element(offsets.begin(), offsets.begin() + offsets.size() / 2, offsets.end());
    return offsets[offsets.size() / 2];
}

struct MegarenaDecodeResult {
    AbsolutePose2D pose;
    int quadrant = 0;
    int code_x = 0, code_y = 0;
    double alignment_offset_periods = 0;
    int visible_cells_x = 0, visible_cells_y = 0;
};

/// Full coarse pipeline: sample, classify, gate on lattice alignment,
/// then resolve the absolute position.
inline MegarenaDecodeResult decode_megarena(const ImageGray& img, const PhaseResult& phase,
                                            const MegarenaSpec& spec, const WindowIndex& index_x,
                                            const WindowIndex& index_y) {
    const DotSampleGrid grid = sample_dots(img, phase, 3 * (spec.n + 1));
    const DotClassification cls = classify_dots(grid);

    MegarenaDecodeResult out;
    out.alignment_offset_periods = lattice_alignment_offset(img, grid, cls);
    if (out.alignment_offset_periods > 0.3)
        raise(ErrorCode::DecodeFailed, "phase lattice misaligned with dots by " +
                                           std::to_string(out.alignment_offset_periods) +
                                           " periods");

    const CodeWindows windows = extract_code(grid, cls);
    const QuadrantSolution sol = resolve_absolute(windows, index_x, index_y, phase, spec);

    out.quadrant = sol.quadrant;
    out.code_x = sol.code_x;
    out.code_y = sol.code_y;
    out.pose.x = sol.x_periods * spec.period;
    out.pose.y = sol.y_periods * spec.period;
    out.pose.theta = sol.theta;

    int with_margin = 0, known = 0;
    for (int r = 0; r < grid.rows(); ++r)
        for (int c = 0; c < grid.cols(); ++c)
            if (cls.known(r, c)) {
                ++known;
                if (cls.margin(r, c) >= 0.25) ++with_margin;
            }
    out.pose.confidence = known ? double(with_margin) / known : 0.0;
    for (int r = 0; r < grid.rows(); ++r)
        if (grid.valid.row(r).any()) ++out.visible_cells_y;
    for (int c = 0; c < grid.cols(); ++c)
        if (grid.valid.col(c).any()) ++out.visible_cells_x;
    return out;
}

} // namespace phasemark
