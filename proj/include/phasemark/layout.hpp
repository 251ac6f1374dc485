#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "phasemark/errors.hpp"
#include "phasemark/lfsr.hpp"
#include "phasemark/types.hpp"

namespace phasemark {

/// Boolean dot-presence lattice. Cell (row i, col j) has its dot center at
/// marker-frame coordinates (x=j, y=i) in period units; the pattern's
/// top-left dot is the marker origin.
struct DotLayout {
    int rows = 0, cols = 0;
    ArrayXXb present;
    double period = 1.0;            // physical length of one cell (mm for SVG export)
    double dot_diameter_ratio = 0.5; // dot diameter as a fraction of the period

    static DotLayout filled(int rows, int cols, bool value = true) {
        DotLayout l;
        l.rows = rows;
        l.cols = cols;
        l.present = ArrayXXb::Constant(rows, cols, value);
        return l;
    }

    void validate() const {
        if (rows < 1 || cols < 1 || present.rows() != rows || present.cols() != cols)
            raise(ErrorCode::InvalidArgument, "layout dimensions inconsistent");
        if (!(dot_diameter_ratio > 0 && dot_diameter_ratio < 1))
            raise(ErrorCode::InvalidArgument, "dot_diameter_ratio must be in (0,1)");
    }

    int count_present() const { return int(present.count()); }
};

/// Axis-aligned rectangle in marker-frame period units, painted with a
/// constant intensity before the dots (solid marker features).
struct PaintRect {
    double x0, y0, x1, y1;
    double value;
};

enum class MarkerKind { Megarena, HpCode, Stamp };

inline const char* marker_kind_name(MarkerKind k) {
    switch (k) {
        case MarkerKind::Megarena: return "megarena";
        case MarkerKind::HpCode: return "hp";
        case MarkerKind::Stamp: return "stamp";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Megarena

struct MegarenaSpec {
    int n = 8;
    LfsrSpec x_spec;
    LfsrSpec y_spec;
    int extent_codes = 0; // code positions per axis to materialize
    double period = 1.0;
    double dot_diameter_ratio = 0.5;

    /// Both register specs default to the built-in polynomial for n with
    /// distinct seeds so the two axes carry different windows.
    static MegarenaSpec with_defaults(int n, int extent_codes) {
        MegarenaSpec s;
        s.n = n;
        const std::uint32_t max_seed = (1u << n) - 1;
        s.x_spec = default_lfsr(n, 1);
        s.y_spec = default_lfsr(n, 5u <= max_seed ? 5u : 2u);
        s.extent_codes = extent_codes;
        return s;
    }

    void validate() const {
        x_spec.validate();
        y_spec.validate();
        if (x_spec.n != n || y_spec.n != n)
            raise(ErrorCode::InvalidArgument, "register length must match code depth");
        if (extent_codes < 1 || extent_codes > (1 << n) - 1)
            raise(ErrorCode::InvalidArgument, "extent_codes exceeds sequence length");
    }
};

/// Megarena coding geometry. The lattice is 3*extent_codes cells per axis.
/// Columns with j = 2 (mod 3) carry the X code: all their dots are removed
/// when x_sequence[j/3] = 0 (dot-present encodes bit 1). Rows behave the
/// same for Y, and the cell at the intersection of a coding row and a
/// coding column is always absent (the one missing dot per 3x3 block).
inline DotLayout layout_megarena(const MegarenaSpec& spec) {
    spec.validate();
    const BitSequence xs = generate_msequence(spec.x_spec);
    const BitSequence ys = generate_msequence(spec.y_spec);

    const int cells = 3 * spec.extent_codes;
    DotLayout layout = DotLayout::filled(cells, cells);
    layout.period = spec.period;
    layout.dot_diameter_ratio = spec.dot_diameter_ratio;

    for (int i = 0; i < cells; ++i) {
        for (int j = 0; j < cells; ++j) {
            bool dot = true;
            if (j % 3 == 2 && xs.bits[size_t(j / 3)] == 0) dot = false;
            if (i % 3 == 2 && ys.bits[size_t(i / 3)] == 0) dot = false;
            if (i % 3 == 2 && j % 3 == 2) dot = false;
            layout.present(i, j) = dot;
        }
    }
    return layout;
}

// ---------------------------------------------------------------------------
// Small markers

/// Cell coordinates (row, col) of marker features shared by the generator
/// and the reader. The glyph is a 2x2 block with the first three cells
/// absent and the fourth present; its pattern has no rotational symmetry,
/// which pins the marker's absolute orientation.
struct SmallMarkerGeometry {
    MarkerKind kind = MarkerKind::HpCode;
    int periods_across = 0;
    int border_thickness = 0;                      // stamp only
    double finder_unit = 0.5;                      // hp: finder ring width, periods
    std::array<Vec2, 3> finder_centers{};          // hp: TL, TR, BL in marker frame
    std::array<std::pair<int, int>, 4> glyph_cells{}; // first 3 absent, last present
    std::vector<std::pair<int, int>> id_cells;     // MSB first; bit 1 = dot absent
    int id_capacity() const { return int(id_cells.size()); }
};

inline SmallMarkerGeometry hp_geometry(int periods_across) {
    if (periods_across < 9)
        raise(ErrorCode::InvalidArgument, "hp marker needs at least 9 periods per side");
    SmallMarkerGeometry g;
    g.kind = MarkerKind::HpCode;
    g.periods_across = periods_across;
    const int p = periods_across;
    const double f = 7.0 * g.finder_unit; // finder square width: 3.5 periods
    const double half = f / 2.0;
    g.finder_centers = {Vec2(-0.5 + half, -0.5 + half), Vec2(p - 0.5 - half, -0.5 + half),
                        Vec2(-0.5 + half, p - 0.5 - half)};
    g.glyph_cells = {{{5, 5}, {5, 6}, {6, 5}, {6, 6}}};
    for (int j = 5; j <= p - 3; ++j) g.id_cells.emplace_back(p - 2, j);
    return g;
}

inline SmallMarkerGeometry stamp_geometry(int periods_across, int border_thickness) {
    if (periods_across < 9)
        raise(ErrorCode::InvalidArgument, "stamp marker needs at least 9 periods per side");
    if (border_thickness < 1 || periods_across - 2 * border_thickness < 7)
        raise(ErrorCode::InvalidArgument, "border too thick for the marker size");
    SmallMarkerGeometry g;
    g.kind = MarkerKind::Stamp;
    g.periods_across = periods_across;
    g.border_thickness = border_thickness;
    const int p = periods_across, b = border_thickness, o = b + 1;
    g.glyph_cells = {{{o, o}, {o, o + 1}, {o + 1, o}, {o + 1, o + 1}}};
    for (int j = o, last = p - b - 3; j <= last; ++j) g.id_cells.emplace_back(p - b - 2, j);
    return g;
}

struct HpCodeSpec {
    int periods_across = 21;
    int marker_id = 0;
    double period = 1.0;
    double dot_diameter_ratio = 0.5;
};

struct StampSpec {
    int periods_across = 21;
    int border_thickness = 1;
    int marker_id = 0;
    double period = 1.0;
    double dot_diameter_ratio = 0.5;
};

/// Dot lattice plus the solid geometry (finder squares or border) that the
/// renderer paints underneath the dots.
struct MarkerLayout {
    DotLayout dots;
    std::vector<PaintRect> overlay;
    SmallMarkerGeometry geometry;
};

namespace detail {

inline void apply_id_and_glyph(DotLayout& dots, const SmallMarkerGeometry& g, int marker_id) {
    if (marker_id < 0 ||
        (g.id_capacity() < 31 && marker_id >= (1 << g.id_capacity())))
        raise(ErrorCode::InvalidArgument, "marker_id exceeds reserved-zone capacity of " +
                                              std::to_string(g.id_capacity()) + " bits");
    for (int k = 0; k < g.id_capacity(); ++k) {
        const bool absent = (marker_id >> (g.id_capacity() - 1 - k)) & 1;
        const auto [i, j] = g.id_cells[size_t(k)];
        if (absent) dots.present(i, j) = false;
    }
    for (int k = 0; k < 3; ++k) {
        const auto [i, j] = g.glyph_cells[size_t(k)];
        dots.present(i, j) = false;
    }
}

} // namespace detail

/// QR-style marker: three corner finder squares with a 1:1:3:1:1
/// cross-section (white ring, black ring, white core on the black
/// background), a quiet zone of one period around each, and the
/// periodic dot lattice elsewhere.
inline MarkerLayout layout_hpcode(const HpCodeSpec& spec) {
    SmallMarkerGeometry g = hp_geometry(spec.periods_across);
    const int p = spec.periods_across;

    MarkerLayout m;
    m.geometry = g;
    m.dots = DotLayout::filled(p, p);
    m.dots.period = spec.period;
    m.dots.dot_diameter_ratio = spec.dot_diameter_ratio;

    // quiet zone: no dot whose center falls within one period of a finder square
    const double f = 7.0 * g.finder_unit;
    const auto in_zone = [&](double x, double y, double ax, double ay) {
        return x >= ax - 1.0 && x <= ax + f + 1.0 && y >= ay - 1.0 && y <= ay + f + 1.0;
    };
    const double a0 = -0.5, a1 = p - 0.5 - f;
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            if (in_zone(j, i, a0, a0) || in_zone(j, i, a1, a0) || in_zone(j, i, a0, a1))
                m.dots.present(i, j) = false;

    detail::apply_id_and_glyph(m.dots, g, spec.marker_id);

    for (const Vec2& anchor : {Vec2(a0, a0), Vec2(a1, a0), Vec2(a0, a1)}) {
        const double u = g.finder_unit;
        m.overlay.push_back({anchor.x(), anchor.y(), anchor.x() + 7 * u, anchor.y() + 7 * u, 1.0});
        m.overlay.push_back(
            {anchor.x() + u, anchor.y() + u, anchor.x() + 6 * u, anchor.y() + 6 * u, 0.0});
        m.overlay.push_back(
            {anchor.x() + 2 * u, anchor.y() + 2 * u, anchor.x() + 5 * u, anchor.y() + 5 * u, 1.0});
    }
    return m;
}

/// Quadrilateral marker: a solid border of border_thickness periods
/// enclosing the dot lattice, with the same glyph and id scheme.
inline MarkerLayout layout_stamp(const StampSpec& spec) {
    SmallMarkerGeometry g = stamp_geometry(spec.periods_across, spec.border_thickness);
    const int p = spec.periods_across, b = spec.border_thickness;

    MarkerLayout m;
    m.geometry = g;
    m.dots = DotLayout::filled(p, p);
    m.dots.period = spec.period;
    m.dots.dot_diameter_ratio = spec.dot_diameter_ratio;

    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            if (i < b || j < b || i >= p - b || j >= p - b) m.dots.present(i, j) = false;

    detail::apply_id_and_glyph(m.dots, g, spec.marker_id);

    m.overlay.push_back({-0.5, -0.5, p - 0.5, p - 0.5, 1.0});
    m.overlay.push_back({b - 0.5, b - 0.5, p - b - 0.5, p - b - 0.5, 0.0});
    return m;
}

/// Read the id bits back from a presence grid laid out at canonical pose.
inline int read_marker_id(const DotLayout& dots, const SmallMarkerGeometry& g) {
    int id = 0;
    for (const auto& [i, j] : g.id_cells) id = (id << 1) | (dots.present(i, j) ? 0 : 1);
    return id;
}

/// Rotate a presence grid by k*90 degrees counterclockwise (k in 0..3).
inline ArrayXXb rotate_grid(const ArrayXXb& grid, int k) {
    k = ((k % 4) + 4) % 4;
    if (k == 0) return grid;
    const Eigen::Index r = grid.rows(), c = grid.cols();
    ArrayXXb out;
    if (k == 1) { // (i,j) -> (c-1-j, i)
        out.resize(c, r);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) out(c - 1 - j, i) = grid(i, j);
    } else if (k == 2) {
        out.resize(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) out(r - 1 - i, c - 1 - j) = grid(i, j);
    } else { // (i,j) -> (j, r-1-i)
        out.resize(c, r);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) out(j, r - 1 - i) = grid(i, j);
    }
    return out;
}

} // namespace phasemark
