#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "phasemark/layout.hpp"
#include "phasemark/render.hpp"

using namespace phasemark;

namespace {

int count_substr(const std::string& hay, const std::string& needle) {
    int n = 0;
    for (size_t p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
    return n;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("megarena coding columns follow the x sequence") {
    MegarenaSpec spec = MegarenaSpec::with_defaults(4, 5);
    const DotLayout l = layout_megarena(spec);
    REQUIRE(l.rows == 15);
    REQUIRE(l.cols == 15);

    const BitSequence xs = generate_msequence(spec.x_spec);
    // first bits of the default n=4 sequence: 0,0,0,1,0
    CHECK(xs.bits[0] == 0);
    CHECK(xs.bits[1] == 0);
    CHECK(xs.bits[2] == 0);
    CHECK(xs.bits[3] == 1);
    CHECK(xs.bits[4] == 0);

    // non-coding rows of a coding column mirror the column's bit
    for (int m = 0; m < 5; ++m) {
        const int j = 3 * m + 2;
        for (int i = 0; i < 15; ++i) {
            if (i % 3 == 2) continue;
            CHECK(l.present(i, j) == (xs.bits[size_t(m)] == 1));
        }
    }
}

TEST_CASE("megarena: intersection cells always absent, density <= 8/9") {
    const DotLayout l = layout_megarena(MegarenaSpec::with_defaults(4, 5));
    for (int i = 2; i < l.rows; i += 3)
        for (int j = 2; j < l.cols; j += 3) CHECK_FALSE(l.present(i, j));
    CHECK(l.count_present() <= (l.rows * l.cols * 8) / 9);
}

TEST_CASE("megarena extent beyond the sequence is rejected") {
    CHECK_THROWS_AS(layout_megarena(MegarenaSpec::with_defaults(4, 16)), Error);
}

TEST_CASE("hp layout: id zero leaves the reserved zone populated") {
    const MarkerLayout m = layout_hpcode({.periods_across = 21, .marker_id = 0});
    for (const auto& [i, j] : m.geometry.id_cells) CHECK(m.dots.present(i, j));
}

TEST_CASE("hp layout: id bits round trip, capacity enforced") {
    for (int id : {1, 5, 0x2a}) {
        const MarkerLayout m = layout_hpcode({.periods_across = 21, .marker_id = id});
        CHECK(read_marker_id(m.dots, m.geometry) == id);
    }
    const int cap = hp_geometry(21).id_capacity();
    CHECK_THROWS_AS(layout_hpcode({.periods_across = 21, .marker_id = 1 << cap}), Error);
}

TEST_CASE("stamp layout: border leaves an 18x18 interior at 20 periods") {
    const MarkerLayout m = layout_stamp({.periods_across = 20, .border_thickness = 1});
    int interior_rows = 0;
    for (int i = 0; i < 20; ++i) {
        bool any = false;
        for (int j = 0; j < 20; ++j) any = any || m.dots.present(i, j);
        if (any) ++interior_rows;
    }
    CHECK(interior_rows == 18);
    for (int j = 0; j < 20; ++j) {
        CHECK_FALSE(m.dots.present(0, j));
        CHECK_FALSE(m.dots.present(19, j));
    }
}

TEST_CASE("stamp id round trip") {
    const MarkerLayout m = layout_stamp({.periods_across = 20, .border_thickness = 1, .marker_id = 5});
    CHECK(read_marker_id(m.dots, m.geometry) == 5);
}

TEST_CASE("small markers have no rotational symmetry") {
    const auto distinct_under_rotation = [](const ArrayXXb& g) {
        for (int k = 1; k < 4; ++k) {
            const ArrayXXb r = rotate_grid(g, k);
            if (r.rows() == g.rows() && r.cols() == g.cols() && (r == g).all()) return false;
        }
        return true;
    };
    CHECK(distinct_under_rotation(layout_hpcode({.periods_across = 17}).dots.present));
    CHECK(distinct_under_rotation(layout_hpcode({.periods_across = 9}).dots.present));
    CHECK(distinct_under_rotation(
        layout_stamp({.periods_across = 17, .border_thickness = 1}).dots.present));
    CHECK(distinct_under_rotation(
        layout_stamp({.periods_across = 9, .border_thickness = 1}).dots.present));
}

TEST_CASE("rotate_grid is an order-4 action") {
    const DotLayout l = layout_megarena(MegarenaSpec::with_defaults(4, 4));
    ArrayXXb g = l.present;
    for (int k = 0; k < 4; ++k) g = rotate_grid(g, 1);
    CHECK((g == l.present).all());
}

TEST_CASE("svg export: one circle per present dot, document size in mm") {
    DotLayout l = DotLayout::filled(3, 30);
    l.period = 0.01; // mm
    l.present(1, 5) = false;
    const auto path = std::filesystem::temp_directory_path() / "pm_layout.svg";
    export_svg(l, path.string());
    const std::string svg = slurp(path);
    CHECK(count_substr(svg, "<circle") == l.count_present());
    CHECK(svg.find("width=\"0.3mm\"") != std::string::npos);
    CHECK(svg.find("height=\"0.03mm\"") != std::string::npos);

    DotLayout empty = DotLayout::filled(2, 2, false);
    export_svg(empty, path.string());
    CHECK(count_substr(slurp(path), "<circle") == 0);
}

TEST_CASE("svg export is deterministic") {
    const MarkerLayout m = layout_stamp({.periods_across = 12, .border_thickness = 1, .marker_id = 3});
    const auto p1 = std::filesystem::temp_directory_path() / "pm_det1.svg";
    const auto p2 = std::filesystem::temp_directory_path() / "pm_det2.svg";
    export_svg(m, p1.string());
    export_svg(m, p2.string());
    CHECK(slurp(p1) == slurp(p2));
}
