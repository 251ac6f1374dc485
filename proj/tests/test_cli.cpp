#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "phasemark/types.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / "phasemark_cli_tests";

struct RunResult {
    int exit_code;
    std::string stdout_text;
};

RunResult run_cli(const std::string& args) {
    fs::create_directories(kDir);
    const fs::path out = kDir / "stdout.txt";
    const std::string cmd = std::string(PHASEMARK_CLI_PATH) + " " + args + " > " + out.string() +
                            " 2>" + (kDir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    std::ifstream in(out);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

fs::path write_config(const std::string& name, const json& j) {
    fs::create_directories(kDir);
    const fs::path p = kDir / name;
    std::ofstream out(p);
    out << j.dump(2);
    return p;
}

json megarena_config() {
    return {{"schema_version", 1},
            {"marker", {{"kind", "megarena"}, {"n", 8}, {"extent_codes", 60}}},
            {"pose", {{"tx", 12.25}, {"ty", 3.5}, {"theta", 0.05}, {"pixels_per_period", 10.0}}},
            {"image", {{"width", 320}, {"height", 320}, {"bit_depth", 8}}}};
}

} // namespace

TEST_CASE("render writes the image plus an echoing sidecar") {
    const fs::path cfg = write_config("render.json", megarena_config());
    const fs::path img = kDir / "scene.png";
    const RunResult r =
        run_cli("render --config " + cfg.string() + " --output " + img.string() + " --seed 3");
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(img));
    std::ifstream side(img.string() + ".json");
    REQUIRE(side.good());
    const json sidecar = json::parse(side);
    CHECK(sidecar["pose"]["tx"].get<double>() == 12.25);
    CHECK(sidecar["pose"]["ty"].get<double>() == 3.5);
    CHECK(sidecar["pose"]["theta"].get<double>() == 0.05);
    CHECK(sidecar["seed"].get<int>() == 3);
    CHECK(sidecar["config"]["marker"]["n"].get<int>() == 8);
}

TEST_CASE("render then estimate recovers the pose, exit 0") {
    json cfgj = megarena_config();
    // center the view on a known absolute position: with tx=ty=0 the image
    // center sees the layout middle cell (3*60-1)/2 = 89.5
    cfgj["pose"]["tx"] = 0.25;
    cfgj["pose"]["ty"] = -0.5;
    cfgj["pose"]["theta"] = 0.1;
    const fs::path cfg = write_config("roundtrip.json", cfgj);
    const fs::path img = kDir / "roundtrip.png";
    CHECK(run_cli("render --config " + cfg.string() + " --output " + img.string()).exit_code == 0);

    const RunResult est = run_cli("estimate --config " + cfg.string() + " " + img.string());
    REQUIRE(est.exit_code == 0);
    const json rec = json::parse(est.stdout_text);
    REQUIRE(rec["poses"].size() == 1);
    // m_center = m_mid - R(-theta) * t
    const phasemark::Vec2 t(0.25, -0.5);
    const phasemark::Vec2 mc =
        phasemark::Vec2(89.5, 89.5) - phasemark::rotation2d(-0.1) * t;
    CHECK(std::abs(rec["poses"][0]["x_periods"].get<double>() - mc.x()) < 0.01);
    CHECK(std::abs(rec["poses"][0]["y_periods"].get<double>() - mc.y()) < 0.01);
    CHECK(std::abs(rec["poses"][0]["theta_rad"].get<double>() - 0.1) < 0.002);
    CHECK(rec["timings_ms"]["total"].get<double>() > 0);
    CHECK(rec["guidelines"].size() == 2);
}

TEST_CASE("unknown config fields are rejected with exit 2") {
    json bad = megarena_config();
    bad["marker"]["typo_field"] = 1;
    const fs::path cfg = write_config("bad.json", bad);
    const RunResult r = run_cli("render --config " + cfg.string() + " --output " +
                                (kDir / "x.png").string());
    CHECK(r.exit_code == 2);
    const json rec = json::parse(r.stdout_text);
    CHECK(rec["error"]["code"].get<std::string>() == "ConfigError");
}

TEST_CASE("blank image fails detection with exit 3") {
    const fs::path cfg = write_config("blank.json", megarena_config());
    const fs::path img = kDir / "blank.pgm";
    {
        std::ofstream out(img, std::ios::binary);
        out << "P5\n64 64\n255\n";
        for (int i = 0; i < 64 * 64; ++i) out.put(0);
    }
    const RunResult r = run_cli("estimate --config " + cfg.string() + " " + img.string());
    CHECK(r.exit_code == 3);
    const json rec = json::parse(r.stdout_text);
    CHECK(rec["error"]["code"].get<std::string>() == "NoLatticeFound");
}

TEST_CASE("low pixels-per-period renders with a warning") {
    json cfgj = megarena_config();
    cfgj["pose"]["pixels_per_period"] = 4.0;
    const fs::path cfg = write_config("warn.json", cfgj);
    const RunResult r = run_cli("render --config " + cfg.string() + " --output " +
                                (kDir / "warn.png").string());
    REQUIRE(r.exit_code == 0);
    const json rec = json::parse(r.stdout_text);
    bool warned = false;
    for (const auto& g : rec["guidelines"])
        if (g["name"] == "pixels_per_period") warned = g["status"] == "warn";
    CHECK(warned);
}

TEST_CASE("layout export is deterministic and has the 3x arithmetic") {
    const json cfgj = {{"schema_version", 1},
                       {"marker", {{"kind", "megarena"}, {"n", 4}, {"extent_codes", 15}}},
                       {"pose", {{"pixels_per_period", 4.0}}}};
    const fs::path cfg = write_config("layout.json", cfgj);
    const fs::path out1 = kDir / "layout_a", out2 = kDir / "layout_b";
    const RunResult r1 = run_cli("layout --config " + cfg.string() + " --output " + out1.string());
    const RunResult r2 = run_cli("layout --config " + cfg.string() + " --output " + out2.string());
    REQUIRE(r1.exit_code == 0);
    REQUIRE(r2.exit_code == 0);
    const json rec = json::parse(r1.stdout_text);
    CHECK(rec["cells"]["rows"].get<int>() == 45);
    CHECK(rec["cells"]["cols"].get<int>() == 45);

    const auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string svg1 = slurp(out1.string() + ".svg"), svg2 = slurp(out2.string() + ".svg");
    CHECK(!svg1.empty());
    CHECK(svg1 == svg2);
}

TEST_CASE("bench with zero repetitions emits only the CSV header") {
    json cfgj = {{"schema_version", 1},
                 {"marker", {{"kind", "hp"}}},
                 {"pose", {{"pixels_per_period", 10.0}}},
                 {"bench", {{"periods", {9, 13}}, {"repetitions", 0}}}};
    const fs::path cfg = write_config("bench0.json", cfgj);
    const fs::path out = kDir / "bench0.csv";
    const RunResult r = run_cli("bench --config " + cfg.string() + " --output " + out.string() +
                                " --quiet");
    REQUIRE(r.exit_code == 0);
    std::ifstream in(out);
    std::string line;
    std::getline(in, line);
    CHECK(line.find("periods,noise_sigma") == 0);
    int data_lines = 0;
    while (std::getline(in, line))
        if (!line.empty()) {
            ++data_lines;
            CHECK(line.find(",0,0,") != std::string::npos); // reps=0, successes=0
        }
    CHECK(data_lines == 2); // one row per grid point, all empty
}

TEST_CASE("hp estimate via CLI with two markers reports a relative pose") {
    // render two hp markers into one frame by rendering twice and merging
    // is a library-level affair; the CLI path covers the single-marker case
    const json cfgj = {{"schema_version", 1},
                       {"marker", {{"kind", "hp"}, {"periods_across", 21}, {"marker_id", 9}}},
                       {"pose", {{"tx", 0.2}, {"ty", -0.3}, {"theta", 0.1},
                                 {"pixels_per_period", 10.0}}},
                       {"image", {{"width", 300}, {"height", 300}}}};
    const fs::path cfg = write_config("hp.json", cfgj);
    const fs::path img = kDir / "hp.png";
    REQUIRE(run_cli("render --config " + cfg.string() + " --output " + img.string()).exit_code ==
            0);
    const RunResult est = run_cli("estimate --config " + cfg.string() + " " + img.string());
    REQUIRE(est.exit_code == 0);
    const json rec = json::parse(est.stdout_text);
    REQUIRE(rec["poses"].size() == 1);
    CHECK(rec["poses"][0]["marker_id"].get<int>() == 9);
    CHECK(std::abs(rec["poses"][0]["x_periods"].get<double>() - 0.2) < 0.01);
    CHECK(std::abs(rec["poses"][0]["y_periods"].get<double>() - (-0.3)) < 0.01);
    CHECK(rec["relative_poses"].empty());

    // csv variant
    const RunResult csv =
        run_cli("estimate --format csv --config " + cfg.string() + " " + img.string());
    CHECK(csv.exit_code == 0);
    CHECK(csv.stdout_text.find("index,marker_id") == 0);
}
