// Command-line front end: render calibrated marker images, export layouts,
// estimate poses from images and run resolution/robustness sweeps.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <fstream>
#include <iostream>
#include <thread>

#include "phasemark/image_io.hpp"
#include "phasemark/pipeline.hpp"
#include "phasemark/render.hpp"

using json = nlohmann::ordered_json;
using namespace phasemark;

namespace {

constexpr int kSchemaVersion = 1;

// exit-code taxonomy: 0 ok, 2 config, 3 detection, 4 decode, 5 I/O
int exit_code_for(ErrorCode c) {
    switch (c) {
        case ErrorCode::InvalidArgument:
        case ErrorCode::ConfigError: return 2;
        case ErrorCode::NoLatticeFound:
        case ErrorCode::NonOrthogonalLattice:
        case ErrorCode::FitDegenerate:
        case ErrorCode::NoMarkerFound: return 3;
        case ErrorCode::IoError: return 5;
        default: return 4;
    }
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) raise(ErrorCode::ConfigError, where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) raise(ErrorCode::ConfigError, "unknown field \"" + key + "\" in " + where);
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        raise(ErrorCode::ConfigError, std::string("field \"") + key + "\" has the wrong type");
    }
}

struct MarkerConfig {
    MarkerKind kind = MarkerKind::Megarena;
    int n = 8;
    int extent_codes = 60;
    std::uint32_t x_seed = 1, y_seed = 5;
    int periods_across = 21;
    int border_thickness = 1;
    int marker_id = 0;
    double period_mm = 0.01;
    double dot_diameter_ratio = 0.5;

    MegarenaSpec megarena() const {
        MegarenaSpec s = MegarenaSpec::with_defaults(n, extent_codes);
        s.x_spec.seed = x_seed;
        s.y_spec.seed = y_seed;
        s.period = period_mm;
        s.dot_diameter_ratio = dot_diameter_ratio;
        s.validate();
        return s;
    }
    MarkerLayout small_layout() const {
        if (kind == MarkerKind::HpCode)
            return layout_hpcode({periods_across, marker_id, period_mm, dot_diameter_ratio});
        return layout_stamp(
            {periods_across, border_thickness, marker_id, period_mm, dot_diameter_ratio});
    }
};

struct JobConfig {
    MarkerConfig marker;
    RenderPose pose;
    int width = 512, height = 512;
    SensorSpec sensor{8, 0.0, 0.0};
    std::optional<bool> apodize;
    std::optional<double> sigma_f;
    std::optional<std::pair<double, double>> period_hint_px;
    GuidelineToggles guidelines;
    // bench sweep
    std::vector<int> bench_periods{9, 13, 17, 25};
    std::vector<double> bench_noise{0.0};
    std::vector<double> bench_blur{0.0};
    int bench_repetitions = 20;
    double bench_theta_range = 0.15;
    json raw;
};

JobConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::IoError, "cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        raise(ErrorCode::ConfigError, std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, "config",
               {"schema_version", "marker", "pose", "image", "analysis", "guidelines", "bench"});
    if (get_or(j, "schema_version", kSchemaVersion) != kSchemaVersion)
        raise(ErrorCode::ConfigError, "unsupported schema_version");

    JobConfig cfg;
    cfg.raw = j;
    if (j.contains("marker")) {
        const json& m = j["marker"];
        check_keys(m, "marker",
                   {"kind", "n", "extent_codes", "x_seed", "y_seed", "periods_across",
                    "border_thickness", "marker_id", "period_mm", "dot_diameter_ratio"});
        const std::string kind = get_or<std::string>(m, "kind", "megarena");
        if (kind == "megarena")
            cfg.marker.kind = MarkerKind::Megarena;
        else if (kind == "hp")
            cfg.marker.kind = MarkerKind::HpCode;
        else if (kind == "stamp")
            cfg.marker.kind = MarkerKind::Stamp;
        else
            raise(ErrorCode::ConfigError, "marker.kind must be megarena, hp or stamp");
        cfg.marker.n = get_or(m, "n", cfg.marker.n);
        cfg.marker.extent_codes = get_or(m, "extent_codes", cfg.marker.extent_codes);
        cfg.marker.x_seed = get_or(m, "x_seed", cfg.marker.x_seed);
        cfg.marker.y_seed = get_or(m, "y_seed", cfg.marker.y_seed);
        cfg.marker.periods_across = get_or(m, "periods_across", cfg.marker.periods_across);
        cfg.marker.border_thickness = get_or(m, "border_thickness", cfg.marker.border_thickness);
        cfg.marker.marker_id = get_or(m, "marker_id", cfg.marker.marker_id);
        cfg.marker.period_mm = get_or(m, "period_mm", cfg.marker.period_mm);
        cfg.marker.dot_diameter_ratio =
            get_or(m, "dot_diameter_ratio", cfg.marker.dot_diameter_ratio);
    }
    if (j.contains("pose")) {
        const json& p = j["pose"];
        check_keys(p, "pose", {"tx", "ty", "theta", "pixels_per_period"});
        cfg.pose.tx = get_or(p, "tx", 0.0);
        cfg.pose.ty = get_or(p, "ty", 0.0);
        cfg.pose.theta = get_or(p, "theta", 0.0);
        cfg.pose.pixels_per_period = get_or(p, "pixels_per_period", 10.0);
    }
    if (j.contains("image")) {
        const json& im = j["image"];
        check_keys(im, "image", {"width", "height", "bit_depth", "noise_sigma", "blur_sigma"});
        cfg.width = get_or(im, "width", cfg.width);
        cfg.height = get_or(im, "height", cfg.height);
        cfg.sensor.bit_depth = get_or(im, "bit_depth", cfg.sensor.bit_depth);
        cfg.sensor.gaussian_noise_sigma = get_or(im, "noise_sigma", 0.0);
        cfg.sensor.blur_sigma = get_or(im, "blur_sigma", 0.0);
    }
    if (j.contains("analysis")) {
        const json& a = j["analysis"];
        check_keys(a, "analysis", {"apodize", "sigma_f", "period_min_px", "period_max_px"});
        if (a.contains("apodize")) cfg.apodize = a["apodize"].get<bool>();
        if (a.contains("sigma_f")) cfg.sigma_f = a["sigma_f"].get<double>();
        if (a.contains("period_min_px") != a.contains("period_max_px"))
            raise(ErrorCode::ConfigError, "period_min_px and period_max_px come together");
        if (a.contains("period_min_px"))
            cfg.period_hint_px = {{a["period_min_px"].get<double>(),
                                   a["period_max_px"].get<double>()}};
    }
    if (j.contains("guidelines")) {
        const json& g = j["guidelines"];
        check_keys(g, "guidelines", {"pixels_per_period", "marker_periods", "megarena_visibility"});
        cfg.guidelines.pixels_per_period = get_or(g, "pixels_per_period", true);
        cfg.guidelines.marker_periods = get_or(g, "marker_periods", true);
        cfg.guidelines.megarena_visibility = get_or(g, "megarena_visibility", true);
    }
    if (j.contains("bench")) {
        const json& b = j["bench"];
        check_keys(b, "bench",
                   {"periods", "noise_sigma", "blur_sigma", "repetitions", "theta_range"});
        cfg.bench_periods = get_or(b, "periods", cfg.bench_periods);
        cfg.bench_noise = get_or(b, "noise_sigma", cfg.bench_noise);
        cfg.bench_blur = get_or(b, "blur_sigma", cfg.bench_blur);
        cfg.bench_repetitions = get_or(b, "repetitions", cfg.bench_repetitions);
        cfg.bench_theta_range = get_or(b, "theta_range", cfg.bench_theta_range);
    }
    return cfg;
}

AnalyzeConfig analyze_config(const JobConfig& cfg, bool apodize_default) {
    AnalyzeConfig a;
    a.apodize = cfg.apodize.value_or(apodize_default);
    a.sigma_f = cfg.sigma_f;
    a.period_hint_px = cfg.period_hint_px;
    return a;
}

json guideline_json(const std::vector<GuidelineCheck>& checks) {
    json out = json::array();
    for (const auto& c : checks)
        out.push_back({{"name", c.name},
                       {"status", guideline_status_name(c.status)},
                       {"message", c.message}});
    return out;
}

// ---------------------------------------------------------------------------

int cmd_render(const JobConfig& cfg, const std::string& output, std::uint64_t seed, bool quiet) {
    if (output.empty()) raise(ErrorCode::ConfigError, "render needs --output");
    cfg.pose.validate();
    cfg.sensor.validate();

    ImageGray img;
    std::optional<std::pair<int, int>> mega_check;
    if (cfg.marker.kind == MarkerKind::Megarena) {
        const MegarenaSpec spec = cfg.marker.megarena();
        img = render(layout_megarena(spec), cfg.pose, cfg.width, cfg.height);
        const int visible =
            int(std::min(cfg.width, cfg.height) / cfg.pose.pixels_per_period) - 2;
        mega_check = {{visible, spec.n}};
    } else {
        img = render(cfg.marker.small_layout(), cfg.pose, cfg.width, cfg.height);
    }
    if (cfg.sensor.blur_sigma > 0 || cfg.sensor.gaussian_noise_sigma > 0 ||
        cfg.sensor.bit_depth < 16)
        img = degrade(img, cfg.sensor, seed);
    save_image(img, output, cfg.sensor.bit_depth >= 16 ? 16 : 8);

    // ground-truth sidecar for oracle testing
    json sidecar = {{"schema_version", kSchemaVersion},
                    {"command", "render"},
                    {"seed", seed},
                    {"pose",
                     {{"tx", cfg.pose.tx},
                      {"ty", cfg.pose.ty},
                      {"theta", cfg.pose.theta},
                      {"pixels_per_period", cfg.pose.pixels_per_period}}},
                    {"config", cfg.raw}};
    std::ofstream side(output + ".json");
    if (!side) raise(ErrorCode::IoError, "cannot write sidecar for " + output);
    side << sidecar.dump(2) << "\n";

    const auto checks = guideline_report(
        cfg.pose.pixels_per_period,
        cfg.marker.kind == MarkerKind::Megarena ? std::nullopt
                                                : std::make_optional(cfg.marker.periods_across),
        mega_check, cfg.guidelines);
    if (!quiet) {
        json rec = {{"schema_version", kSchemaVersion},
                    {"command", "render"},
                    {"output", output},
                    {"guidelines", guideline_json(checks)}};
        std::cout << rec.dump(2) << "\n";
    }
    return 0;
}

json pose_record(const Pose2D& physical, double period_mm, double confidence, int marker_id,
                 int quadrant) {
    return {{"x_periods", physical.x / period_mm},
            {"y_periods", physical.y / period_mm},
            {"x_mm", physical.x},
            {"y_mm", physical.y},
            {"theta_rad", physical.theta},
            {"sigma_xy_mm", physical.sigma_xy},
            {"sigma_theta_rad", physical.sigma_theta},
            {"confidence", confidence},
            {"marker_id", marker_id},
            {"quadrant", quadrant}};
}

void print_estimate_csv(const json& rec) {
    std::cout << "index,marker_id,x_periods,y_periods,x_mm,y_mm,theta_rad,confidence\n";
    int i = 0;
    for (const auto& p : rec.at("poses")) {
        std::cout << i++ << "," << p.at("marker_id").get<int>() << ","
                  << p.at("x_periods").get<double>() << "," << p.at("y_periods").get<double>()
                  << "," << p.at("x_mm").get<double>() << "," << p.at("y_mm").get<double>() << ","
                  << p.at("theta_rad").get<double>() << "," << p.at("confidence").get<double>()
                  << "\n";
    }
}

int cmd_estimate(const JobConfig& cfg, const std::string& image_path, const std::string& format,
                 bool quiet) {
    const ImageGray img = load_image(image_path);
    json rec = {{"schema_version", kSchemaVersion},
                {"command", "estimate"},
                {"kind", marker_kind_name(cfg.marker.kind)},
                {"image", image_path}};

    if (cfg.marker.kind == MarkerKind::Megarena) {
        const MegarenaSpec spec = cfg.marker.megarena();
        const MegarenaEstimate est =
            estimate_megarena_pose(img, spec, analyze_config(cfg, false));
        rec["poses"] = json::array(
            {pose_record(est.pose, spec.period, est.decode.pose.confidence, -1,
                         est.decode.quadrant)});
        rec["period_px"] = est.phase.period_px;
        rec["timings_ms"] = {{"spectrum", est.timings.spectrum_ms},
                             {"peaks", est.timings.peaks_ms},
                             {"phase", est.timings.phase_ms},
                             {"decode", est.timings.decode_ms},
                             {"total", est.timings.total_ms}};
        rec["guidelines"] = guideline_json(guideline_report(
            est.phase.period_px, std::nullopt,
            {{std::min(est.decode.visible_cells_x, est.decode.visible_cells_y), spec.n}},
            cfg.guidelines));
    } else {
        detail::StageClock total;
        const SmallMarkersEstimate est = estimate_small_markers(
            img, cfg.marker.kind, cfg.marker.periods_across, cfg.marker.border_thickness);
        const double total_ms = total.lap();
        rec["poses"] = json::array();
        for (const auto& m : est.markers) {
            Pose2D p = small_marker_pose(m, nullptr, cfg.marker.period_mm);
            p.sigma_xy = m.rms_residual / kTwoPi * cfg.marker.period_mm /
                         std::sqrt(std::max(1.0, m.period_px * m.period_px));
            rec["poses"].push_back(
                pose_record(p, cfg.marker.period_mm, 1.0, m.marker_id, m.quadrant));
        }
        json rels = json::array();
        for (size_t a = 0; a < est.markers.size(); ++a)
            for (size_t b = a + 1; b < est.markers.size(); ++b) {
                const Pose2D rel =
                    relative_pose(small_marker_pose(est.markers[a], nullptr, cfg.marker.period_mm),
                                  small_marker_pose(est.markers[b], nullptr, cfg.marker.period_mm));
                rels.push_back({{"a", a},
                                {"b", b},
                                {"dx_mm", rel.x},
                                {"dy_mm", rel.y},
                                {"dx_periods", rel.x / cfg.marker.period_mm},
                                {"dy_periods", rel.y / cfg.marker.period_mm},
                                {"dtheta_rad", rel.theta}});
            }
        rec["relative_poses"] = rels;
        rec["period_px"] = est.markers.empty() ? 0.0 : est.markers.front().period_px;
        rec["timings_ms"] = {{"detect", est.timings.peaks_ms}, {"total", total_ms}};
        rec["guidelines"] = guideline_json(
            guideline_report(est.markers.empty() ? 0.0 : est.markers.front().period_px,
                             cfg.marker.periods_across, std::nullopt, cfg.guidelines));
    }
    if (!quiet) {
        if (format == "csv")
            print_estimate_csv(rec);
        else
            std::cout << rec.dump(2) << "\n";
    }
    return 0;
}

struct BenchPoint {
    int periods;
    double noise, blur;
    int reps = 0, successes = 0;
    double stdx_px = 0, stdy_px = 0, theta_std_mrad = 0, mean_latency_ms = 0;
};

int cmd_bench(const JobConfig& cfg, const std::string& output, std::uint64_t seed, int threads,
              bool quiet) {
    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!output.empty()) {
        file.open(output);
        if (!file) raise(ErrorCode::IoError, "cannot write " + output);
        out = &file;
    }
    *out << "periods,noise_sigma,blur_sigma,repetitions,successes,success_rate,"
            "err_std_x_px,err_std_y_px,err_std_x_periods,err_std_y_periods,"
            "theta_std_mrad,mean_latency_ms\n";

    const double s = cfg.pose.pixels_per_period;
    for (int periods : cfg.bench_periods) {
        const MarkerLayout layout = layout_hpcode({.periods_across = periods,
                                                   .marker_id = cfg.marker.marker_id,
                                                   .period = cfg.marker.period_mm,
                                                   .dot_diameter_ratio =
                                                       cfg.marker.dot_diameter_ratio});
        for (double noise : cfg.bench_noise) {
            for (double blur : cfg.bench_blur) {
                const int reps = cfg.bench_repetitions;
                struct Rep {
                    bool ok = false;
                    double ex = 0, ey = 0, et = 0, ms = 0;
                };
                std::vector<Rep> results(size_t(std::max(0, reps)));
                std::atomic<int> next{0};
                const auto worker = [&] {
                    for (int r; (r = next.fetch_add(1)) < reps;) {
                        detail::SplitMix64 rng(seed ^ (0x9e37u + std::uint64_t(r) * 1315423911u +
                                                       std::uint64_t(periods) * 2654435761u));
                        rng.next();
                        const RenderPose pose{rng.uniform01() - 0.5, rng.uniform01() - 0.5,
                                              (2 * rng.uniform01() - 1) * cfg.bench_theta_range,
                                              s};
                        const int size = int(std::ceil((periods + 6) * s));
                        ImageGray img = render(layout, pose, size, size);
                        if (noise > 0 || blur > 0)
                            img = degrade(img, {12, noise, blur}, seed + 7777u * unsigned(r));
                        detail::StageClock clock;
                        try {
                            const auto est =
                                estimate_small_markers(img, MarkerKind::HpCode, periods);
                            const double ms = clock.lap();
                            if (est.markers.size() == 1) {
                                Rep rep;
                                rep.ok = true;
                                rep.ex = (est.markers[0].tx - pose.tx) * s;
                                rep.ey = (est.markers[0].ty - pose.ty) * s;
                                rep.et = wrap_angle(est.markers[0].theta -
                                                    wrap_angle_positive(pose.theta));
                                rep.ms = ms;
                                results[size_t(r)] = rep;
                            }
                        } catch (const Error&) {
                            results[size_t(r)].ms = clock.lap();
                        }
                    }
                };
                std::vector<std::thread> pool;
                for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
                worker();
                for (auto& t : pool) t.join();

                BenchPoint pt{periods, noise, blur};
                pt.reps = std::max(0, reps);
                double sx = 0, sy = 0, st = 0, sms = 0;
                for (const Rep& r : results)
                    if (r.ok) {
                        ++pt.successes;
                        sx += r.ex;
                        sy += r.ey;
                        st += r.et;
                    }
                for (const Rep& r : results) sms += r.ms;
                if (pt.successes > 0) {
                    const double mx = sx / pt.successes, my = sy / pt.successes,
                                 mt = st / pt.successes;
                    double vx = 0, vy = 0, vt = 0;
                    for (const Rep& r : results)
                        if (r.ok) {
                            vx += (r.ex - mx) * (r.ex - mx);
                            vy += (r.ey - my) * (r.ey - my);
                            vt += (r.et - mt) * (r.et - mt);
                        }
                    pt.stdx_px = std::sqrt(vx / pt.successes);
                    pt.stdy_px = std::sqrt(vy / pt.successes);
                    pt.theta_std_mrad = std::sqrt(vt / pt.successes) * 1000.0;
                    pt.mean_latency_ms = sms / pt.reps;
                }
                char line[256];
                std::snprintf(line, sizeof line, "%d,%g,%g,%d,%d,%.4f,%.6f,%.6f,%.7f,%.7f,%.4f,%.3f\n",
                              pt.periods, pt.noise, pt.blur, pt.reps, pt.successes,
                              pt.reps ? double(pt.successes) / pt.reps : 0.0, pt.stdx_px,
                              pt.stdy_px, pt.stdx_px / s, pt.stdy_px / s, pt.theta_std_mrad,
                              pt.mean_latency_ms);
                *out << line;
            }
        }
    }
    if (!quiet && !output.empty()) std::cout << "bench results written to " << output << "\n";
    return 0;
}

int cmd_layout(const JobConfig& cfg, const std::string& output, bool quiet) {
    if (output.empty()) raise(ErrorCode::ConfigError, "layout needs --output");
    std::string base = output;
    for (const char* suffix : {".svg", ".png"}) {
        const size_t len = std::string(suffix).size();
        if (base.size() > len && base.compare(base.size() - len, len, suffix) == 0)
            base.resize(base.size() - len);
    }

    DotLayout dots;
    std::vector<PaintRect> overlay;
    if (cfg.marker.kind == MarkerKind::Megarena) {
        dots = layout_megarena(cfg.marker.megarena());
    } else {
        MarkerLayout m = cfg.marker.small_layout();
        dots = m.dots;
        overlay = m.overlay;
    }
    export_svg(dots, overlay, base + ".svg");

    const double s = cfg.pose.pixels_per_period;
    const int size_x = int(std::ceil((dots.cols + 2) * s));
    const int size_y = int(std::ceil((dots.rows + 2) * s));
    const ImageGray img =
        render(dots, overlay, {.tx = 0, .ty = 0, .theta = 0, .pixels_per_period = s}, size_x,
               size_y);
    save_image(img, base + ".png", 8);

    if (!quiet) {
        json rec = {{"schema_version", kSchemaVersion},
                    {"command", "layout"},
                    {"svg", base + ".svg"},
                    {"png", base + ".png"},
                    {"cells", {{"rows", dots.rows}, {"cols", dots.cols}}}};
        std::cout << rec.dump(2) << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pseudo-periodic marker renderer and pose estimator"};
    app.require_subcommand(1);

    std::string config_path, output, format = "json", image_path;
    std::uint64_t seed = 0;
    int threads = 1;
    bool no_apodize = false, quiet = false;

    const auto add_common = [&](CLI::App* sub, bool needs_image) {
        sub->add_option("--config", config_path, "JSON job configuration")->required();
        sub->add_option("--seed", seed, "random seed");
        sub->add_option("--output", output, "output path");
        sub->add_option("--format", format, "output format (json or csv)")
            ->check(CLI::IsMember({"json", "csv"}));
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--no-apodize", no_apodize, "disable spectral apodization");
        sub->add_flag("--quiet", quiet, "suppress the stdout record");
        if (needs_image)
            sub->add_option("image", image_path, "input image (PGM or PNG)")->required();
    };

    CLI::App* render_cmd = app.add_subcommand("render", "render a synthetic marker image");
    CLI::App* estimate_cmd = app.add_subcommand("estimate", "estimate pose from an image");
    CLI::App* bench_cmd = app.add_subcommand("bench", "resolution/robustness sweeps (CSV)");
    CLI::App* layout_cmd = app.add_subcommand("layout", "export SVG/PNG layout files");
    add_common(render_cmd, false);
    add_common(estimate_cmd, true);
    add_common(bench_cmd, false);
    add_common(layout_cmd, false);

    CLI11_PARSE(app, argc, argv);

    try {
        JobConfig cfg = parse_config(config_path);
        if (no_apodize) cfg.apodize = false;
        if (render_cmd->parsed()) return cmd_render(cfg, output, seed, quiet);
        if (estimate_cmd->parsed()) return cmd_estimate(cfg, image_path, format, quiet);
        if (bench_cmd->parsed()) return cmd_bench(cfg, output, seed, threads, quiet);
        if (layout_cmd->parsed()) return cmd_layout(cfg, output, quiet);
    } catch (const Error& e) {
        json rec = {{"schema_version", kSchemaVersion},
                    {"error", {{"code", error_code_name(e.code())}, {"message", e.what()}}}};
        std::cout << rec.dump(2) << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        json rec = {{"schema_version", kSchemaVersion},
                    {"error", {{"code", "Internal"}, {"message", e.what()}}}};
        std::cout << rec.dump(2) << "\n";
        return 1;
    }
    return 0;
}
