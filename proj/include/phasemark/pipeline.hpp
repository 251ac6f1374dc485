#pragma once

#include <vector>

#include "phasemark/decode.hpp"
#include "phasemark/detect.hpp"
#include "phasemark/guidelines.hpp"
#include "phasemark/pose.hpp"

namespace phasemark {

/// Scalar pose uncertainties from the fit residual: the plane offset
/// averages roughly N independent phase samples, so
/// sigma_c ~ rms / sqrt(N) with N the upper-amplitude pixel count.
inline void fill_uncertainty(Pose2D& pose, const PhaseResult& phase, double period) {
    const double n_eff = std::max(1.0, phase.width * phase.height / 2.0);
    const double rms =
        std::max(phase.plane1.rms_residual, phase.plane2.rms_residual);
    const double sigma_c = rms / std::sqrt(n_eff);
    pose.sigma_xy = sigma_c / kTwoPi * period;
    const double extent_px = std::hypot(phase.width, phase.height) / 4.0;
    pose.sigma_theta = sigma_c / (kTwoPi / phase.period_px * extent_px);
}

struct MegarenaEstimate {
    MegarenaDecodeResult decode;
    PhaseResult phase;
    Pose2D pose; // physical units
    StageTimings timings;
};

/// End-to-end absolute estimation on an encoded pattern image.
inline MegarenaEstimate estimate_megarena_pose(const ImageGray& img, const MegarenaSpec& spec,
                                               AnalyzeConfig config = {.apodize = false}) {
    detail::StageClock total;
    MegarenaEstimate out;
    out.phase = analyze(img, config, &out.timings);

    detail::StageClock clock;
    const WindowIndex index_x = build_window_index(generate_msequence(spec.x_spec), spec.n);
    const WindowIndex index_y = build_window_index(generate_msequence(spec.y_spec), spec.n);
    out.decode = decode_megarena(img, out.phase, spec, index_x, index_y);
    out.timings.decode_ms = clock.lap();
    out.timings.total_ms = total.lap();

    out.pose.x = out.decode.pose.x;
    out.pose.y = out.decode.pose.y;
    out.pose.theta = out.decode.pose.theta;
    fill_uncertainty(out.pose, out.phase, spec.period);
    return out;
}

struct SmallMarkersEstimate {
    std::vector<MarkerRegion> regions;
    std::vector<SmallMarkerEstimate> markers; // aligned with regions
    StageTimings timings;
};

/// Detect every marker of the requested kind and estimate each one's
/// pose. Regions whose fine estimation fails are dropped; an empty result
/// raises the first failure (or NoMarkerFound when nothing was detected).
inline SmallMarkersEstimate estimate_small_markers(const ImageGray& img, MarkerKind kind,
                                                   int periods_across, int border_thickness = 1) {
    detail::StageClock total;
    SmallMarkersEstimate out;

    detail::StageClock clock;
    std::vector<MarkerRegion> regions = kind == MarkerKind::HpCode
                                            ? group_markers(detect_finder_patterns(img))
                                            : detect_quadrilateral(img);
    out.timings.peaks_ms = clock.lap(); // coarse detection stage
    if (regions.empty()) raise(ErrorCode::NoMarkerFound, "no marker regions detected");

    std::optional<Error> first_failure;
    for (const MarkerRegion& region : regions) {
        try {
            SmallMarkerEstimate est =
                estimate_small_marker(img, region, periods_across, border_thickness);
            MarkerRegion with_id = region;
            with_id.marker_id = est.marker_id;
            out.regions.push_back(with_id);
            out.markers.push_back(est);
        } catch (const Error& e) {
            if (!first_failure) first_failure = e;
        }
    }
    if (out.markers.empty()) {
        if (first_failure) throw *first_failure;
        raise(ErrorCode::NoMarkerFound, "no marker could be estimated");
    }
    out.timings.total_ms = total.lap();
    return out;
}

/// Pose record of one small marker in physical units, renderer convention.
inline Pose2D small_marker_pose(const SmallMarkerEstimate& est, const PhaseResult* phase,
                                double period) {
    Pose2D p;
    p.x = est.tx * period;
    p.y = est.ty * period;
    p.theta = est.theta;
    if (phase) fill_uncertainty(p, *phase, period);
    return p;
}

} // namespace phasemark
