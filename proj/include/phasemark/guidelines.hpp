#pragma once

#include <optional>
#include <string>
#include <vector>

#include "phasemark/types.hpp"

namespace phasemark {

enum class GuidelineStatus { Pass, Warn, Fail };

inline const char* guideline_status_name(GuidelineStatus s) {
    switch (s) {
        case GuidelineStatus::Pass: return "pass";
        case GuidelineStatus::Warn: return "warn";
        case GuidelineStatus::Fail: return "fail";
    }
    return "?";
}

struct GuidelineCheck {
    std::string name;
    GuidelineStatus status = GuidelineStatus::Pass;
    std::string message;
};

struct GuidelineToggles {
    bool pixels_per_period = true;
    bool marker_periods = true;
    bool megarena_visibility = true;
};

/// Design-rule diagnostics. The apparent period should span 7 to 15
/// pixels; small markers want at least 17 periods across (20 to 30 is the
/// comfortable band); an n-bit encoded pattern needs 3*(n+1) visible
/// periods to decode at all.
inline std::vector<GuidelineCheck> guideline_report(
    double pixels_per_period, std::optional<int> marker_periods_across,
    std::optional<std::pair<int, int>> megarena_visible_and_n,
    const GuidelineToggles& toggles = {}) {
    std::vector<GuidelineCheck> out;
    if (toggles.pixels_per_period) {
        GuidelineCheck c{"pixels_per_period", GuidelineStatus::Pass, ""};
        char buf[128];
        if (pixels_per_period < 7) {
            c.status = GuidelineStatus::Warn;
            std::snprintf(buf, sizeof buf, "%.2f px/period is below 7 px/period",
                          pixels_per_period);
        } else if (pixels_per_period > 15) {
            c.status = GuidelineStatus::Warn;
            std::snprintf(buf, sizeof buf, "%.2f px/period is above 15 px/period",
                          pixels_per_period);
        } else {
            std::snprintf(buf, sizeof buf, "%.2f px/period is within [7, 15]", pixels_per_period);
        }
        c.message = buf;
        out.push_back(c);
    }
    if (toggles.marker_periods && marker_periods_across) {
        const int p = *marker_periods_across;
        GuidelineCheck c{"marker_periods", GuidelineStatus::Pass, ""};
        if (p < 9) {
            c.status = GuidelineStatus::Fail;
            c.message = std::to_string(p) + " periods is below the hard minimum of 9";
        } else if (p < 17) {
            c.status = GuidelineStatus::Warn;
            c.message = std::to_string(p) + " periods is below the recommended 17";
        } else if (p <= 30) {
            c.message = std::to_string(p) + " periods is a good choice (20 to 30 is ideal)";
        } else {
            c.message = std::to_string(p) + " periods, above the typical 20 to 30";
        }
        out.push_back(c);
    }
    if (toggles.megarena_visibility && megarena_visible_and_n) {
        const auto [visible, n] = *megarena_visible_and_n;
        const int need = 3 * (n + 1);
        GuidelineCheck c{"megarena_visibility", GuidelineStatus::Pass, ""};
        if (visible < need) {
            c.status = GuidelineStatus::Fail;
            c.message = std::to_string(visible) + " visible periods, but an " +
                        std::to_string(n) + "-bit code needs " + std::to_string(need);
        } else {
            c.message = std::to_string(visible) + " visible periods covers the required " +
                        std::to_string(need);
        }
        out.push_back(c);
    }
    return out;
}

} // namespace phasemark
