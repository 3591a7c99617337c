#pragma once

// Published accuracy tables (blur sigma 0..6) and the summary percentages quoted with them.

#include <array>
#include <string_view>

namespace testsupport {

struct ReportedRow {
  std::string_view name;
  std::array<double, 7> acc;
  double avg;
};

// face set (visible / infrared), then scene set (visible / near infrared);
// each pair is baseline then generative.
inline constexpr std::array<ReportedRow, 8> kReportedRows{{
    {"face-visible-baseline", {0.9923, 0.7538, 0.4384, 0.3230, 0.1461, 0.1000, 0.0770}, 0.4043},
    {"face-visible-generative", {0.9538, 0.9461, 0.9000, 0.8692, 0.7692, 0.6846, 0.6461}, 0.8241},
    {"face-infrared-baseline", {0.9769, 0.7923, 0.4769, 0.1076, 0.0461, 0.0076, 0.0076}, 0.3450},
    {"face-infrared-generative", {0.9000, 0.8777, 0.8077, 0.7538, 0.6538, 0.5077, 0.4692}, 0.7098},
    {"scene-visible-baseline", {0.9444, 0.8466, 0.7644, 0.6177, 0.4622, 0.3511, 0.2911}, 0.6110},
    {"scene-visible-generative", {0.9333, 0.8555, 0.8511, 0.8555, 0.8333, 0.8355, 0.8200}, 0.8548},
    {"scene-nir-baseline", {0.7629, 0.6733, 0.5911, 0.4000, 0.3088, 0.2488, 0.2200}, 0.4578},
    {"scene-nir-generative", {0.7518, 0.7200, 0.7177, 0.6977, 0.6622, 0.6377, 0.6222}, 0.6870},
}};

// per baseline/generative pair, in the order above
inline constexpr std::array<double, 4> kReportedImprovement{103, 105, 40, 50};
inline constexpr std::array<double, 4> kReportedDrop{59, 64, 35, 40};

inline constexpr double kAverageTolerance = 0.0005;
inline constexpr double kPercentTolerance = 1.0;

}  // namespace testsupport
