#pragma once

// Internal parameter scales. Fits run on O(1) parameters; these factors map
// them back to SI.

#include <Eigen/Core>

namespace casimir::detail {

inline constexpr double kOffsetScale = 1.0;      // Hz^2
inline constexpr double kD0Scale = 1e-7;         // m
inline constexpr double kCelScale = 1e-13;       // Hz^2 m^3 / V^2
inline constexpr double kV0Scale = 1e-3;         // V
inline constexpr double kCcasScale = 1e-28;      // Hz^2 m^5
inline constexpr double kRateScale = 1e-3;       // Hz^2 / s per unit (Hz^2 / ks)
inline constexpr double kExcursionSqScale = 1e-14;  // m^2, (100 nm)^2

inline Eigen::Vector4d calibration_scales() {
  return {kOffsetScale, kD0Scale, kCelScale, kV0Scale};
}

}  // namespace casimir::detail
