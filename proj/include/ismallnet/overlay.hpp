#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ismallnet/plane.hpp"
#include "ismallnet/png_io.hpp"

namespace ismallnet {

enum class Outcome { detected, false_alarm, missed };

using Rgb = std::array<std::uint8_t, 3>;
inline constexpr Rgb kDetectedColor{255, 0, 0};
inline constexpr Rgb kFalseAlarmColor{255, 255, 0};
inline constexpr Rgb kMissedColor{0, 255, 0};

Rgb outcome_color(Outcome outcome);
const char* to_string(Outcome outcome);

/// One 8-connected component of pred | gt with its category and bounding circle.
struct AnnotatedRegion {
  Outcome outcome;
  double center_row;
  double center_col;
  double radius;
  int pixels;
};

/// A region overlapping both masks (>= 1 shared pixel) is detected; otherwise a
/// region holding prediction pixels is a false alarm and one holding only
/// ground truth is missed.
std::vector<AnnotatedRegion> classify_regions(const BinaryMask& pred, const BinaryMask& gt);

/// Grayscale background (black when `background` is null), predicted pixels in
/// white, one dotted circle per region in its category colour.
Rgb8 render_overlay(const GrayImage* background, const BinaryMask& pred, const std::vector<AnnotatedRegion>& regions);

}  // namespace ismallnet
