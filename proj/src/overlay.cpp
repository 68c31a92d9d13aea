#include "ismallnet/overlay.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ismallnet {

Rgb outcome_color(Outcome outcome) {
  switch (outcome) {
    case Outcome::detected: return kDetectedColor;
    case Outcome::false_alarm: return kFalseAlarmColor;
    case Outcome::missed: break;
  }
  return kMissedColor;
}

const char* to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::detected: return "detected";
    case Outcome::false_alarm: return "false_alarm";
    case Outcome::missed: break;
  }
  return "missed";
}

std::vector<AnnotatedRegion> classify_regions(const BinaryMask& pred, const BinaryMask& gt) {
  if (!pred.same_shape(gt)) throw ShapeError("classify_regions: mask shapes differ");
  BinaryMask joint(pred.height(), pred.width());
  for (std::size_t i = 0; i < joint.size(); ++i) joint.values()[i] = pred.values()[i] || gt.values()[i];
  const Components comps = label_components(joint, true);

  struct Acc {
    int min_r = 1 << 30, max_r = -1, min_c = 1 << 30, max_c = -1, pixels = 0;
    bool has_pred = false, has_gt = false, overlap = false;
  };
  std::vector<Acc> acc(static_cast<std::size_t>(comps.count) + 1);
  for (int r = 0; r < joint.height(); ++r) {
    for (int c = 0; c < joint.width(); ++c) {
      const int id = comps.labels(r, c);
      if (!id) continue;
      auto& a = acc[id];
      a.min_r = std::min(a.min_r, r), a.max_r = std::max(a.max_r, r);
      a.min_c = std::min(a.min_c, c), a.max_c = std::max(a.max_c, c);
      ++a.pixels;
      a.has_pred |= pred(r, c) != 0;
      a.has_gt |= gt(r, c) != 0;
      a.overlap |= pred(r, c) && gt(r, c);
    }
  }
  std::vector<AnnotatedRegion> regions;
  for (int id = 1; id <= comps.count; ++id) {
    const auto& a = acc[id];
    const Outcome outcome = a.overlap ? Outcome::detected : a.has_pred ? Outcome::false_alarm : Outcome::missed;
    const double half_h = 0.5 * (a.max_r - a.min_r + 1);
    const double half_w = 0.5 * (a.max_c - a.min_c + 1);
    regions.push_back({outcome, 0.5 * (a.min_r + a.max_r), 0.5 * (a.min_c + a.max_c),
                       std::max(4.0, std::hypot(half_h, half_w) + 3.0), a.pixels});
  }
  return regions;
}

Rgb8 render_overlay(const GrayImage* background, const BinaryMask& pred, const std::vector<AnnotatedRegion>& regions) {
  Rgb8 out(pred.height(), pred.width(), Rgb{0, 0, 0});
  if (background) {
    if (!background->same_shape(pred)) throw ShapeError("render_overlay: background shape differs");
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto v = static_cast<std::uint8_t>(std::lround(std::clamp(background->values()[i], 0.0f, 1.0f) * 255.0f));
      out.values()[i] = {v, v, v};
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (pred.values()[i]) out.values()[i] = {255, 255, 255};
  }
  // Dotted circle: alternate 3-pixel arcs on and off.
  for (const auto& region : regions) {
    const Rgb color = outcome_color(region.outcome);
    const int samples = std::max(16, static_cast<int>(std::ceil(2.0 * std::numbers::pi * region.radius * 2.0)));
    for (int s = 0; s < samples; ++s) {
      const double angle = 2.0 * std::numbers::pi * s / samples;
      const double arc = angle * region.radius;
      if (static_cast<int>(arc / 3.0) % 2 != 0) continue;
      const int r = static_cast<int>(std::lround(region.center_row + region.radius * std::sin(angle)));
      const int c = static_cast<int>(std::lround(region.center_col + region.radius * std::cos(angle)));
      if (r >= 0 && r < out.height() && c >= 0 && c < out.width()) out(r, c) = color;
    }
  }
  return out;
}

}  // namespace ismallnet
