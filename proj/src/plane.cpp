#include "ismallnet/plane.hpp"

#include <algorithm>
#include <array>

namespace ismallnet {

Components label_components(const BinaryMask& mask, bool eight_connected) {
  Components out{Plane<int>(mask.height(), mask.width(), 0), 0};
  const int h = mask.height();
  const int w = mask.width();
  static constexpr std::array<std::array<int, 2>, 8> kOffsets{{
      {-1, 0}, {1, 0}, {0, -1}, {0, 1}, {-1, -1}, {-1, 1}, {1, -1}, {1, 1}}};
  const std::size_t neighbours = eight_connected ? 8 : 4;

  std::vector<std::array<int, 2>> stack;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!mask(r, c) || out.labels(r, c) != 0) continue;
      const int id = ++out.count;
      out.labels(r, c) = id;
      stack.push_back({r, c});
      while (!stack.empty()) {
        const auto [pr, pc] = stack.back();
        stack.pop_back();
        for (std::size_t k = 0; k < neighbours; ++k) {
          const int nr = pr + kOffsets[k][0];
          const int nc = pc + kOffsets[k][1];
          if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
          if (!mask(nr, nc) || out.labels(nr, nc) != 0) continue;
          out.labels(nr, nc) = id;
          stack.push_back({nr, nc});
        }
      }
    }
  }
  return out;
}

int count_foreground(const BinaryMask& mask) {
  return static_cast<int>(std::count_if(mask.values().begin(), mask.values().end(),
                                        [](std::uint8_t v) { return v != 0; }));
}

}  // namespace ismallnet
