#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "metastruct/image.hpp"

namespace metastruct {

/// Summed-area table for O(1) window sums over a grid, with windows clipped to the image.
template <typename Acc>
class IntegralImage {
 public:
  template <typename T, typename Fn>
  IntegralImage(const Grid<T>& g, Fn&& value) : width_(g.width()), height_(g.height()) {
    table_.assign(static_cast<std::size_t>(width_ + 1) * (height_ + 1), Acc{});
    for (int y = 0; y < height_; ++y) {
      Acc running{};
      for (int x = 0; x < width_; ++x) {
        running += static_cast<Acc>(value(g(x, y)));
        at(x + 1, y + 1) = at(x + 1, y) + running;
      }
    }
  }

  /// Sum over [x0, x1] × [y0, y1] after clipping; empty when the clipped box is empty.
  Acc sum(int x0, int y0, int x1, int y1) const {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, width_ - 1);
    y1 = std::min(y1, height_ - 1);
    if (x0 > x1 || y0 > y1) return Acc{};
    return at(x1 + 1, y1 + 1) - at(x0, y1 + 1) - at(x1 + 1, y0) + at(x0, y0);
  }

  Acc window(int x, int y, int radius) const {
    return sum(x - radius, y - radius, x + radius, y + radius);
  }

 private:
  Acc& at(int x, int y) { return table_[static_cast<std::size_t>(y) * (width_ + 1) + x]; }
  const Acc& at(int x, int y) const {
    return table_[static_cast<std::size_t>(y) * (width_ + 1) + x];
  }

  int width_;
  int height_;
  std::vector<Acc> table_;
};

/// Number of in-image pixels in the (2r+1)² window centred at (x, y).
inline std::int64_t clipped_area(int width, int height, int x, int y, int radius) {
  const int x0 = std::max(x - radius, 0), x1 = std::min(x + radius, width - 1);
  const int y0 = std::max(y - radius, 0), y1 = std::min(y + radius, height - 1);
  return static_cast<std::int64_t>(x1 - x0 + 1) * (y1 - y0 + 1);
}

}  // namespace metastruct
