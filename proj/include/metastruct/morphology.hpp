#pragma once

// Binary morphology on masks. Pixels outside the image are background.

#include <array>
#include <cstdint>
#include <vector>

#include "metastruct/image.hpp"
#include "metastruct/integral.hpp"

namespace metastruct {

/// Square (Chebyshev) ball of the given radius.
struct StructuringElement {
  int radius = 1;

  explicit StructuringElement(int r) : radius(r) {
    if (r < 1) throw Error("structuring element radius must be >= 1");
  }
};

namespace detail {

inline IntegralImage<std::int64_t> foreground_sums(const LabelImage& y) {
  return IntegralImage<std::int64_t>(y.pixels(), [](std::uint8_t v) { return v != 0 ? 1 : 0; });
}

}  // namespace detail

inline LabelImage dilate(const LabelImage& y, StructuringElement se) {
  require_binary(y, "dilate");
  const auto sums = detail::foreground_sums(y);
  LabelImage out(y.width(), y.height(), 2);
  for (int r = 0; r < y.height(); ++r)
    for (int c = 0; c < y.width(); ++c)
      if (sums.window(c, r, se.radius) > 0) out.set(c, r, 1);
  return out;
}

/// Outside-image pixels count as background, so foreground touching the border erodes.
inline LabelImage erode(const LabelImage& y, StructuringElement se) {
  require_binary(y, "erode");
  const auto sums = detail::foreground_sums(y);
  const std::int64_t full = static_cast<std::int64_t>(2 * se.radius + 1) * (2 * se.radius + 1);
  LabelImage out(y.width(), y.height(), 2);
  for (int r = 0; r < y.height(); ++r)
    for (int c = 0; c < y.width(); ++c)
      if (sums.window(c, r, se.radius) == full) out.set(c, r, 1);
  return out;
}

/// Number of 8-connected foreground components.
inline int count_components(const LabelImage& y) {
  require_binary(y, "count_components");
  const int w = y.width(), h = y.height();
  std::vector<std::uint8_t> seen(y.size(), 0);
  std::vector<int> stack;
  int components = 0;
  for (int start = 0; start < static_cast<int>(y.size()); ++start) {
    if (y[start] == 0 || seen[start]) continue;
    ++components;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const int idx = stack.back();
      stack.pop_back();
      const int cx = idx % w, cy = idx / w;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = cx + dx, ny = cy + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const int n = ny * w + nx;
          if (y[n] != 0 && !seen[n]) {
            seen[n] = 1;
            stack.push_back(n);
          }
        }
      }
    }
  }
  return components;
}

/// Zhang–Suen thinning. Candidates of each sub-iteration are collected in parallel, then
/// removed in raster order with their conditions re-checked against the updated image. The
/// re-check keeps every removal a simple point, so 2×2 blocks (which plain parallel
/// Zhang–Suen erases outright) survive and 8-connected component counts are preserved.
inline LabelImage skeletonize(const LabelImage& y) {
  require_binary(y, "skeletonize");
  const int w = y.width(), h = y.height();
  std::vector<std::uint8_t> img(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) img[i] = y[i] != 0 ? 1 : 0;

  auto px = [&](int x, int yy) -> int {
    if (x < 0 || yy < 0 || x >= w || yy >= h) return 0;
    return img[static_cast<std::size_t>(yy) * w + x];
  };
  // Neighbours P2..P9 clockwise from north.
  auto neighbours = [&](int x, int yy) {
    return std::array<int, 8>{px(x, yy - 1),     px(x + 1, yy - 1), px(x + 1, yy),
                              px(x + 1, yy + 1), px(x, yy + 1),     px(x - 1, yy + 1),
                              px(x - 1, yy),     px(x - 1, yy - 1)};
  };
  auto removable = [&](int x, int yy, int pass) {
    if (px(x, yy) == 0) return false;
    const auto p = neighbours(x, yy);
    int b = 0, a = 0;
    for (int k = 0; k < 8; ++k) {
      b += p[k];
      if (p[k] == 0 && p[(k + 1) % 8] == 1) ++a;
    }
    if (b < 2 || b > 6 || a != 1) return false;
    // p[0]=P2 north, p[2]=P4 east, p[4]=P6 south, p[6]=P8 west
    if (pass == 0) return p[0] * p[2] * p[4] == 0 && p[2] * p[4] * p[6] == 0;
    return p[0] * p[2] * p[6] == 0 && p[0] * p[4] * p[6] == 0;
  };

  std::vector<int> candidates;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      candidates.clear();
      for (int yy = 0; yy < h; ++yy)
        for (int x = 0; x < w; ++x)
          if (removable(x, yy, pass)) candidates.push_back(yy * w + x);
      for (int idx : candidates) {
        if (removable(idx % w, idx / w, pass)) {
          img[idx] = 0;
          changed = true;
        }
      }
    }
  }

  Grid<std::uint8_t> g(w, h);
  for (std::size_t i = 0; i < img.size(); ++i) g[i] = img[i];
  return LabelImage(std::move(g), 2);
}

/// Pixels whose clipped (2r+1)² window holds a single class: Chebyshev distance to the
/// nearest pixel of another class exceeds r. The image border is not a class boundary.
inline Grid<std::uint8_t> interior_mask(const LabelImage& y, int radius) {
  Grid<std::uint8_t> out(y.width(), y.height(), 0);
  for (int m = 0; m < y.num_classes(); ++m) {
    IntegralImage<std::int64_t> sums(y.pixels(),
                                     [m](std::uint8_t v) { return v == m ? 1 : 0; });
    for (int r = 0; r < y.height(); ++r)
      for (int c = 0; c < y.width(); ++c)
        if (y(c, r) == m &&
            sums.window(c, r, radius) == clipped_area(y.width(), y.height(), c, r, radius))
          out(c, r) = 1;
  }
  return out;
}

}  // namespace metastruct
