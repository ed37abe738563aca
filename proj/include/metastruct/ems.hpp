#pragma once

// Extraction of meta-structures: skeletonize a coarse mask, jitter every skeleton pixel
// within a Chebyshev radius r, then keep each resulting pixel with probability p_sample.

#include <algorithm>
#include <cstdint>

#include "metastruct/image.hpp"
#include "metastruct/morphology.hpp"
#include "metastruct/rng.hpp"

namespace metastruct {

struct EmsParams {
  int radius = 1;
  double p_sample = 0.1;
  Seed seed{};
};

inline void validate(const EmsParams& params) {
  if (params.radius < 0) throw Error("EMS radius must be >= 0");
  if (!(params.p_sample > 0.0 && params.p_sample <= 1.0)) {
    throw Error("EMS p_sample must be in (0, 1]");
  }
}

/// Intermediate stages, for inspection and tests.
struct EmsTrace {
  LabelImage skeleton;
  LabelImage shifted;  // de-duplicated
  LabelImage output;
};

inline EmsTrace ems_trace(const LabelImage& s_tilde, const EmsParams& params) {
  validate(params);
  require_binary(s_tilde, "ems_refine");
  const int w = s_tilde.width(), h = s_tilde.height();
  EmsTrace t{skeletonize(s_tilde), LabelImage(w, h, 2), LabelImage(w, h, 2)};
  Rng rng(params.seed);

  // Offsets are drawn uniformly over the (2r+1)² square and clamped to the image.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (t.skeleton(x, y) == 0) continue;
      const int dx = rng.uniform_int(-params.radius, params.radius);
      const int dy = rng.uniform_int(-params.radius, params.radius);
      t.shifted.set(std::clamp(x + dx, 0, w - 1), std::clamp(y + dy, 0, h - 1), 1);
    }

  for (std::size_t i = 0; i < t.shifted.size(); ++i)
    if (t.shifted[i] != 0 && rng.uniform() < params.p_sample) t.output.set(i, 1);
  return t;
}

inline LabelImage ems_refine(const LabelImage& s_tilde, const EmsParams& params) {
  return ems_trace(s_tilde, params).output;
}

}  // namespace metastruct
