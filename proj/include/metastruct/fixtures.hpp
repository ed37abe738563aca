#pragma once

// Deterministic synthetic scenes: a circle inside a rectangle, three vertical stripes, and
// bright disks on a dark background with a matching intensity image.

#include <algorithm>
#include <cstdint>
#include <optional>

#include "metastruct/image.hpp"
#include "metastruct/rng.hpp"

namespace metastruct {

enum class FixtureKind { CircleInRectangle, Stripes3, Blobs };

struct FixtureSpec {
  FixtureKind kind = FixtureKind::CircleInRectangle;
  int size = 256;
  int circle_radius = 64;
  int num_blobs = 0;  // 0 picks 12 disks per 128×128 of area
  int min_blob_radius = 6;
  int max_blob_radius = 14;
  double foreground_mean = 0.7;
  double background_mean = 0.3;
  double intensity_stddev = 0.1;
  Seed seed{};
};

struct Fixture {
  LabelImage mask;
  std::optional<ProbImage> intensity;  // blobs only
};

inline LabelImage circle_in_rectangle(int size, int radius) {
  LabelImage y(size, size, 2);
  const std::int64_t cx = size / 2, cy = size / 2, r2 = static_cast<std::int64_t>(radius) * radius;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      if ((c - cx) * (c - cx) + (r - cy) * (r - cy) <= r2) y.set(c, r, 1);
  return y;
}

/// Classes 0, 1, 2 in equal vertical bands, left to right.
inline LabelImage stripes3(int size) {
  LabelImage y(size, size, 3);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) y.set(c, r, (3 * c) / size);
  return y;
}

inline Fixture blobs(const FixtureSpec& spec) {
  Rng rng(derive_seed(spec.seed, "fixture-blobs"));
  const int n = spec.size;
  LabelImage mask(n, n, 2);
  const int count = spec.num_blobs > 0 ? spec.num_blobs
                                       : std::max(1, static_cast<int>(12.0 * n * n / (128.0 * 128.0)));
  for (int b = 0; b < count; ++b) {
    const int radius = rng.uniform_int(spec.min_blob_radius, spec.max_blob_radius);
    const int cx = rng.uniform_int(radius, n - 1 - radius);
    const int cy = rng.uniform_int(radius, n - 1 - radius);
    for (int r = cy - radius; r <= cy + radius; ++r)
      for (int c = cx - radius; c <= cx + radius; ++c)
        if ((c - cx) * (c - cx) + (r - cy) * (r - cy) <= radius * radius) mask.set(c, r, 1);
  }
  ProbImage intensity(n, n);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double mean = mask[i] != 0 ? spec.foreground_mean : spec.background_mean;
    intensity[i] = std::clamp(rng.normal(mean, spec.intensity_stddev), 0.0, 1.0);
  }
  return {std::move(mask), std::move(intensity)};
}

inline Fixture gen_fixture(const FixtureSpec& spec) {
  if (spec.size < 64) throw Error("fixture size must be >= 64");
  switch (spec.kind) {
    case FixtureKind::CircleInRectangle:
      return {circle_in_rectangle(spec.size, spec.circle_radius), std::nullopt};
    case FixtureKind::Stripes3:
      return {stripes3(spec.size), std::nullopt};
    case FixtureKind::Blobs:
      return blobs(spec);
  }
  throw Error("unknown fixture kind");
}

}  // namespace metastruct
