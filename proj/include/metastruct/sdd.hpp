#pragma once

// Spatial density distributions of label images.
//
// The density of class m at pixel x is estimated with a uniform kernel: count the class-m
// pixels inside the (2h+1)×(2h+1) window centred at x. Pixels of one semantic class share a
// density level, so clustering density vectors recovers the number of semantic classes a
// noisy label still carries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "metastruct/image.hpp"
#include "metastruct/integral.hpp"
#include "metastruct/label_model.hpp"
#include "metastruct/morphology.hpp"

namespace metastruct {

enum class Normalization {
  LocalFraction,  // count / clipped window area; channels sum to 1
  GlobalCount,    // count / (2·N·h), N = number of class-m pixels in the image
};

struct DensityChannel {
  Grid<double> values;
  int bandwidth = 0;
  int label = 0;
  Normalization normalization = Normalization::LocalFraction;
};

inline void require_bandwidth(int h) {
  if (h < 1) throw Error("bandwidth must be >= 1, got " + std::to_string(h));
}

inline DensityChannel density_map(const LabelImage& y, int m, int h,
                                  Normalization normalization = Normalization::LocalFraction) {
  require_bandwidth(h);
  if (m < 0 || m >= y.num_classes()) throw Error("density_map: class out of range");
  IntegralImage<std::int64_t> sums(y.pixels(), [m](std::uint8_t v) { return v == m ? 1 : 0; });
  DensityChannel d{Grid<double>(y.width(), y.height()), h, m, normalization};
  const double global_scale = [&] {
    const auto n = y.count(m);
    return n == 0 ? 0.0 : 1.0 / (2.0 * static_cast<double>(n) * h);
  }();
  for (int r = 0; r < y.height(); ++r) {
    for (int c = 0; c < y.width(); ++c) {
      const auto count = static_cast<double>(sums.window(c, r, h));
      d.values(c, r) = normalization == Normalization::LocalFraction
                           ? count / static_cast<double>(clipped_area(y.width(), y.height(), c, r, h))
                           : count * global_scale;
    }
  }
  return d;
}

inline std::vector<DensityChannel> density_maps(const LabelImage& y, int h,
                                                Normalization n = Normalization::LocalFraction) {
  std::vector<DensityChannel> out;
  for (int m = 0; m < y.num_classes(); ++m) out.push_back(density_map(y, m, h, n));
  return out;
}

/// One row of a density channel.
inline std::vector<double> density_curve(const DensityChannel& d, int row) {
  if (row < 0 || row >= d.values.height()) {
    throw Error("density_curve: row " + std::to_string(row) + " outside [0, " +
                std::to_string(d.values.height()) + ")");
  }
  auto r = d.values.row(row);
  return {r.begin(), r.end()};
}

/// Columns along `row` where the label changes between x-1 and x: the outline markers drawn
/// on density curves.
inline std::vector<int> outline_crossings(const LabelImage& clean, int row) {
  if (row < 0 || row >= clean.height()) throw Error("outline_crossings: row out of range");
  std::vector<int> xs;
  for (int x = 1; x < clean.width(); ++x)
    if (clean(x, row) != clean(x - 1, row)) xs.push_back(x);
  return xs;
}

/// Expected density of observed class m deep inside true class i. In local-fraction units
/// this is Q(m, i); in global-count units it is (2h/N)·Q(m, i).
inline double predicted_interior_density(const Ntm& q, int observed, int truth,
                                         Normalization normalization = Normalization::LocalFraction,
                                         int h = 0, std::size_t class_count = 0) {
  require_valid(q);
  if (observed < 0 || truth < 0 || observed >= q.size() || truth >= q.size()) {
    throw Error("predicted_interior_density: class out of range");
  }
  if (normalization == Normalization::LocalFraction) return q(observed, truth);
  if (h < 1 || class_count == 0) {
    throw Error("global-count normalization needs a bandwidth and a non-zero class count");
  }
  return 2.0 * h / static_cast<double>(class_count) * q(observed, truth);
}

/// Binomial standard deviation of a window fraction with success probability p.
inline double window_sigma(double p, int h) {
  const double area = static_cast<double>(2 * h + 1) * (2 * h + 1);
  return std::sqrt(std::max(p * (1.0 - p), 0.0) / area);
}

// ---------------------------------------------------------------------------------------
// Meta-structure clustering

struct MetaStructureCluster {
  std::vector<double> level;  // mean density per class channel
  double share = 0.0;         // fraction of analysed pixels
};

struct MetaStructureSummary {
  int num_classes = 0;  // D
  int bandwidth = 0;
  std::vector<MetaStructureCluster> clusters;
};

struct MetaStructureMap {
  MetaStructureSummary summary;
  Grid<int> labels;  // cluster index per pixel, -1 where unassigned or impure
};

inline constexpr double kModeMergeSigmas = 3.0;
inline constexpr double kClusterFloor = 0.01;
inline constexpr double kValleyRatio = 0.75;

namespace detail {

/// Mode positions (window counts) of one channel's count histogram.
inline std::vector<int> histogram_modes(const std::vector<std::int64_t>& hist, int area,
                                        std::int64_t total) {
  const int n = static_cast<int>(hist.size());
  auto sigma_counts = [area](double c) {
    const double p = c / area;
    return std::max(1.0, std::sqrt(area * p * (1.0 - p)));
  };
  // Each count spreads with a Gaussian of half its binomial width.
  std::vector<double> smooth(n, 0.0);
  for (int c = 0; c < n; ++c) {
    if (hist[c] == 0) continue;
    const double s = 0.5 * sigma_counts(c);
    const int reach = static_cast<int>(std::ceil(4.0 * s));
    double norm = 0.0;
    for (int k = std::max(0, c - reach); k <= std::min(n - 1, c + reach); ++k)
      norm += std::exp(-0.5 * (k - c) * (k - c) / (s * s));
    for (int k = std::max(0, c - reach); k <= std::min(n - 1, c + reach); ++k)
      smooth[k] += static_cast<double>(hist[c]) * std::exp(-0.5 * (k - c) * (k - c) / (s * s)) / norm;
  }

  std::vector<int> maxima;
  for (int c = 0; c < n; ++c) {
    const double left = c > 0 ? smooth[c - 1] : -1.0;
    const double right = c + 1 < n ? smooth[c + 1] : -1.0;
    if (smooth[c] > left && smooth[c] >= right && smooth[c] > 0.0) maxima.push_back(c);
  }
  std::stable_sort(maxima.begin(), maxima.end(),
                   [&](int a, int b) { return smooth[a] > smooth[b]; });

  const double floor = kClusterFloor * static_cast<double>(total);
  std::vector<int> modes;
  for (int peak : maxima) {
    bool merged = false;
    for (int mode : modes) {
      const double tol = kModeMergeSigmas * sigma_counts(0.5 * (peak + mode));
      if (std::abs(peak - mode) <= tol) {
        merged = true;
        break;
      }
    }
    if (merged) continue;
    // Prominence: the valley towards the nearest higher peak on each side.
    double col = 0.0;
    bool bounded = false;
    for (int dir : {-1, 1}) {
      double lowest = smooth[peak];
      for (int k = peak + dir; k >= 0 && k < n; k += dir) {
        lowest = std::min(lowest, smooth[k]);
        if (smooth[k] > smooth[peak]) {
          col = std::max(col, lowest);
          bounded = true;
          break;
        }
      }
    }
    if (bounded && col > kValleyRatio * smooth[peak]) continue;
    const double tol = kModeMergeSigmas * sigma_counts(peak);
    std::int64_t support = 0;
    for (int k = std::max(0, static_cast<int>(std::floor(peak - tol)));
         k <= std::min(n - 1, static_cast<int>(std::ceil(peak + tol))); ++k)
      if (std::abs(k - peak) <= tol) support += hist[k];
    if (static_cast<double>(support) < floor) continue;
    modes.push_back(peak);
  }
  std::sort(modes.begin(), modes.end());
  return modes;
}

}  // namespace detail

/// Clusters pixels by their density vectors.
///
/// Only pixels whose full window lies inside the image are analysed. For each class channel,
/// modes of the window-count histogram are found; peaks closer than 3σ (σ the binomial
/// width at that level, A = (2h+1)²) merge, and a mode must hold 1% of pixels within 3σ.
/// Each pixel takes the nearest mode within 3σ per channel; the tuple of channel modes is
/// its candidate cluster. A pixel counts toward its cluster only if no pixel within
/// Chebyshev distance h belongs to a different cluster, which discards the mixed windows
/// along class boundaries. D is the number of clusters holding at least 1% of the
/// analysed pixels.
inline MetaStructureMap cluster_meta_structures(const LabelImage& y, int h) {
  require_bandwidth(h);
  if (y.width() < 2 * h + 1 || y.height() < 2 * h + 1) {
    throw Error("count_semantic_classes: image " + std::to_string(y.width()) + "x" +
                std::to_string(y.height()) + " is smaller than the window " +
                std::to_string(2 * h + 1));
  }
  const int area = (2 * h + 1) * (2 * h + 1);
  const int w = y.width(), ht = y.height();
  const int x0 = h, x1 = w - 1 - h, y0 = h, y1 = ht - 1 - h;
  const std::int64_t analysed = static_cast<std::int64_t>(x1 - x0 + 1) * (y1 - y0 + 1);
  const int m = y.num_classes();

  // Per-channel mode index for every analysed pixel, -1 when none is within 3σ.
  std::vector<Grid<int>> counts;
  std::vector<std::vector<int>> channel_modes(m);
  std::vector<Grid<int>> mode_index;
  for (int ch = 0; ch < m; ++ch) {
    IntegralImage<std::int64_t> sums(y.pixels(), [ch](std::uint8_t v) { return v == ch ? 1 : 0; });
    Grid<int> cnt(w, ht, 0);
    std::vector<std::int64_t> hist(area + 1, 0);
    for (int r = y0; r <= y1; ++r)
      for (int c = x0; c <= x1; ++c) {
        cnt(c, r) = static_cast<int>(sums.window(c, r, h));
        ++hist[cnt(c, r)];
      }
    channel_modes[ch] = detail::histogram_modes(hist, area, analysed);
    Grid<int> idx(w, ht, -1);
    const auto& modes = channel_modes[ch];
    for (int r = y0; r <= y1; ++r)
      for (int c = x0; c <= x1; ++c) {
        double best = kModeMergeSigmas;
        for (int k = 0; k < static_cast<int>(modes.size()); ++k) {
          const double p = static_cast<double>(modes[k]) / area;
          const double sigma = std::max(1.0, std::sqrt(area * p * (1.0 - p)));
          const double z = std::abs(cnt(c, r) - modes[k]) / sigma;
          if (z <= best) {
            best = z;
            idx(c, r) = k;
          }
        }
      }
    counts.push_back(std::move(cnt));
    mode_index.push_back(std::move(idx));
  }

  // Candidate cluster ids from the per-channel mode tuples.
  std::map<std::vector<int>, int> tuple_ids;
  std::vector<std::vector<int>> tuples;
  Grid<int> candidate(w, ht, -1);
  for (int r = y0; r <= y1; ++r)
    for (int c = x0; c <= x1; ++c) {
      std::vector<int> key(m);
      bool assigned = true;
      for (int ch = 0; ch < m && assigned; ++ch) {
        key[ch] = mode_index[ch](c, r);
        assigned = key[ch] >= 0;
      }
      if (!assigned) continue;
      auto [it, inserted] = tuple_ids.emplace(key, static_cast<int>(tuples.size()));
      if (inserted) tuples.push_back(key);
      candidate(c, r) = it->second;
    }

  // Purity: no other cluster within distance h. Per-cluster window counts via integral
  // images of "assigned to some cluster" and "assigned to this cluster".
  IntegralImage<std::int64_t> assigned_sums(candidate, [](int v) { return v >= 0 ? 1 : 0; });
  std::vector<std::int64_t> pure_count(tuples.size(), 0);
  std::vector<std::vector<double>> level_sum(tuples.size(), std::vector<double>(m, 0.0));
  Grid<int> pure(w, ht, -1);
  for (std::size_t t = 0; t < tuples.size(); ++t) {
    const int id = static_cast<int>(t);
    IntegralImage<std::int64_t> own(candidate, [id](int v) { return v == id ? 1 : 0; });
    for (int r = y0; r <= y1; ++r)
      for (int c = x0; c <= x1; ++c) {
        if (candidate(c, r) != id) continue;
        if (own.window(c, r, h) != assigned_sums.window(c, r, h)) continue;
        pure(c, r) = id;
        ++pure_count[t];
        for (int ch = 0; ch < m; ++ch)
          level_sum[t][ch] += static_cast<double>(counts[ch](c, r)) / area;
      }
  }

  MetaStructureMap out{{0, h, {}}, Grid<int>(w, ht, -1)};
  std::vector<int> remap(tuples.size(), -1);
  for (std::size_t t = 0; t < tuples.size(); ++t) {
    if (static_cast<double>(pure_count[t]) < kClusterFloor * static_cast<double>(analysed)) continue;
    remap[t] = static_cast<int>(out.summary.clusters.size());
    MetaStructureCluster cluster;
    for (int ch = 0; ch < m; ++ch)
      cluster.level.push_back(level_sum[t][ch] / static_cast<double>(pure_count[t]));
    cluster.share = static_cast<double>(pure_count[t]) / static_cast<double>(analysed);
    out.summary.clusters.push_back(std::move(cluster));
  }
  out.summary.num_classes = static_cast<int>(out.summary.clusters.size());
  for (std::size_t i = 0; i < pure.size(); ++i)
    if (pure[i] >= 0) out.labels[i] = remap[pure[i]];
  return out;
}

inline MetaStructureSummary count_semantic_classes(const LabelImage& y_star, int h) {
  return cluster_meta_structures(y_star, h).summary;
}

// ---------------------------------------------------------------------------------------
// Empirical checks of the density model

struct InteriorMean {
  double mean = 0.0;
  std::size_t pixels = 0;
};

/// Mean local-fraction density of observed class m over pixels of true class `truth` lying
/// more than h from any true class boundary.
inline InteriorMean interior_mean_density(const LabelImage& clean, const LabelImage& observed,
                                          int m, int truth, int h) {
  require_same_shape(clean, observed, "interior_mean_density");
  const auto density = density_map(observed, m, h);
  const auto interior = interior_mask(clean, h);
  InteriorMean out;
  double sum = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    if (clean[i] == truth && interior[i]) {
      sum += density.values[i];
      ++out.pixels;
    }
  }
  if (out.pixels > 0) out.mean = sum / static_cast<double>(out.pixels);
  return out;
}

struct BoundaryDeviation {
  std::size_t clustered_pixels = 0;   // pixels assigned to a cluster in the noisy map
  std::size_t deviating_pixels = 0;   // assigned to a cluster of another true class
  std::size_t outside_band = 0;       // deviating pixels farther than 2h from a boundary
};

/// Compares the cluster map of a noisy label with the clean classes. Each noisy cluster is
/// identified with the true class holding most of its pixels; a pixel deviates when its
/// cluster stands for a class other than its own.
inline BoundaryDeviation cluster_boundary_deviation(const LabelImage& clean,
                                                    const LabelImage& noisy, int h) {
  require_same_shape(clean, noisy, "cluster_boundary_deviation");
  const auto clusters = cluster_meta_structures(noisy, h);
  const int k = clusters.summary.num_classes;
  std::vector<std::vector<std::size_t>> votes(k, std::vector<std::size_t>(clean.num_classes(), 0));
  for (std::size_t i = 0; i < clean.size(); ++i)
    if (clusters.labels[i] >= 0) ++votes[clusters.labels[i]][clean[i]];
  std::vector<int> identity(k, 0);
  for (int c = 0; c < k; ++c)
    identity[c] = static_cast<int>(std::max_element(votes[c].begin(), votes[c].end()) - votes[c].begin());

  const auto band_free = interior_mask(clean, 2 * h);
  BoundaryDeviation out;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    if (clusters.labels[i] < 0) continue;
    ++out.clustered_pixels;
    if (identity[clusters.labels[i]] != clean[i]) {
      ++out.deviating_pixels;
      if (band_free[i]) ++out.outside_band;
    }
  }
  return out;
}

/// Pixels where any class channel of the two density maps differs by more than 3σ, with σ
/// the binomial window width at the mean of the two values. Exact zero differences never
/// count.
inline std::size_t density_disagreement_area(const LabelImage& a, const LabelImage& b, int h) {
  require_same_shape(a, b, "density_disagreement_area");
  if (a.num_classes() != b.num_classes()) throw Error("density_disagreement_area: class mismatch");
  std::vector<std::uint8_t> differs(a.size(), 0);
  for (int m = 0; m < a.num_classes(); ++m) {
    const auto da = density_map(a, m, h), db = density_map(b, m, h);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double diff = std::abs(da.values[i] - db.values[i]);
      const double sigma = window_sigma(0.5 * (da.values[i] + db.values[i]), h);
      if (diff > 1e-12 && diff > kModeMergeSigmas * sigma) differs[i] = 1;
    }
  }
  return static_cast<std::size_t>(std::count(differs.begin(), differs.end(), 1));
}

}  // namespace metastruct
