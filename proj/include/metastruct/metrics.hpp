#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "metastruct/image.hpp"

namespace metastruct {

struct MetricsReport {
  double dice = 0.0;
  double iou = 0.0;
  double accuracy = 0.0;
  std::optional<double> auc;  // absent when the reference holds a single class
};

/// Dice, IoU and pixel accuracy of a binary prediction. Two empty masks score 1.
inline MetricsReport overlap_metrics(const LabelImage& pred, const LabelImage& ref) {
  require_same_shape(pred, ref, "overlap_metrics");
  require_binary(pred, "overlap_metrics");
  require_binary(ref, "overlap_metrics");
  std::size_t inter = 0, p = 0, r = 0, match = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const bool a = pred[i] != 0, b = ref[i] != 0;
    inter += a && b;
    p += a;
    r += b;
    match += a == b;
  }
  MetricsReport m;
  const std::size_t uni = p + r - inter;
  m.dice = (p + r) == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(p + r);
  m.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  m.accuracy = static_cast<double>(match) / static_cast<double>(ref.size());
  return m;
}

/// Area under the ROC curve as the Mann–Whitney statistic: the probability that a random
/// foreground pixel scores above a random background pixel, ties counting one half.
inline std::optional<double> auc(const ProbImage& p, const LabelImage& ref) {
  require_same_shape(p, ref, "auc");
  require_binary(ref, "auc");
  std::vector<std::size_t> order(ref.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && p[order[j]] == p[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (ref[order[k]] != 0) {
        positive_rank_sum += mid_rank;
        ++positives;
      }
    i = j;
  }
  const std::size_t negatives = ref.size() - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double np = static_cast<double>(positives), nn = static_cast<double>(negatives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

inline MetricsReport evaluate(const LabelImage& pred, const ProbImage& prob, const LabelImage& ref) {
  MetricsReport m = overlap_metrics(pred, ref);
  m.auc = auc(prob, ref);
  return m;
}

/// clean − noisy per pixel: +1 where the noisy-trained result misses foreground, −1 where it
/// adds foreground.
inline Grid<std::int8_t> diff_image(const LabelImage& pred_noisy, const LabelImage& pred_clean) {
  require_same_shape(pred_noisy, pred_clean, "diff_image");
  require_binary(pred_noisy, "diff_image");
  require_binary(pred_clean, "diff_image");
  Grid<std::int8_t> d(pred_clean.width(), pred_clean.height(), 0);
  for (std::size_t i = 0; i < d.size(); ++i)
    d[i] = static_cast<std::int8_t>(static_cast<int>(pred_clean[i]) - static_cast<int>(pred_noisy[i]));
  return d;
}

/// Mean of per-class IoU over the classes present in the reference.
inline double mean_iou(const LabelImage& pred, const LabelImage& ref) {
  require_same_shape(pred, ref, "mean_iou");
  if (pred.num_classes() != ref.num_classes()) throw Error("mean_iou: class count mismatch");
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < ref.num_classes(); ++c) {
    std::size_t inter = 0, uni = 0, in_ref = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const bool a = pred[i] == c, b = ref[i] == c;
      inter += a && b;
      uni += a || b;
      in_ref += b;
    }
    if (in_ref == 0) continue;
    total += static_cast<double>(inter) / static_cast<double>(uni);
    ++present;
  }
  return present == 0 ? 1.0 : total / present;
}

/// Otsu's threshold over a 256-bin histogram of [0,1] values. Returns the threshold t such
/// that pixels with value > t are foreground.
inline double otsu_threshold(const ProbImage& image) {
  constexpr int bins = 256;
  std::vector<double> hist(bins, 0.0);
  for (double v : image.values())
    ++hist[std::clamp(static_cast<int>(v * (bins - 1) + 0.5), 0, bins - 1)];
  const double total = static_cast<double>(image.size());
  double sum_all = 0.0;
  for (int i = 0; i < bins; ++i) sum_all += i * hist[i];
  double weight_bg = 0.0, sum_bg = 0.0, best = -1.0;
  int best_bin = 0;
  for (int t = 0; t < bins; ++t) {
    weight_bg += hist[t];
    if (weight_bg == 0.0) continue;
    const double weight_fg = total - weight_bg;
    if (weight_fg == 0.0) break;
    sum_bg += t * hist[t];
    const double mean_bg = sum_bg / weight_bg;
    const double mean_fg = (sum_all - sum_bg) / weight_fg;
    const double between = weight_bg * weight_fg * (mean_bg - mean_fg) * (mean_bg - mean_fg);
    if (between > best) {
      best = between;
      best_bin = t;
    }
  }
  return (best_bin + 0.5) / (bins - 1);
}

inline LabelImage otsu_segment(const ProbImage& image) {
  const double t = otsu_threshold(image);
  LabelImage out(image.width(), image.height(), 2);
  for (std::size_t i = 0; i < image.size(); ++i)
    if (image[i] > t) out.set(i, 1);
  return out;
}

}  // namespace metastruct
