#pragma once

// Iterative ground-truth training (iGTT): unsupervised binary segmentation that starts
// from all-background pseudo-labels and, every epoch, fits a predictor, thresholds its
// output at K evenly spaced levels, keeps the candidate with the lowest DMI loss, and
// refines it with EMS into the next epoch's pseudo-label.

#include <array>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metastruct/ems.hpp"
#include "metastruct/image.hpp"
#include "metastruct/integral.hpp"
#include "metastruct/losses.hpp"
#include "metastruct/metrics.hpp"
#include "metastruct/rng.hpp"

namespace metastruct {

// ---------------------------------------------------------------------------------------
// Threshold ladder and candidate selection

struct ThresholdLadder {
  std::vector<double> thresholds;
  std::vector<LabelImage> masks;  // masks[k](x) = 1 iff p(x) > thresholds[k]
  bool flat = false;
};

inline ThresholdLadder threshold_ladder(const ProbImage& p, int k) {
  if (k < 2) throw Error("threshold_ladder: K must be >= 2");
  const auto [lo_it, hi_it] = std::minmax_element(p.values().begin(), p.values().end());
  const double lo = *lo_it, hi = *hi_it;
  ThresholdLadder ladder;
  auto mask_above = [&p](double t) {
    LabelImage s(p.width(), p.height(), 2);
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] - t > 0.0) s.set(i, 1);
    return s;
  };
  if (!(hi > lo)) {
    ladder.flat = true;
    ladder.thresholds = {std::nextafter(lo, -std::numeric_limits<double>::infinity()), lo};
  } else {
    const double step = (hi - lo) / (k - 1);
    for (int i = 0; i < k; ++i) ladder.thresholds.push_back(i + 1 == k ? hi : lo + i * step);
  }
  for (double t : ladder.thresholds) ladder.masks.push_back(mask_above(t));
  return ladder;
}

struct Selection {
  std::size_t index = 0;
  std::vector<double> losses;
};

/// Candidate with the lowest DMI loss; the first one wins ties.
inline Selection select_candidate(const ProbImage& p, std::span<const LabelImage> candidates) {
  if (candidates.empty()) throw Error("select_candidate: no candidates");
  Selection sel;
  for (const auto& s : candidates) sel.losses.push_back(dmi_loss(p, s));
  for (std::size_t k = 1; k < sel.losses.size(); ++k)
    if (sel.losses[k] < sel.losses[sel.index]) sel.index = k;
  return sel;
}

// ---------------------------------------------------------------------------------------
// Predictors

class Predictor {
 public:
  virtual ~Predictor() = default;

  /// One training pass over all images against their current pseudo-labels.
  virtual void fit_epoch(std::span<const ProbImage> images, std::span<const LabelImage> labels,
                         const LossWeights& loss) = 0;

  virtual ProbImage predict(const ProbImage& image) const = 0;
};

/// Per-pixel logistic regression on local intensity statistics: raw intensity, box means
/// at radii 1, 2 and 4, and the box standard deviation at radius 2. Trained by minibatch
/// SGD on the weighted DMI + soft-IoU objective.
class LogisticPredictor final : public Predictor {
 public:
  static constexpr int kFeatures = 5;

  struct Options {
    double learning_rate = 0.1;
    std::size_t batch_size = 256;
    double max_gradient_norm = 1.0;
    Seed seed{};
  };

  explicit LogisticPredictor(Options options) : options_(options) {
    if (!(options.learning_rate > 0.0)) throw Error("learning rate must be positive");
    if (options.batch_size < 2) throw Error("batch size must be >= 2");
    // Start out ranking brighter, locally brighter pixels higher.
    weights_ = {0.25, 0.25, 0.25, 0.25, 0.0};
  }

  using Features = std::vector<std::array<double, kFeatures>>;

  /// Features centred and scaled so intensities in [0,1] map to roughly [-2, 2].
  static Features features(const ProbImage& image) {
    IntegralImage<double> sum(image, [](double v) { return v; });
    IntegralImage<double> sq(image, [](double v) { return v * v; });
    Features f(image.size());
    const int w = image.width(), h = image.height();
    auto mean = [&](int x, int y, int r) {
      return sum.window(x, y, r) / static_cast<double>(clipped_area(w, h, x, y, r));
    };
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double m2 = mean(x, y, 2);
        const double var = sq.window(x, y, 2) / static_cast<double>(clipped_area(w, h, x, y, 2)) - m2 * m2;
        auto& v = f[static_cast<std::size_t>(y) * w + x];
        v[0] = 4.0 * (image(x, y) - 0.5);
        v[1] = 4.0 * (mean(x, y, 1) - 0.5);
        v[2] = 4.0 * (m2 - 0.5);
        v[3] = 4.0 * (mean(x, y, 4) - 0.5);
        v[4] = 4.0 * std::sqrt(std::max(var, 0.0));
      }
    return f;
  }

  void fit_epoch(std::span<const ProbImage> images, std::span<const LabelImage> labels,
                 const LossWeights& loss) override {
    if (images.size() != labels.size()) throw Error("fit_epoch: image/label count mismatch");
    for (std::size_t i = 0; i < images.size(); ++i) {
      require_same_shape(images[i], labels[i], "fit_epoch");
      const auto feats = features(images[i]);
      std::vector<std::size_t> order(feats.size());
      for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
      Rng rng(derive_seed(derive_seed(options_.seed, "sgd"), steps_++));
      rng.shuffle(order.begin(), order.end());
      for (std::size_t start = 0; start < order.size(); start += options_.batch_size) {
        const std::size_t end = std::min(order.size(), start + options_.batch_size);
        if (end - start < 2) break;
        step(feats, labels[i], std::span(order).subspan(start, end - start), loss);
      }
    }
  }

  ProbImage predict(const ProbImage& image) const override {
    const auto feats = features(image);
    ProbImage p(image.width(), image.height());
    for (std::size_t i = 0; i < feats.size(); ++i) p[i] = probability(feats[i]);
    return p;
  }

  const std::array<double, kFeatures>& weights() const noexcept { return weights_; }
  double bias() const noexcept { return bias_; }

 private:
  double probability(const std::array<double, kFeatures>& f) const {
    double z = bias_;
    for (int k = 0; k < kFeatures; ++k) z += weights_[k] * f[k];
    return 1.0 / (1.0 + std::exp(-z));
  }

  void step(const Features& feats, const LabelImage& labels, std::span<const std::size_t> batch,
            const LossWeights& loss) {
    std::vector<double> p(batch.size()), s(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) {
      p[k] = probability(feats[batch[k]]);
      s[k] = labels[batch[k]];
    }
    const auto objective = combined_loss(p, s, loss);
    std::array<double, kFeatures> gw{};
    double gb = 0.0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const double dz = objective.gradient[k] * p[k] * (1.0 - p[k]);
      gb += dz;
      for (int j = 0; j < kFeatures; ++j) gw[j] += dz * feats[batch[k]][j];
    }
    double norm = gb * gb;
    for (double g : gw) norm += g * g;
    norm = std::sqrt(norm);
    const double scale = norm > options_.max_gradient_norm ? options_.max_gradient_norm / norm : 1.0;
    bias_ -= options_.learning_rate * scale * gb;
    for (int j = 0; j < kFeatures; ++j) weights_[j] -= options_.learning_rate * scale * gw[j];
  }

  Options options_;
  std::array<double, kFeatures> weights_{};
  double bias_ = 0.0;
  std::uint64_t steps_ = 0;
};

// ---------------------------------------------------------------------------------------
// The iteration

enum class UpdateOrder {
  FitThenPredict,  // fit on the previous pseudo-labels, then predict with the new parameters
  PredictThenFit,  // predict with the current parameters, then fit (literal listing order)
};

struct IgttConfig {
  int k = 30;
  EmsParams ems{1, 0.1, Seed{}};
  int max_iters = 30;
  double learning_rate = 0.1;
  Seed seed{};
  bool use_ems = true;
  UpdateOrder order = UpdateOrder::FitThenPredict;
  LossWeights loss{};
};

inline void validate(const IgttConfig& c) {
  if (c.k < 2) throw Error("iGTT: K must be >= 2");
  if (c.max_iters < 1) throw Error("iGTT: max_iters must be >= 1");
  if (!(c.learning_rate > 0.0)) throw Error("iGTT: learning rate must be positive");
  validate(c.ems);
}

struct EpochRecord {
  int epoch = 0;                       // 1-based
  std::vector<LabelImage> s_tilde;     // selected candidate per image
  std::vector<LabelImage> y_star;      // pseudo-label for the next epoch
  std::vector<std::size_t> selected;   // ladder index of s_tilde
  std::vector<bool> flat;              // prediction was constant
  std::optional<MetricsReport> mean_metrics;
};

struct IgttResult {
  std::vector<LabelImage> final_masks;
  std::vector<ProbImage> final_probabilities;
  std::vector<EpochRecord> epochs;
};

/// The built-in predictor, seeded from the run seed.
inline std::unique_ptr<LogisticPredictor> make_reference_predictor(const IgttConfig& config) {
  LogisticPredictor::Options options;
  options.learning_rate = config.learning_rate;
  options.seed = derive_seed(config.seed, "predictor");
  return std::make_unique<LogisticPredictor>(options);
}

/// Seed used by EMS for one image in one epoch.
inline Seed ems_seed(Seed run, int epoch, std::size_t image) {
  return derive_seed(derive_seed(derive_seed(run, "ems"), static_cast<std::uint64_t>(epoch)), image);
}

inline IgttResult igtt_run(std::span<const ProbImage> images, const IgttConfig& config,
                           Predictor& predictor,
                           std::span<const LabelImage> references = {},
                           const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  validate(config);
  if (images.empty()) throw Error("iGTT: empty training set");
  if (!references.empty() && references.size() != images.size()) {
    throw Error("iGTT: reference count does not match image count");
  }
  for (std::size_t i = 0; i < references.size(); ++i)
    require_same_shape(images[i], references[i], "iGTT reference");

  std::vector<LabelImage> y_star;
  for (const auto& img : images) y_star.emplace_back(img.width(), img.height(), 2);

  IgttResult result;
  for (int epoch = 1; epoch <= config.max_iters; ++epoch) {
    std::vector<ProbImage> probs;
    try {
      if (config.order == UpdateOrder::FitThenPredict) predictor.fit_epoch(images, y_star, config.loss);
      for (const auto& img : images) probs.push_back(predictor.predict(img));
      if (config.order == UpdateOrder::PredictThenFit) predictor.fit_epoch(images, y_star, config.loss);
    } catch (const std::exception& e) {
      throw Error("iGTT: predictor failed at epoch " + std::to_string(epoch) + ": " + e.what());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto ladder = threshold_ladder(probs[i], config.k);
      LabelImage chosen = LabelImage(images[i].width(), images[i].height(), 2);
      std::size_t index = 0;
      if (!ladder.flat) {
        index = select_candidate(probs[i], ladder.masks).index;
        chosen = ladder.masks[index];
      }
      LabelImage next = chosen;
      if (config.use_ems) {
        EmsParams params = config.ems;
        params.seed = ems_seed(config.seed, epoch, i);
        next = ems_refine(chosen, params);
      }
      rec.s_tilde.push_back(std::move(chosen));
      rec.y_star.push_back(next);
      rec.selected.push_back(index);
      rec.flat.push_back(ladder.flat);
      y_star[i] = std::move(next);
    }
    if (!references.empty()) {
      MetricsReport mean{};
      double auc_sum = 0.0;
      int auc_count = 0;
      for (std::size_t i = 0; i < images.size(); ++i) {
        const auto m = evaluate(rec.s_tilde[i], probs[i], references[i]);
        mean.dice += m.dice;
        mean.iou += m.iou;
        mean.accuracy += m.accuracy;
        if (m.auc) {
          auc_sum += *m.auc;
          ++auc_count;
        }
      }
      const double n = static_cast<double>(images.size());
      mean.dice /= n;
      mean.iou /= n;
      mean.accuracy /= n;
      if (auc_count > 0) mean.auc = auc_sum / auc_count;
      rec.mean_metrics = mean;
    }
    if (on_epoch) on_epoch(rec);
    if (epoch == config.max_iters) {
      result.final_masks = rec.s_tilde;
      result.final_probabilities = std::move(probs);
    }
    result.epochs.push_back(std::move(rec));
  }
  return result;
}

}  // namespace metastruct
