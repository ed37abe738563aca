#include "metastruct/igtt.hpp"

#include <gtest/gtest.h>

#include <algorithm>

#include "metastruct/fixtures.hpp"
#include "test_support.hpp"

namespace metastruct {
namespace {

TEST(Ladder, TwoLevels) {
  Rng rng(Seed{81});
  const auto p = testing::random_probabilities(16, 16, rng);
  const auto ladder = threshold_ladder(p, 2);
  const auto [lo, hi] = std::minmax_element(p.values().begin(), p.values().end());
  ASSERT_EQ(ladder.thresholds.size(), 2u);
  EXPECT_EQ(ladder.thresholds[0], *lo);
  EXPECT_EQ(ladder.thresholds[1], *hi);
  EXPECT_EQ(ladder.masks[0].count(1), p.size() - 1);
  EXPECT_EQ(ladder.masks[1].count(1), 0u);
  EXPECT_FALSE(ladder.flat);
}

TEST(Ladder, ThreeValues) {
  ProbImage p(3, 1);
  p[0] = 0.1;
  p[1] = 0.5;
  p[2] = 0.9;
  const auto ladder = threshold_ladder(p, 3);
  ASSERT_EQ(ladder.thresholds.size(), 3u);
  EXPECT_NEAR(ladder.thresholds[0], 0.1, 1e-15);
  EXPECT_NEAR(ladder.thresholds[1], 0.5, 1e-15);
  EXPECT_NEAR(ladder.thresholds[2], 0.9, 1e-15);
  EXPECT_EQ(ladder.masks[1].count(1), 1u);  // 0.5 itself ties and goes to background
}

TEST(Ladder, Nested) {
  Rng rng(Seed{82});
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = testing::random_probabilities(20, 20, rng);
    const auto ladder = threshold_ladder(p, 30);
    for (std::size_t k = 1; k < ladder.masks.size(); ++k)
      EXPECT_TRUE(is_subset(ladder.masks[k], ladder.masks[k - 1]));
  }
}

TEST(Ladder, FlatImage) {
  const auto ladder = threshold_ladder(ProbImage(8, 8, 0.3), 30);
  EXPECT_TRUE(ladder.flat);
  ASSERT_EQ(ladder.masks.size(), 2u);
  EXPECT_EQ(ladder.masks[0].count(1), 64u);
  EXPECT_EQ(ladder.masks[1].count(1), 0u);
  EXPECT_THROW(threshold_ladder(ProbImage(8, 8, 0.3), 1), Error);
}

TEST(Select, MatchesBruteForceArgmin) {
  Rng rng(Seed{83});
  for (int trial = 0; trial < 30; ++trial) {
    const auto p = testing::random_probabilities(16, 16, rng);
    const auto ladder = threshold_ladder(p, 10);
    const auto sel = select_candidate(p, ladder.masks);
    double best = 1e300;
    std::size_t arg = 0;
    for (std::size_t k = 0; k < ladder.masks.size(); ++k) {
      const double l = dmi_loss(p, ladder.masks[k]);
      if (l < best) best = l, arg = k;
    }
    EXPECT_EQ(sel.index, arg);
  }
}

TEST(Select, ConfidentBinarizationWins) {
  Rng rng(Seed{84});
  const auto truth = testing::random_shapes(32, 32, 3, rng);
  ProbImage p(32, 32);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = truth[i] ? 0.95 + 0.04 * rng.uniform() : 0.01 + 0.04 * rng.uniform();
  const auto ladder = threshold_ladder(p, 30);
  const auto sel = select_candidate(p, ladder.masks);
  EXPECT_EQ(ladder.masks[sel.index], truth);
}

TEST(Select, DegenerateCandidatesLose) {
  Rng rng(Seed{85});
  const auto p = testing::random_probabilities(16, 16, rng);
  std::vector<LabelImage> cands = {LabelImage(16, 16, 2, 1), LabelImage(16, 16, 2, 0),
                                   threshold_ladder(p, 3).masks[1]};
  EXPECT_EQ(select_candidate(p, cands).index, 2u);
}

TEST(Select, OrderIndependent) {
  Rng rng(Seed{86});
  const auto p = testing::random_probabilities(16, 16, rng);
  auto masks = threshold_ladder(p, 12).masks;
  const auto best = masks[select_candidate(p, masks).index];
  std::reverse(masks.begin(), masks.end());
  EXPECT_EQ(masks[select_candidate(p, masks).index], best);
}

/// Records what it was trained on and predicts a fixed map.
class RecordingPredictor final : public Predictor {
 public:
  void fit_epoch(std::span<const ProbImage>, std::span<const LabelImage> labels,
                 const LossWeights&) override {
    seen.emplace_back(labels.begin(), labels.end());
  }
  ProbImage predict(const ProbImage& image) const override { return image; }
  std::vector<std::vector<LabelImage>> seen;
};

class ThrowingPredictor final : public Predictor {
 public:
  void fit_epoch(std::span<const ProbImage>, std::span<const LabelImage>, const LossWeights&) override {
    if (++calls == 2) throw std::runtime_error("boom");
  }
  ProbImage predict(const ProbImage& image) const override { return image; }
  int calls = 0;
};

std::vector<ProbImage> small_images(int count) {
  std::vector<ProbImage> out;
  for (int i = 0; i < count; ++i) {
    FixtureSpec spec;
    spec.kind = FixtureKind::Blobs;
    spec.size = 64;
    spec.seed = Seed{static_cast<std::uint64_t>(i)};
    out.push_back(*gen_fixture(spec).intensity);
  }
  return out;
}

TEST(Igtt, SingleIterationFitsOnBlackLabels) {
  const auto images = small_images(2);
  RecordingPredictor pred;
  IgttConfig config;
  config.max_iters = 1;
  const auto result = igtt_run(images, config, pred);
  ASSERT_EQ(pred.seen.size(), 1u);
  for (const auto& y : pred.seen[0]) EXPECT_EQ(y.count(1), 0u);
  ASSERT_EQ(result.epochs.size(), 1u);
  const auto& rec = result.epochs[0];
  for (std::size_t i = 0; i < images.size(); ++i) {
    EmsParams params = config.ems;
    params.seed = ems_seed(config.seed, 1, i);
    EXPECT_EQ(rec.y_star[i], ems_refine(rec.s_tilde[i], params));
    EXPECT_EQ(result.final_masks[i], rec.s_tilde[i]);
  }
}

TEST(Igtt, EpochLabelsFeedNextFit) {
  const auto images = small_images(1);
  RecordingPredictor pred;
  IgttConfig config;
  config.max_iters = 3;
  const auto result = igtt_run(images, config, pred);
  ASSERT_EQ(pred.seen.size(), 3u);
  EXPECT_EQ(pred.seen[1][0], result.epochs[0].y_star[0]);
  EXPECT_EQ(pred.seen[2][0], result.epochs[1].y_star[0]);
}

TEST(Igtt, ReferenceRunInvariants) {
  const auto images = small_images(2);
  IgttConfig config;
  config.max_iters = 4;
  config.seed = Seed{3};
  auto pred = make_reference_predictor(config);
  std::vector<LabelImage> refs;
  for (int i = 0; i < 2; ++i) {
    FixtureSpec spec;
    spec.kind = FixtureKind::Blobs;
    spec.size = 64;
    spec.seed = Seed{static_cast<std::uint64_t>(i)};
    refs.push_back(gen_fixture(spec).mask);
  }
  int callbacks = 0;
  const auto result = igtt_run(images, config, *pred, refs, [&](const EpochRecord&) { ++callbacks; });
  EXPECT_EQ(callbacks, 4);
  for (const auto& rec : result.epochs) {
    ASSERT_TRUE(rec.mean_metrics.has_value());
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto skel = skeletonize(rec.s_tilde[i]);
      EXPECT_TRUE(is_subset(rec.y_star[i], dilate(skel, StructuringElement(config.ems.radius))));
    }
  }

  auto again = make_reference_predictor(config);
  const auto second = igtt_run(images, config, *again, refs);
  for (std::size_t e = 0; e < result.epochs.size(); ++e)
    EXPECT_EQ(result.epochs[e].y_star, second.epochs[e].y_star);
}

TEST(Igtt, SelectionMatchesOracleEveryEpoch) {
  const auto images = small_images(1);
  IgttConfig config;
  config.max_iters = 3;
  config.use_ems = false;
  auto pred = make_reference_predictor(config);
  std::vector<ProbImage> probs;
  class Tap final : public Predictor {
   public:
    Tap(Predictor& inner, std::vector<ProbImage>& out) : inner_(inner), out_(out) {}
    void fit_epoch(std::span<const ProbImage> i, std::span<const LabelImage> l, const LossWeights& w) override {
      inner_.fit_epoch(i, l, w);
    }
    ProbImage predict(const ProbImage& image) const override {
      out_.push_back(inner_.predict(image));
      return out_.back();
    }

   private:
    Predictor& inner_;
    std::vector<ProbImage>& out_;
  } tap(*pred, probs);
  const auto result = igtt_run(images, config, tap);
  ASSERT_EQ(probs.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    const auto ladder = threshold_ladder(probs[e], config.k);
    if (ladder.flat) continue;
    std::size_t arg = 0;
    for (std::size_t k = 1; k < ladder.masks.size(); ++k)
      if (dmi_loss(probs[e], ladder.masks[k]) < dmi_loss(probs[e], ladder.masks[arg])) arg = k;
    EXPECT_EQ(result.epochs[e].s_tilde[0], ladder.masks[arg]);
    EXPECT_EQ(result.epochs[e].y_star[0], result.epochs[e].s_tilde[0]);
  }
}

TEST(Igtt, FlatPredictionFallsBackToBackground) {
  class Flat final : public Predictor {
   public:
    void fit_epoch(std::span<const ProbImage>, std::span<const LabelImage>, const LossWeights&) override {}
    ProbImage predict(const ProbImage& image) const override { return ProbImage(image.width(), image.height(), 0.5); }
  } flat;
  IgttConfig config;
  config.max_iters = 2;
  const auto result = igtt_run(small_images(1), config, flat);
  for (const auto& rec : result.epochs) {
    EXPECT_TRUE(rec.flat[0]);
    EXPECT_EQ(rec.s_tilde[0].count(1), 0u);
    EXPECT_EQ(rec.y_star[0].count(1), 0u);
  }
}

TEST(Igtt, PredictThenFitOrder) {
  const auto images = small_images(1);
  RecordingPredictor pred;
  IgttConfig config;
  config.max_iters = 2;
  config.order = UpdateOrder::PredictThenFit;
  igtt_run(images, config, pred);
  EXPECT_EQ(pred.seen.size(), 2u);
}

TEST(Igtt, PredictorFailureNamesEpoch) {
  ThrowingPredictor pred;
  IgttConfig config;
  config.max_iters = 3;
  try {
    igtt_run(small_images(1), config, pred);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 2"), std::string::npos);
  }
}

TEST(Igtt, RejectsBadInput) {
  RecordingPredictor pred;
  IgttConfig config;
  EXPECT_THROW(igtt_run({}, config, pred), Error);
  config.k = 1;
  EXPECT_THROW(igtt_run(small_images(1), config, pred), Error);
  config = IgttConfig{};
  std::vector<LabelImage> wrong = {LabelImage(8, 8, 2)};
  EXPECT_THROW(igtt_run(small_images(1), config, pred, wrong), Error);
}

TEST(LogisticPredictor, FeaturesOfConstantImage) {
  const auto f = LogisticPredictor::features(ProbImage(9, 9, 0.75));
  for (const auto& v : f) {
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(v[k], 1.0, 1e-12);
    EXPECT_NEAR(v[4], 0.0, 1e-6);
  }
}

TEST(LogisticPredictor, LearnsFromCorrectLabels) {
  FixtureSpec spec;
  spec.kind = FixtureKind::Blobs;
  spec.size = 64;
  spec.seed = Seed{7};
  const auto f = gen_fixture(spec);
  LogisticPredictor pred({0.1, 256, 1.0, Seed{1}});
  const std::vector<ProbImage> images = {*f.intensity};
  const std::vector<LabelImage> labels = {f.mask};
  const double before = dmi_loss(pred.predict(images[0]), f.mask);
  for (int e = 0; e < 5; ++e) pred.fit_epoch(images, labels, LossWeights{});
  EXPECT_LT(dmi_loss(pred.predict(images[0]), f.mask), before);
  EXPECT_GT(*auc(pred.predict(images[0]), f.mask), 0.95);
}

}  // namespace
}  // namespace metastruct
