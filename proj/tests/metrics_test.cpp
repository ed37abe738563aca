#include "metastruct/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

namespace metastruct {
namespace {

TEST(Overlap, Identity) {
  Rng rng(Seed{71});
  const auto y = testing::random_shapes(32, 32, 3, rng);
  const auto m = overlap_metrics(y, y);
  EXPECT_EQ(m.dice, 1.0);
  EXPECT_EQ(m.iou, 1.0);
  EXPECT_EQ(m.accuracy, 1.0);
}

TEST(Overlap, Disjoint) {
  LabelImage a(10, 10, 2), b(10, 10, 2);
  a.set(1, 1, 1);
  b.set(5, 5, 1);
  const auto m = overlap_metrics(a, b);
  EXPECT_EQ(m.dice, 0.0);
  EXPECT_EQ(m.iou, 0.0);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.98);
}

TEST(Overlap, EmptyPairScoresOne) {
  const LabelImage a(6, 6, 2);
  EXPECT_EQ(overlap_metrics(a, a).dice, 1.0);
  EXPECT_EQ(overlap_metrics(a, a).iou, 1.0);
}

TEST(Overlap, ErrorPaths) {
  EXPECT_THROW(overlap_metrics(LabelImage(4, 4, 2), LabelImage(5, 4, 2)), Error);
  EXPECT_THROW(overlap_metrics(LabelImage(4, 4, 3), LabelImage(4, 4, 2)), Error);
}

TEST(Overlap, DiceIouIdentity) {
  Rng rng(Seed{72});
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = testing::random_mask(20, 20, rng.uniform(), rng);
    const auto b = testing::random_mask(20, 20, rng.uniform(), rng);
    const auto m = overlap_metrics(a, b);
    EXPECT_NEAR(m.dice, 2.0 * m.iou / (1.0 + m.iou), 1e-12);
  }
}

// Both numbers are rounded to three figures, so they are consistent when some exact pair
// obeying the identity rounds to both.
TEST(Overlap, ReportedPairConsistent) {
  const double dice_lo = 0.8585, dice_hi = 0.8595;
  const double iou_lo = 0.7535, iou_hi = 0.7545;
  const double implied_lo = 2.0 * iou_lo / (1.0 + iou_lo), implied_hi = 2.0 * iou_hi / (1.0 + iou_hi);
  EXPECT_LT(std::max(dice_lo, implied_lo), std::min(dice_hi, implied_hi));
  EXPECT_NEAR(2.0 * 0.754 / 1.754, 0.8597, 1e-4);
}

TEST(Auc, PerfectAndConstant) {
  Rng rng(Seed{73});
  const auto ref = testing::random_mask(32, 32, 0.3, rng);
  ProbImage exact(32, 32);
  for (std::size_t i = 0; i < ref.size(); ++i) exact[i] = ref[i];
  EXPECT_DOUBLE_EQ(*auc(exact, ref), 1.0);
  EXPECT_DOUBLE_EQ(*auc(ProbImage(32, 32, 0.4), ref), 0.5);
  EXPECT_FALSE(auc(exact, LabelImage(32, 32, 2)).has_value());
}

TEST(Auc, MatchesPairwiseOracle) {
  Rng rng(Seed{74});
  for (int trial = 0; trial < 10; ++trial) {
    const auto ref = testing::random_mask(12, 12, 0.4, rng);
    ProbImage p(12, 12);
    for (double& v : p.values()) v = std::round(rng.uniform() * 8) / 8;  // forces ties
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i)
      for (std::size_t j = 0; j < ref.size(); ++j)
        if (ref[i] && !ref[j]) {
          pairs += 1.0;
          wins += p[i] > p[j] ? 1.0 : p[i] == p[j] ? 0.5 : 0.0;
        }
    EXPECT_NEAR(*auc(p, ref), wins / pairs, 1e-12);
  }
}

TEST(Auc, RandomScoresNearHalf) {
  Rng rng(Seed{75});
  for (int trial = 0; trial < 10; ++trial) {
    const auto ref = testing::random_mask(100, 100, 0.5, rng);
    EXPECT_NEAR(*auc(testing::random_probabilities(100, 100, rng), ref), 0.5, 0.02);
  }
}

TEST(Auc, MonotoneTransformInvariant) {
  Rng rng(Seed{76});
  for (int trial = 0; trial < 20; ++trial) {
    const auto ref = testing::random_mask(24, 24, 0.3, rng);
    const auto p = testing::random_probabilities(24, 24, rng);
    ProbImage sq = p;
    for (double& v : sq.values()) v *= v;
    EXPECT_DOUBLE_EQ(*auc(p, ref), *auc(sq, ref));
  }
}

TEST(DiffImage, Signs) {
  LabelImage clean(3, 1, 2), noisy(3, 1, 2);
  clean.set(0, 0, 1);
  noisy.set(1, 0, 1);
  const auto d = diff_image(noisy, clean);
  EXPECT_EQ(d(0, 0), 1);
  EXPECT_EQ(d(1, 0), -1);
  EXPECT_EQ(d(2, 0), 0);
}

TEST(DiffImage, Antisymmetry) {
  Rng rng(Seed{77});
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = testing::random_mask(16, 16, 0.5, rng);
    const auto b = testing::random_mask(16, 16, 0.5, rng);
    const auto ab = diff_image(a, b), ba = diff_image(b, a), aa = diff_image(a, a);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(ab[i], -ba[i]);
      EXPECT_EQ(aa[i], 0);
    }
  }
  EXPECT_THROW(diff_image(LabelImage(4, 4, 3), LabelImage(4, 4, 2)), Error);
}

TEST(MeanIou, PresentClassesOnly) {
  LabelImage ref(4, 1, 3), pred(4, 1, 3);
  ref.set(0, 0, 1);
  ref.set(1, 0, 1);
  pred.set(0, 0, 1);
  pred.set(3, 0, 2);
  // class 0: {2,3} vs {1,2} -> 1/3; class 1: {0,1} vs {0} -> 1/2; class 2 absent in ref.
  EXPECT_NEAR(mean_iou(pred, ref), (1.0 / 3.0 + 0.5) / 2.0, 1e-12);
}

TEST(Otsu, SeparatesBimodal) {
  ProbImage p(10, 10, 0.2);
  for (int x = 0; x < 10; ++x)
    for (int y = 0; y < 4; ++y) p(x, y) = 0.8;
  const double t = otsu_threshold(p);
  EXPECT_GT(t, 0.2);
  EXPECT_LT(t, 0.8);
  EXPECT_EQ(otsu_segment(p).count(1), 40u);
}

}  // namespace
}  // namespace metastruct
