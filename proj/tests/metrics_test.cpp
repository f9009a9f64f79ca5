#include "segfalsify/metrics.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

namespace segfalsify {
namespace {

// Pixel-by-pixel set counting, no Eigen expressions.
double iou_oracle(const ProbMap& pred, const Mask& mask, const std::vector<double>& taus) {
  double total = 0.0;
  for (double tau : taus) {
    long inter = 0, uni = 0;
    for (Eigen::Index y = 0; y < pred.rows(); ++y) {
      for (Eigen::Index x = 0; x < pred.cols(); ++x) {
        const bool p = static_cast<double>(pred(y, x)) > tau;
        const bool m = mask(y, x);
        inter += p && m;
        uni += p || m;
      }
    }
    total += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  return total / static_cast<double>(taus.size());
}

TEST(Iou, PerfectPrediction) {
  EXPECT_EQ(iou(ProbMap::Ones(4, 5), Mask::Constant(4, 5, true)), 1.0);
}

TEST(Iou, OnlyLowestThresholdPasses) {
  EXPECT_DOUBLE_EQ(iou(ProbMap::Constant(4, 4, 0.7f), Mask::Constant(4, 4, true)), 1.0 / 3.0);
}

TEST(Iou, BelowHalfNeverCounts) {
  Mask m = Mask::Constant(3, 3, false);
  m(1, 1) = true;
  EXPECT_EQ(iou(ProbMap::Constant(3, 3, 0.4f), m), 0.0);
}

TEST(Iou, ComparisonIsStrict) {
  EXPECT_EQ(iou(ProbMap::Constant(2, 2, 0.5f), Mask::Constant(2, 2, true), ThresholdSet({0.5})), 0.0);
}

TEST(Iou, EmptyUnionCountsAsAgreement) {
  EXPECT_EQ(iou(ProbMap::Zero(3, 3), Mask::Constant(3, 3, false)), 1.0);
  // Exactly one side empty.
  EXPECT_EQ(iou(ProbMap::Ones(3, 3), Mask::Constant(3, 3, false)), 0.0);
}

TEST(Iou, RejectsShapeMismatch) {
  EXPECT_THROW(iou(ProbMap::Zero(3, 4), Mask::Constant(4, 3, false)), DimensionError);
}

TEST(Iou, MatchesCountingOracle) {
  std::mt19937_64 rng(11);
  const ThresholdSet taus;
  for (int trial = 0; trial < 2000; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 16);
    const int h = 1 + static_cast<int>(rng() % 16);
    const ProbMap p = testing::random_probs(w, h, rng);
    const Mask m = testing::random_mask(w, h, rng, (rng() % 5) / 4.0);
    ASSERT_EQ(iou(p, m, taus), iou_oracle(p, m, taus.taus()));
  }
}

TEST(Iou, InvariantUnderJointPixelPermutation) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const ProbMap p = testing::random_probs(8, 8, rng);
    const Mask m = testing::random_mask(8, 8, rng);
    std::vector<int> perm(64);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    ProbMap pp(8, 8);
    Mask mp(8, 8);
    for (int i = 0; i < 64; ++i) {
      pp.data()[i] = p.data()[perm[i]];
      mp.data()[i] = m.data()[perm[i]];
    }
    ASSERT_EQ(iou(p, m), iou(pp, mp));
  }
}

TEST(Iou, CorrectPixelNeverLowersTerm) {
  std::mt19937_64 rng(13);
  const ThresholdSet single({0.9});
  for (int trial = 0; trial < 200; ++trial) {
    ProbMap p = testing::random_probs(6, 6, rng);
    const Mask m = testing::random_mask(6, 6, rng);
    const double before = iou(p, m, single);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (m.data()[i] && !(p.data()[i] > 0.9f)) {
        p.data()[i] = 1.0f;
        break;
      }
    }
    ASSERT_GE(iou(p, m, single), before);
  }
}

TEST(Iou, StaysInUnitInterval) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 500; ++trial) {
    const double v = iou(testing::random_probs(5, 7, rng), testing::random_mask(5, 7, rng));
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(ThresholdSet, Validation) {
  EXPECT_EQ(ThresholdSet().taus(), (std::vector<double>{0.5, 0.9, 0.99}));
  EXPECT_THROW(ThresholdSet(std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(ThresholdSet({0.0, 0.5}), std::invalid_argument);
  EXPECT_THROW(ThresholdSet({0.5, 1.0}), std::invalid_argument);
  EXPECT_THROW(ThresholdSet({0.9, 0.5}), std::invalid_argument);
  EXPECT_THROW(ThresholdSet({0.5, 0.5}), std::invalid_argument);
}

TEST(Deterioration, Examples) {
  const std::vector<double> a{0.3, 0.8};
  EXPECT_EQ(deterioration(a, a), 0.0);
  EXPECT_EQ(deterioration(std::vector<double>{1.0, 1.0}, std::vector<double>{0.0, 0.0}), 1.0);
  EXPECT_DOUBLE_EQ(deterioration(std::vector<double>{0.95, 0.98}, std::vector<double>{0.0, 0.0}), 0.965);
}

TEST(Deterioration, NegativeWhenPerturbationHelps) {
  EXPECT_DOUBLE_EQ(deterioration(std::vector<double>{0.5}, std::vector<double>{0.75}), -0.25);
}

TEST(Deterioration, Errors) {
  EXPECT_THROW(deterioration(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(deterioration(std::vector<double>{1.0}, std::vector<double>{1.0, 0.0}),
               std::invalid_argument);
}

TEST(Image, Rgb8RoundTripAndValidation) {
  std::mt19937_64 rng(15);
  const Image img = testing::random_image(7, 5, rng);
  EXPECT_EQ(image_from_rgb8(7, 5, image_to_rgb8(img)), img);
  EXPECT_THROW(image_from_rgb8(7, 5, std::vector<std::uint8_t>(7 * 5 * 3 - 1)), DimensionError);
  Image bad = img;
  bad.at(1, 1, 2) = 1.5f;
  EXPECT_THROW(validate_image(bad), std::invalid_argument);
  EXPECT_NO_THROW(validate_image(img));
}

TEST(Image, ChannelViewIsInterleaved) {
  Image img(3, 2);
  img.channel(1).setConstant(0.25f);
  EXPECT_EQ(img.at(2, 1, 1), 0.25f);
  EXPECT_EQ(img.at(2, 1, 0), 0.0f);
  EXPECT_EQ(img.pixels()(5, 1), 0.25f);
}

TEST(Image, LuminanceWeights) {
  Image img(1, 1);
  img.at(0, 0, 0) = 1.0f;
  EXPECT_NEAR(luminance(img)(0, 0), 0.299f, 1e-7f);
}

}  // namespace
}  // namespace segfalsify
