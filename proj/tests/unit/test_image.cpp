#include <gtest/gtest.h>

#include "matfuse/error.hpp"
#include "matfuse/image.hpp"

using namespace matfuse;

TEST(Image, RejectsNonPositiveShape) {
  EXPECT_THROW(RgbImage(0, 3), InvalidInput);
  EXPECT_THROW(LabelDistributionImage(2, 2, 0), InvalidInput);
}

TEST(Image, InterleavedLayout) {
  RgbImage img(2, 3);
  img(1, 2, 1) = 9;
  EXPECT_EQ(img.data()[(1 * 3 + 2) * 3 + 1], 9);
  EXPECT_EQ(img.pixel(5)[1], 9);
}

TEST(LabelDistribution, Validate) {
  LabelDistributionImage q(1, 2, 2, 0.5);
  EXPECT_NO_THROW(q.validate());
  q(0, 1, 0) = 0.6;
  EXPECT_THROW(q.validate(), InvalidInput);
  q(0, 1, 0) = -0.1;
  q(0, 1, 1) = 1.1;
  EXPECT_THROW(q.validate(), InvalidInput);
}

TEST(LabelImageTest, ValidateAllowsIgnore) {
  LabelImage l(1, 3);
  l.storage() = {0, 2, kIgnoreLabel};
  EXPECT_NO_THROW(l.validate(3));
  EXPECT_TRUE(l.has_ignore());
  EXPECT_THROW(l.validate(2), InvalidInput);
}

TEST(Resize, BilinearKeepsDistributions) {
  LabelDistributionImage q(2, 2, 2);
  q.pixel(0)[0] = q.pixel(1)[1] = q.pixel(2)[0] = q.pixel(3)[1] = 1.0;
  const auto r = resize_bilinear(q, 5, 7);
  EXPECT_EQ(r.height(), 5);
  EXPECT_EQ(r.width(), 7);
  EXPECT_NO_THROW(r.validate(1e-12));
  EXPECT_NEAR(r(0, 0, 0), 1.0, 1e-12);
  EXPECT_NEAR(r(0, 6, 1), 1.0, 1e-12);
  EXPECT_EQ(resize_bilinear(q, 2, 2), q);
}

TEST(Resize, NearestLabels) {
  LabelImage l(2, 2);
  l.storage() = {1, 2, 3, 4};
  const auto r = resize_nearest(l, 4, 4);
  EXPECT_EQ(r(0, 0), 1);
  EXPECT_EQ(r(3, 3), 4);
  EXPECT_EQ(r(0, 3), 2);
}
