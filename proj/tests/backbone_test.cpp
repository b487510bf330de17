#include "mmnet/backbone.hpp"

#include <gtest/gtest.h>

#include <random>

#include "mmnet/grad_check.hpp"
#include "mmnet/optim.hpp"

using namespace mmnet;

namespace {

Tensor random_image(int h, int w, std::mt19937_64& rng) {
  return Tensor::uniform({3, h, w}, 0.0, 1.0, rng);
}

}  // namespace

TEST(Backbone, SpatialExtentsFollowStride) {
  std::mt19937_64 rng(90);
  BackboneConfig cfg;  // stride 4
  FeatureExtractor fx(cfg, rng);
  FeaturePyramid p = fx.extract(random_image(64, 64, rng));
  EXPECT_EQ(p.level2.shape(), (Shape{32, 16, 16}));
  EXPECT_EQ(p.level3.shape(), (Shape{64, 16, 16}));
  EXPECT_EQ(p.level4.shape(), (Shape{64, 16, 16}));

  BackboneConfig cfg2;
  cfg2.stride = 2;
  FeatureExtractor fx2(cfg2, rng);
  FeaturePyramid p2 = fx2.extract(random_image(32, 64, rng));
  EXPECT_EQ(p2.level2.extent(1), 16);
  EXPECT_EQ(p2.level2.extent(2), 32);
}

TEST(Backbone, ExtentNotDivisibleThrows) {
  std::mt19937_64 rng(91);
  FeatureExtractor fx(BackboneConfig{}, rng);
  EXPECT_THROW(fx.extract(random_image(30, 64, rng)), std::invalid_argument);
}

TEST(Backbone, PixelRangeValidated) {
  std::mt19937_64 rng(92);
  FeatureExtractor fx(BackboneConfig{}, rng);
  Tensor img = Tensor::full({3, 8, 8}, 1.5);
  EXPECT_THROW(fx.extract(img), std::invalid_argument);
}

TEST(Backbone, DeterministicGivenParameters) {
  std::mt19937_64 rng(93);
  FeatureExtractor fx(BackboneConfig{}, rng);
  Tensor img = random_image(16, 16, rng);
  FeaturePyramid a = fx.extract(img);
  FeaturePyramid b = fx.extract(img);
  for (std::size_t i = 0; i < a.level4.size(); ++i) EXPECT_EQ(a.level4.data()[i], b.level4.data()[i]);
  for (std::size_t i = 0; i < a.level2.size(); ++i) EXPECT_EQ(a.level2.data()[i], b.level2.data()[i]);
}

TEST(Backbone, FrozenLeavesGradsAbsentAndParamsFixed) {
  std::mt19937_64 rng(94);
  BackboneConfig cfg;
  cfg.frozen = true;
  FeatureExtractor fx(cfg, rng);
  MidLevelFuse fuse(cfg, rng);

  Tensor img = random_image(16, 16, rng);
  backward(sum(fuse.apply(fx.extract(img))));

  auto backbone_params = fx.named_parameters("backbone");
  for (auto& [name, p] : backbone_params) {
    EXPECT_FALSE(p.requires_grad()) << name;
    EXPECT_FALSE(p.has_grad()) << name;
  }
  // the fuse conv still trains
  auto fuse_params = fuse.named_parameters("fuse");
  for (auto& [name, p] : fuse_params) EXPECT_TRUE(p.has_grad()) << name;

  // two optimizer steps over the trainable set leave frozen weights bit-identical
  std::vector<double> snapshot = backbone_params[0].second.data();
  SgdOptimizer opt({0.1, 0.9, 1e-4}, fuse_params);
  opt.step();
  backward(sum(fuse.apply(fx.extract(img))));
  opt.step();
  for (std::size_t i = 0; i < snapshot.size(); ++i) EXPECT_EQ(snapshot[i], backbone_params[0].second.data()[i]);
}

TEST(Fuse, KernelConsumesConcatenatedChannels) {
  std::mt19937_64 rng(95);
  BackboneConfig cfg;  // c2=32, c3=64, D=64
  MidLevelFuse fuse(cfg, rng);
  auto params = fuse.named_parameters("fuse");
  ASSERT_EQ(params.size(), 2u);
  EXPECT_EQ(params[0].second.shape(), (Shape{64, 96, 3, 3}));
}

TEST(Fuse, ZeroLevelsZeroBiasGiveZeroOutput) {
  std::mt19937_64 rng(96);
  BackboneConfig cfg;
  cfg.c2 = 4;
  cfg.c3 = 4;
  cfg.fused_dim = 6;
  MidLevelFuse fuse(cfg, rng);
  auto params = fuse.named_parameters("fuse");
  for (double& v : params[1].second.data()) v = 0.0;  // zero the bias
  FeaturePyramid p;
  p.level2 = Tensor::zeros({4, 5, 5});
  p.level3 = Tensor::zeros({4, 5, 5});
  Tensor f = fuse.apply(p);
  EXPECT_EQ(f.shape(), (Shape{6, 5, 5}));
  for (double v : f.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Fuse, MisalignedLevelsThrow) {
  std::mt19937_64 rng(97);
  BackboneConfig cfg;
  cfg.c2 = 4;
  cfg.c3 = 4;
  MidLevelFuse fuse(cfg, rng);
  FeaturePyramid p;
  p.level2 = Tensor::zeros({4, 4, 4});
  p.level3 = Tensor::zeros({4, 5, 5});
  EXPECT_THROW(fuse.apply(p), std::invalid_argument);
}

TEST(Fuse, GradCheckThroughFusion) {
  std::mt19937_64 rng(98);
  BackboneConfig cfg;
  cfg.c2 = 3;
  cfg.c3 = 3;
  cfg.fused_dim = 4;
  MidLevelFuse fuse(cfg, rng);
  Tensor l2 = Tensor::uniform({3, 3, 3}, -1.0, 1.0, rng);
  Tensor l3 = Tensor::uniform({3, 3, 3}, -1.0, 1.0, rng);

  double err = grad_check(
      [&](Tensor& t) {
        FeaturePyramid p;
        p.level2 = t;
        p.level3 = l3;
        return sum(mul(fuse.apply(p), 0.5));
      },
      l2);
  EXPECT_LT(err, 1e-4);

  auto params = fuse.named_parameters("fuse");
  double kerr = grad_check(
      [&](Tensor&) {
        FeaturePyramid p;
        p.level2 = l2;
        p.level3 = l3;
        return sum(mul(fuse.apply(p), 0.5));
      },
      params[0].second);
  EXPECT_LT(kerr, 1e-4);
}
