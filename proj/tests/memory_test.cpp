#include "mmnet/memory.hpp"

#include <gtest/gtest.h>

#include <random>

#include "mmnet/grad_check.hpp"
#include "oracles.hpp"

using namespace mmnet;

TEST(Memory, InitializationBoundsAndGrad) {
  std::mt19937_64 rng(50);
  MetaClassMemory mem = make_memory(50, 64, rng);
  EXPECT_EQ(mem.count(), 50);
  EXPECT_EQ(mem.dim(), 64);
  EXPECT_TRUE(mem.embeddings.requires_grad());
  const double bound = 1.0 / std::sqrt(64.0);
  for (double v : mem.embeddings.data()) {
    EXPECT_GE(v, -bound);
    EXPECT_LE(v, bound);
  }
  EXPECT_THROW(make_memory(0, 8, rng), std::invalid_argument);
}

TEST(Activation, ZeroFeatureGivesHalf) {
  // a zero feature vector is orthogonal to every embedding
  std::mt19937_64 rng(51);
  MetaClassMemory mem = make_memory(6, 8, rng);
  Tensor f = Tensor::zeros({8, 2, 2});
  Tensor act = compute_activation(f, mem);
  ASSERT_EQ(act.shape(), (Shape{6, 2, 2}));
  for (double v : act.data()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Activation, AlignedFeatureSaturates) {
  std::mt19937_64 rng(52);
  MetaClassMemory mem = make_memory(5, 4, rng);
  // unit-norm row 3
  double norm = 0.0;
  for (int d = 0; d < 4; ++d) norm += mem.embeddings.at(3, d) * mem.embeddings.at(3, d);
  norm = std::sqrt(norm);
  for (int d = 0; d < 4; ++d) mem.embeddings.data()[3 * 4 + d] /= norm;

  Tensor f = Tensor::zeros({4, 1, 1});
  for (int d = 0; d < 4; ++d) f.data()[static_cast<std::size_t>(d)] = 10.0 * mem.embeddings.at(3, d);
  Tensor act = compute_activation(f, mem);
  EXPECT_NEAR(act.at(3, 0, 0), sigmoid_value(10.0), 1e-4);
}

TEST(Activation, MatchesLoopOracle) {
  std::mt19937_64 rng(53);
  Tensor f = Tensor::uniform({8, 4, 4}, -1.0, 1.0, rng);
  MetaClassMemory mem = make_memory(6, 8, rng);
  Tensor act = compute_activation(f, mem);
  auto ref = oracle::activation(f.data(), mem.embeddings.data(), 8, 16, 6);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(act.data()[i], ref[i], 1e-12);
}

TEST(Activation, OutputStrictlyInsideUnitInterval) {
  std::mt19937_64 rng(54);
  Tensor f = Tensor::uniform({8, 3, 3}, -3.0, 3.0, rng);
  MetaClassMemory mem = make_memory(10, 8, rng);
  for (double v : compute_activation(f, mem).data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Activation, DimensionMismatchThrows) {
  std::mt19937_64 rng(55);
  MetaClassMemory mem = make_memory(4, 8, rng);
  EXPECT_THROW(compute_activation(Tensor::zeros({7, 2, 2}), mem), std::invalid_argument);
}

TEST(ReconLoss, DegenerateSingleLocationIsZero) {
  std::mt19937_64 rng(56);
  MetaClassMemory mem = make_memory(5, 6, rng);
  Tensor f = Tensor::uniform({6, 1, 1}, -1.0, 1.0, rng);
  Tensor act = compute_activation(f, mem);
  EXPECT_NEAR(memory_recon_loss(f, act, mem).item(), 0.0, 1e-12);
}

TEST(ReconLoss, MatchesLoopOracle) {
  std::mt19937_64 rng(57);
  Tensor f = Tensor::uniform({5, 3, 3}, -1.0, 1.0, rng);
  MetaClassMemory mem = make_memory(7, 5, rng);
  Tensor act = compute_activation(f, mem);
  const double ref = oracle::recon_loss(f.data(), act.data(), mem.embeddings.data(), 5, 9, 7);
  EXPECT_NEAR(memory_recon_loss(f, act, mem).item(), ref, 1e-10);
}

TEST(ReconLoss, ChannelSoftmaxSumsToOne) {
  std::mt19937_64 rng(58);
  Tensor f = Tensor::uniform({6, 3, 2}, -1.0, 1.0, rng);
  MetaClassMemory mem = make_memory(9, 6, rng);
  Tensor act = compute_activation(f, mem);
  Tensor weights = softmax(reshape(act, {9, 6}), 0);
  for (int p = 0; p < 6; ++p) {
    double s = 0.0;
    for (int n = 0; n < 9; ++n) s += weights.at(n, p);
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(ReconLoss, InvariantUnderEmbeddingPermutation) {
  std::mt19937_64 rng(59);
  const int n = 6, d = 5;
  Tensor f = Tensor::uniform({d, 2, 3}, -1.0, 1.0, rng);
  MetaClassMemory mem = make_memory(n, d, rng);
  Tensor act = compute_activation(f, mem);
  const double base = memory_recon_loss(f, act, mem).item();

  std::vector<int> perm{3, 0, 5, 1, 4, 2};
  MetaClassMemory permuted{Tensor::zeros({n, d}, true)};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      permuted.embeddings.data()[static_cast<std::size_t>(i) * d + j] =
          mem.embeddings.at(perm[static_cast<std::size_t>(i)], j);
  Tensor act2 = compute_activation(f, permuted);  // identical values, permuted channels
  const double after = memory_recon_loss(f, act2, permuted).item();
  EXPECT_NEAR(base, after, 1e-10);
}

TEST(ReconLoss, MatchedOrthogonalMemoryBeatsRandom) {
  // memory rows equal to the (orthogonal, equal-norm, large) feature columns
  const int hw = 4, d = 4;
  std::vector<double> fdata(static_cast<std::size_t>(d) * hw, 0.0);
  for (int i = 0; i < d; ++i) fdata[static_cast<std::size_t>(i) * hw + i] = 10.0;  // columns = 10*e_i
  Tensor f = Tensor::from_data({d, 2, 2}, std::move(fdata));

  MetaClassMemory matched{Tensor::zeros({hw, d}, true)};
  for (int i = 0; i < hw; ++i) matched.embeddings.data()[static_cast<std::size_t>(i) * d + i] = 10.0;
  Tensor act = compute_activation(f, matched);
  const double matched_loss = memory_recon_loss(f, act, matched).item();

  std::mt19937_64 rng(60);
  for (int trial = 0; trial < 100; ++trial) {
    MetaClassMemory random_mem{Tensor::uniform({hw, d}, -1.0, 1.0, rng, true)};
    Tensor ract = compute_activation(f, random_mem);
    const double rloss = memory_recon_loss(f, ract, random_mem).item();
    EXPECT_LT(matched_loss, rloss);
  }
}

TEST(ReconLoss, GradCheckThroughMemory) {
  std::mt19937_64 rng(61);
  Tensor f = Tensor::uniform({5, 2, 2}, -1.0, 1.0, rng);
  MetaClassMemory mem = make_memory(6, 5, rng);
  double err = grad_check(
      [&](Tensor& m) {
        MetaClassMemory probe{m};
        Tensor act = compute_activation(f, probe);
        return memory_recon_loss(f, act, probe);
      },
      mem.embeddings);
  EXPECT_LT(err, 1e-4);
}

TEST(ReconLoss, GradCheckThroughFeatures) {
  std::mt19937_64 rng(62);
  Tensor f = Tensor::uniform({5, 2, 2}, -1.0, 1.0, rng);
  MetaClassMemory mem = make_memory(6, 5, rng);
  double err = grad_check(
      [&](Tensor& t) {
        Tensor act = compute_activation(t, mem);
        return memory_recon_loss(t, act, mem);
      },
      f);
  EXPECT_LT(err, 1e-4);
}

TEST(ReconLoss, ShapeMismatchThrows) {
  std::mt19937_64 rng(63);
  MetaClassMemory mem = make_memory(4, 5, rng);
  Tensor f = Tensor::zeros({5, 2, 2});
  Tensor act = Tensor::zeros({4, 3, 3});
  EXPECT_THROW(memory_recon_loss(f, act, mem), std::invalid_argument);
}

TEST(Bypass, IdentityPassThrough) {
  std::mt19937_64 rng(64);
  Tensor f = Tensor::uniform({8, 4, 4}, -1.0, 1.0, rng);
  Tensor out = bypass_features(f);
  EXPECT_EQ(out.raw(), f.raw());  // same underlying buffer, no copy
  EXPECT_EQ(out.shape(), f.shape());
}
