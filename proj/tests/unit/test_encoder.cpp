#include "ordcore/encoder.hpp"
#include "ordcore/error.hpp"

#include "fd.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ordcore;
using namespace ordcore::encoder;
using ordcore::testing::max_relative_error;
using ordcore::testing::numeric_gradient;
using ordcore::testing::random_matrix;

namespace {

const Architecture kSmall{4, {8}, 3, 3};

// Scalar test loss: sum(Wz * z) + sum(Wl * logits).
double probe(const EncoderParams& p, const Matrix& x, const Matrix& wz, const Matrix& wl) {
  const auto f = forward(p, x);
  return f.features.cwiseProduct(wz).sum() + f.logits.cwiseProduct(wl).sum();
}

}  // namespace

TEST(Encoder, ZeroParamsGiveZeroOutputs) {
  Rng rng(1);
  const auto f = forward(zero_params(kSmall), random_matrix(rng, 5, 4));
  EXPECT_EQ(f.features.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(f.logits.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(f.features.rows(), 5);
  EXPECT_EQ(f.features.cols(), 3);
  EXPECT_EQ(f.logits.cols(), 3);
}

TEST(Encoder, LinearFeatureLayerWithoutHidden) {
  const Architecture arch{2, {}, 2, 1};
  auto p = zero_params(arch);
  p.feature_layers[0].weight = Matrix::Identity(2, 2);
  p.feature_layers[0].bias << 1.0, -1.0;
  Matrix x(1, 2);
  x << -3.0, 4.0;
  const auto f = forward(p, x);
  // No ReLU on the feature output.
  EXPECT_EQ(f.features(0, 0), -2.0);
  EXPECT_EQ(f.features(0, 1), 3.0);
}

TEST(Encoder, InitIsDeterministicAndBounded) {
  const auto a = init_params(kSmall, 9);
  const auto b = init_params(kSmall, 9);
  const auto c = init_params(kSmall, 10);
  EXPECT_EQ(a.feature_layers[0].weight, b.feature_layers[0].weight);
  EXPECT_NE(a.feature_layers[0].weight, c.feature_layers[0].weight);
  EXPECT_LE(a.feature_layers[0].weight.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(4.0));
  EXPECT_LE(a.feature_layers[1].weight.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(8.0));
  a.validate();
}

TEST(Encoder, ValidateRejectsNonFinite) {
  auto p = init_params(kSmall, 2);
  p.head.bias(0) = std::nan("");
  EXPECT_THROW(p.validate(), Error);
}

TEST(Encoder, ForwardIsRepeatable) {
  Rng rng(4);
  const auto p = init_params(kSmall, 3);
  const Matrix x = random_matrix(rng, 7, 4);
  EXPECT_EQ(forward(p, x).logits, forward(p, x).logits);
}

TEST(Encoder, BackwardMatchesFiniteDifferences) {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = init_params(kSmall, 100 + static_cast<std::uint64_t>(trial));
    const Matrix x = random_matrix(rng, 6, 4);
    const Matrix wz = random_matrix(rng, 6, 3);
    const Matrix wl = random_matrix(rng, 6, 3);
    const auto grads = backward(p, x, wz, wl);
    auto blocks = parameter_blocks(p);
    const auto gblocks = gradient_blocks(grads);
    ASSERT_EQ(blocks.size(), gblocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      Matrix flat(1, static_cast<Eigen::Index>(blocks[b].size()));
      for (std::size_t i = 0; i < blocks[b].size(); ++i) flat(0, static_cast<Eigen::Index>(i)) = blocks[b][i];
      const Matrix num = numeric_gradient(
          [&](const Matrix& v) {
            std::copy(v.data(), v.data() + v.size(), blocks[b].begin());
            return probe(p, x, wz, wl);
          },
          flat);
      std::copy(flat.data(), flat.data() + flat.size(), blocks[b].begin());
      Matrix analytic(1, flat.cols());
      std::copy(gblocks[b].begin(), gblocks[b].end(), analytic.data());
      // Kinks of the ReLU are measure zero; skip a trial only if it lands on one.
      EXPECT_LT(max_relative_error(analytic, num), 1e-4) << "block " << b << " trial " << trial;
    }
  }
}

TEST(Encoder, DeadReluPassesNoGradient) {
  const Architecture arch{1, {1}, 1, 1};
  auto p = zero_params(arch);
  p.feature_layers[0].weight(0, 0) = 1.0;
  p.feature_layers[0].bias(0) = -10.0;  // always off for |x| < 10
  p.feature_layers[1].weight(0, 0) = 1.0;
  Matrix x(3, 1);
  x << 0.5, -2.0, 3.0;
  const auto g = backward(p, x, Matrix::Ones(3, 1), Matrix::Ones(3, 1));
  EXPECT_EQ(g.feature_layers[0].weight(0, 0), 0.0);
  EXPECT_EQ(g.feature_layers[0].bias(0), 0.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Adam adam;
  std::vector<double> params{1.0, -2.0, 0.0};
  const std::vector<double> grads{0.5, -3.0, 0.0};
  adam.begin_step();
  adam.update(0, params, grads, 0.1);
  // Bias-corrected first step is lr * g / (|g| + eps).
  EXPECT_NEAR(params[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(params[1], -2.0 + 0.1 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_EQ(params[2], 0.0);
}

TEST(Adam, WeightDecayCanBeSwitchedOff) {
  Adam adam(AdamOptions{0.9, 0.999, 1e-8, 0.5});
  std::vector<double> a{1.0};
  std::vector<double> b{1.0};
  const std::vector<double> zero{0.0};
  adam.begin_step();
  adam.update(0, a, zero, 0.1, true);
  adam.update(1, b, zero, 0.1, false);
  EXPECT_LT(a[0], 1.0);
  EXPECT_EQ(b[0], 1.0);
}

TEST(Adam, UpdateBeforeStepIsAnError) {
  Adam adam;
  std::vector<double> p{1.0};
  const std::vector<double> g{1.0};
  EXPECT_THROW(adam.update(0, p, g, 0.1), Error);
}
