#include "ordcore/train.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

using namespace ordcore;
using namespace ordcore::train;

namespace {

datagen::Dataset small_data(std::uint64_t seed = 1) {
  datagen::SyntheticSpec spec;
  spec.class_count = 4;
  spec.samples_per_class = 20;
  spec.input_dim = 4;
  spec.seed = seed;
  return datagen::generate(spec);
}

TrainConfig small_config() {
  TrainConfig c;
  c.batch_size = 8;
  c.epochs = 4;
  c.base_lr = 1e-2;
  c.hidden = {8};
  c.feature_dim = 3;
  c.seed = 3;
  return c;
}

void expect_same_params(const encoder::EncoderParams& a, const encoder::EncoderParams& b) {
  ASSERT_EQ(a.feature_layers.size(), b.feature_layers.size());
  for (std::size_t l = 0; l < a.feature_layers.size(); ++l) {
    EXPECT_EQ(a.feature_layers[l].weight, b.feature_layers[l].weight);
    EXPECT_EQ(a.feature_layers[l].bias, b.feature_layers[l].bias);
  }
  EXPECT_EQ(a.head.weight, b.head.weight);
  EXPECT_EQ(a.head.bias, b.head.bias);
}

}  // namespace

TEST(TrainConfig, RejectsBadBounds) {
  auto c = small_config();
  c.batch_size = 1;
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Configuration);
    EXPECT_NE(std::string(e.what()).find("batch_size"), std::string::npos);
  }
  c = small_config();
  c.alpha = -1.0;
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.decay_period = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(TrainConfig, StepSchedule) {
  TrainConfig c;
  c.base_lr = 1e-2;
  c.decay_factor = 0.1;
  c.decay_period = 20;
  EXPECT_DOUBLE_EQ(c.learning_rate(0), 1e-2);
  EXPECT_DOUBLE_EQ(c.learning_rate(19), 1e-2);
  EXPECT_DOUBLE_EQ(c.learning_rate(20), 1e-3);
  EXPECT_DOUBLE_EQ(c.learning_rate(45), 1e-4);
  EXPECT_DOUBLE_EQ(c.dual_learning_rate(20), 1e-3);
  c.dual_lr = 0.5;
  EXPECT_DOUBLE_EQ(c.dual_learning_rate(0), 0.5);
  EXPECT_DOUBLE_EQ(c.dual_learning_rate(20), 0.05);
}

TEST(Strings, RoundTrip) {
  for (auto s : {Sampling::Random, Sampling::Stratified}) EXPECT_EQ(sampling_from_string(to_string(s)), s);
  for (auto b : {Baseline::CrossEntropy, Baseline::Sord}) EXPECT_EQ(baseline_from_string(to_string(b)), b);
  for (auto a : {Alignment::Dual, Alignment::Direct, Alignment::None})
    EXPECT_EQ(alignment_from_string(to_string(a)), a);
  EXPECT_THROW(alignment_from_string("both"), Error);
}

TEST(Batches, RandomDropsTheRemainder) {
  const auto data = small_data();
  auto c = small_config();
  c.batch_size = 12;
  Rng rng(0);
  const auto batches = epoch_batches(c, data, rng);
  EXPECT_EQ(batches.size(), 80u / 12u);
  std::set<std::size_t> seen;
  for (const auto& b : batches) {
    EXPECT_EQ(b.size(), 12u);
    seen.insert(b.begin(), b.end());
  }
  EXPECT_EQ(seen.size(), 72u);
}

TEST(Batches, StratifiedUsesDistinctClasses) {
  const auto data = small_data();
  auto c = small_config();
  c.sampling = Sampling::Stratified;
  c.batch_size = 16;
  Rng rng(0);
  const auto batches = epoch_batches(c, data, rng);
  EXPECT_EQ(batches.size(), 80u / 4u);
  std::map<std::size_t, int> uses;
  for (const auto& b : batches) {
    ASSERT_EQ(b.size(), 4u);
    std::set<ClassId> classes;
    for (std::size_t i : b) {
      classes.insert(data.classes[i]);
      ++uses[i];
    }
    EXPECT_EQ(classes.size(), 4u);
  }
  // Balanced classes: every sample appears exactly once per epoch.
  EXPECT_EQ(uses.size(), 80u);
}

TEST(Train, IsDeterministic) {
  const auto data = small_data();
  const auto a = train::train(small_config(), data);
  const auto b = train::train(small_config(), data);
  expect_same_params(a.state.params, b.state.params);
  ASSERT_EQ(a.state.history.size(), 4u);
  for (std::size_t e = 0; e < 4; ++e) {
    EXPECT_EQ(a.state.history[e].total, b.state.history[e].total);
    EXPECT_EQ(a.state.history[e].lambdas, b.state.history[e].lambdas);
  }
}

TEST(Train, ZeroWeightsReduceToTheBaseline) {
  const auto data = small_data();
  auto dual = small_config();
  dual.alpha = 0.0;
  dual.beta = 0.0;
  auto none = dual;
  none.alignment = Alignment::None;
  const auto a = train::train(dual, data);
  const auto b = train::train(none, data);
  expect_same_params(a.state.params, b.state.params);
  for (std::size_t e = 0; e < a.state.history.size(); ++e) {
    EXPECT_EQ(a.state.history[e].l_or, b.state.history[e].l_or);
    EXPECT_EQ(a.state.history[e].total, b.state.history[e].total);
    EXPECT_EQ(a.state.history[e].lambdas, b.state.history[e].lambdas);
  }
}

TEST(Train, LambdaStartsAtOneAndMovesUnderDual) {
  const auto data = small_data();
  const auto init = initial_state(small_config(), data);
  for (double l : init.duals.lambdas()) EXPECT_NEAR(l, 1.0, 1e-12);
  const auto r = train::train(small_config(), data);
  bool moved = false;
  for (double l : r.state.duals.lambdas()) moved |= std::abs(l - 1.0) > 1e-6;
  EXPECT_TRUE(moved);
}

TEST(Train, DirectAlignmentLowersRawKl) {
  const auto data = small_data();
  auto direct = small_config();
  direct.alignment = Alignment::Direct;
  direct.alpha = 1.0;
  direct.epochs = 10;
  auto none = direct;
  none.alignment = Alignment::None;
  const auto a = train::train(direct, data);
  const auto b = train::train(none, data);
  EXPECT_LT(a.state.history.back().raw_kl, b.state.history.back().raw_kl);
}

TEST(Train, StratifiedOverCapWarns) {
  const auto data = small_data();
  auto c = small_config();
  c.sampling = Sampling::Stratified;
  c.batch_size = 32;
  c.epochs = 1;
  const auto r = train::train(c, data);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("C = 4"), std::string::npos);
}

TEST(Train, OversizedBatchIsDegenerate) {
  const auto data = small_data();
  auto c = small_config();
  c.batch_size = 200;
  try {
    train::train(c, data);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateBatch);
  }
}

TEST(Train, DivergenceAbortsWithFiniteState) {
  const auto data = small_data();
  auto c = small_config();
  c.base_lr = 1e300;
  c.epochs = 3;
  try {
    train::train(c, data);
    FAIL() << "expected an abort";
  } catch (const TrainingAborted& e) {
    EXPECT_NO_THROW(e.last_good().params.validate());
  }
}

TEST(Evaluate, ReportsAllFields) {
  const auto data = small_data();
  const auto r = train::train(small_config(), data);
  const auto rep = evaluate(r.state.params, small_data(2), 8);
  EXPECT_GE(rep.mae, 0.0);
  EXPECT_GE(rep.accuracy, 0.0);
  EXPECT_LE(rep.accuracy, 1.0);
  EXPECT_EQ(rep.cs, 1.0);  // four ranks: every error is within 5
  EXPECT_TRUE(rep.manifold_order_score.has_value());
  EXPECT_GE(rep.ordinal_constraint_rate, 0.0);
  EXPECT_GT(rep.raw_kl, 0.0);
}
