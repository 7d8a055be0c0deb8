#pragma once

// Mini-batch training of encoder + head + dual variables on
//   L = L_OR + alpha * L_align + beta * L_ent
// with Adam, a step learning-rate schedule, and per-epoch diagnostics.

#include "ordcore/datagen.hpp"
#include "ordcore/dual.hpp"
#include "ordcore/encoder.hpp"
#include "ordcore/error.hpp"
#include "ordcore/metrics.hpp"
#include "ordcore/random.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ordcore::train {

enum class Sampling { Random, Stratified };
enum class Baseline { CrossEntropy, Sord };

// What the alignment term is:
//   Dual   - prototype-constrained KL between reparameterised P~ and Q~ plus
//            the entropy regulariser on the dual variables,
//   Direct - per-sample KL(P_i || Q_i) with no dual variables,
//   None   - baseline loss only.
enum class Alignment { Dual, Direct, None };

const char* to_string(Sampling s) noexcept;
const char* to_string(Baseline b) noexcept;
const char* to_string(Alignment a) noexcept;
Sampling sampling_from_string(const std::string& s);
Baseline baseline_from_string(const std::string& s);
Alignment alignment_from_string(const std::string& s);

struct TrainConfig {
  double alpha = 10.0;
  double beta = 1.0;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  double base_lr = 1e-4;
  double decay_factor = 0.1;
  std::size_t decay_period = 20;
  double weight_decay = 1e-4;
  std::optional<double> dual_lr;  // defaults to base_lr
  std::uint64_t seed = 0;
  Sampling sampling = Sampling::Random;
  Baseline baseline = Baseline::Sord;
  Alignment alignment = Alignment::Dual;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t feature_dim = 8;

  // Throws Configuration naming the violated bound.
  void validate() const;

  // Learning rate in effect during a 0-based epoch.
  double learning_rate(std::size_t epoch) const;
  double dual_learning_rate(std::size_t epoch) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double l_or = 0.0;
  double l_dual = 0.0;     // KL between reparameterised P~ and Q~ (always measured)
  double l_ent = 0.0;
  double raw_kl = 0.0;     // (1/N_B) sum_i KL(P_i || Q_i), always measured
  double residual = 0.0;   // prototype constraint residual at the current lambda
  double total = 0.0;
  std::vector<double> lambdas;
};

struct TrainState {
  encoder::EncoderParams params;
  dual::DualVariables duals{0};
  encoder::Adam net_optimizer;
  encoder::Adam dual_optimizer;
  std::vector<EpochRecord> history;
};

struct TrainResult {
  TrainState state;
  std::vector<std::string> warnings;
};

// Raised when a step produces a non-finite loss, gradient or parameter. The
// state is the last one whose every entry was finite.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& message, TrainState last_good)
      : Error(ErrorKind::NonFiniteLoss, message), last_good_(std::move(last_good)) {}
  const TrainState& last_good() const noexcept { return last_good_; }

 private:
  TrainState last_good_;
};

encoder::Architecture architecture_for(const TrainConfig& config, const datagen::Dataset& data);

// Fresh parameters and optimisers for a run, before any step.
TrainState initial_state(const TrainConfig& config, const datagen::Dataset& data);

// Batch index lists for one epoch. Random: a fresh permutation cut into
// consecutive batches, an incomplete final batch dropped. Stratified: one
// sample from each of min(N_B, C) distinct classes per batch, classes cycled
// deterministically and each class's samples drawn from its own shuffled
// queue.
std::vector<std::vector<std::size_t>> epoch_batches(const TrainConfig& config, const datagen::Dataset& data,
                                                    Rng& rng);

TrainResult train(const TrainConfig& config, const datagen::Dataset& data);

// Predictions use the expectation rule for MAE, CS and correlations and the
// argmax rule for accuracy.
metrics::EvalReport evaluate(const encoder::EncoderParams& params, const datagen::Dataset& data,
                             std::size_t batch_size, double cs_threshold = 5.0);

}  // namespace ordcore::train
