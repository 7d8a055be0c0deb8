#pragma once

// The ordinal-regression term L_OR: cross-entropy and SORD soft-label losses
// over the linear head's logits, and the prediction rules used for metrics.

#include "ordcore/types.hpp"

#include <span>

namespace ordcore::baselines {

struct LossWithGradient {
  double value = 0.0;
  Matrix logits;  // dL/dlogits, same shape as the logits
};

Matrix softmax_rows(const Matrix& logits);

// Mean negative log-softmax of the true class. Classes are zero-based indices
// into the rank vocabulary.
LossWithGradient cross_entropy(const Matrix& logits, std::span<const ClassId> classes);

// target_c proportional to exp(-|y - r_c|).
Vector sord_targets(RankLabel label, std::span<const RankLabel> ranks);

// One target row per label.
Matrix sord_target_matrix(std::span<const RankLabel> labels, std::span<const RankLabel> ranks);

// Mean over samples of -sum_c target_c log softmax(logits)_c.
LossWithGradient sord_loss(const Matrix& logits, const Matrix& targets);

enum class PredictMode { Argmax, Expectation };

std::vector<double> predict(const Matrix& logits, std::span<const RankLabel> ranks, PredictMode mode);

}  // namespace ordcore::baselines
