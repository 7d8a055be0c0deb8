#include "ordcore/baselines.hpp"

#include "ordcore/error.hpp"

#include <cmath>

namespace ordcore::baselines {

namespace {

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    const double lse = top + std::log((logits.row(i).array() - top).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

void check_logits(const Matrix& logits) {
  require(logits.rows() >= 1 && logits.cols() >= 1, ErrorKind::Input, "empty logits");
  require(logits.allFinite(), ErrorKind::Input, "logits contain non-finite entries");
}

}  // namespace

Matrix softmax_rows(const Matrix& logits) { return log_softmax_rows(logits).array().exp().matrix(); }

LossWithGradient cross_entropy(const Matrix& logits, std::span<const ClassId> classes) {
  check_logits(logits);
  require(static_cast<Eigen::Index>(classes.size()) == logits.rows(), ErrorKind::Input,
          "logits and labels are not aligned");
  const Matrix log_prob = log_softmax_rows(logits);
  const auto n = static_cast<double>(logits.rows());
  LossWithGradient out;
  out.logits = log_prob.array().exp().matrix() / n;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const ClassId c = classes[static_cast<std::size_t>(i)];
    require(c < static_cast<ClassId>(logits.cols()), ErrorKind::Input,
            "label class " + std::to_string(c) + " out of range");
    out.value -= log_prob(i, static_cast<Eigen::Index>(c)) / n;
    out.logits(i, static_cast<Eigen::Index>(c)) -= 1.0 / n;
  }
  return out;
}

Vector sord_targets(RankLabel label, std::span<const RankLabel> ranks) {
  require(!ranks.empty(), ErrorKind::Input, "SORD targets need at least one rank");
  Vector logits(static_cast<Eigen::Index>(ranks.size()));
  for (std::size_t c = 0; c < ranks.size(); ++c) logits(static_cast<Eigen::Index>(c)) = -std::abs(label - ranks[c]);
  const double top = logits.maxCoeff();
  Vector t = (logits.array() - top).exp().matrix();
  return t / t.sum();
}

Matrix sord_target_matrix(std::span<const RankLabel> labels, std::span<const RankLabel> ranks) {
  Matrix out(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(ranks.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = sord_targets(labels[i], ranks).transpose();
  return out;
}

LossWithGradient sord_loss(const Matrix& logits, const Matrix& targets) {
  check_logits(logits);
  require(targets.rows() == logits.rows() && targets.cols() == logits.cols(), ErrorKind::Input,
          "logits and SORD targets differ in shape");
  const Matrix log_prob = log_softmax_rows(logits);
  const auto n = static_cast<double>(logits.rows());
  LossWithGradient out;
  out.value = -(targets.cwiseProduct(log_prob)).sum() / n;
  // d/dlogits of -sum_c t_c log softmax_c = softmax * sum(t) - t
  Matrix grad(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    grad.row(i) = log_prob.row(i).array().exp() * targets.row(i).sum() - targets.row(i).array();
  }
  out.logits = grad / n;
  return out;
}

std::vector<double> predict(const Matrix& logits, std::span<const RankLabel> ranks, PredictMode mode) {
  check_logits(logits);
  require(static_cast<Eigen::Index>(ranks.size()) == logits.cols(), ErrorKind::Input,
          "logit width does not match the rank vocabulary");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(logits.rows()));
  if (mode == PredictMode::Argmax) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      Eigen::Index best = 0;
      logits.row(i).maxCoeff(&best);
      out.push_back(ranks[static_cast<std::size_t>(best)]);
    }
    return out;
  }
  const Matrix prob = softmax_rows(logits);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double e = 0.0;
    for (std::size_t c = 0; c < ranks.size(); ++c) e += prob(i, static_cast<Eigen::Index>(c)) * ranks[c];
    out.push_back(e);
  }
  return out;
}

}  // namespace ordcore::baselines
