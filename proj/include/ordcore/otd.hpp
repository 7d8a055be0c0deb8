#pragma once

// Ordinal toset distributions (OTDs): row-stochastic neighbour-probability
// matrices built from exp(-distance) over a batch of labels or features, plus
// the diagnostics that check ordinal structure directly.

#include "ordcore/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace ordcore::otd {

enum class TosetKind { LabelP, FeatureQ, PrototypeP, ReparamP, ReparamQ };

const char* to_string(TosetKind kind) noexcept;

// Per-sample kinds have a structurally zero diagonal (a sample never picks
// itself as a neighbour).
constexpr bool is_per_sample(TosetKind kind) noexcept {
  return kind == TosetKind::LabelP || kind == TosetKind::FeatureQ ||
         kind == TosetKind::ReparamQ;
}

inline constexpr double kRowSumTolerance = 1e-9;

// A row-stochastic matrix tagged with what it represents. Construction
// validates the simplex invariants and throws InvariantViolation otherwise.
class TosetMatrix {
 public:
  TosetMatrix(Matrix entries, TosetKind kind);

  const Matrix& entries() const noexcept { return entries_; }
  TosetKind kind() const noexcept { return kind_; }
  Eigen::Index rows() const noexcept { return entries_.rows(); }
  Eigen::Index cols() const noexcept { return entries_.cols(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }

 private:
  Matrix entries_;
  TosetKind kind_;
};

// Throws InvariantViolation naming the first broken simplex property.
void validate_rows(const Matrix& entries, bool zero_diagonal);

// Throws Input if the batch is empty, has zero width or carries non-finite
// entries.
void validate_features(const Matrix& features);

Matrix pairwise_distance(const Matrix& vectors);

// P[i][j] = exp(-|y_i - y_j|) normalised over j != i; zero diagonal.
TosetMatrix label_otd(std::span<const RankLabel> labels);

// Q[i][j] = exp(-||z_i - z_j||) normalised over j != i; zero diagonal.
TosetMatrix feature_otd(const Matrix& features);

// Gradient of a scalar loss w.r.t. the feature rows, given dL/dQ.
Matrix feature_otd_backward(const Matrix& features, const Matrix& upstream);

// Same chain, but starting from dL/ds where s_ij = -||z_i - z_j|| is the
// pre-normalisation logit of Q. Losses that are naturally written in log-Q
// use this entry point and never divide by Q.
Matrix feature_otd_backward_logits(const Matrix& features, const Matrix& upstream_logits);

// KL(p || q) over matching entries. Terms with p == 0 contribute 0; p > 0
// facing q == 0 throws DivergenceOverflow.
double kl_divergence(std::span<const double> p, std::span<const double> q);

struct PropertyCheck {
  std::string name;
  bool passed = true;
  std::string counterexample;  // empty when passed
};

struct TosetReport {
  std::vector<PropertyCheck> checks;
  bool all_passed() const noexcept;
};

// Checks the total-order axioms on the labels, the same axioms on every
// induced distance set {|y_i - y_j|}_j, and the ordinal triple constraint on
// the labels and on each distance set.
TosetReport check_toset(std::span<const RankLabel> labels);

// Fraction of label-ordered triples (a, b, c) whose features satisfy
// ||z_a - z_c|| >= max(||z_a - z_b||, ||z_b - z_c||). Triples are taken in
// sorted-label order with index as tie-break, each unordered triple once.
double ordinal_constraint_rate(const Matrix& features, std::span<const RankLabel> labels);

}  // namespace ordcore::otd
