#pragma once

// Prototype-constrained alignment between label and feature OTDs, solved
// through per-class Lagrange multipliers. The closed-form reparameterisations
// weight every batch column j by exp(-/+ lambda_{c(j)}), where c(j) is the
// class of the sample in that column.

#include "ordcore/otd.hpp"
#include "ordcore/types.hpp"

#include <span>
#include <vector>

namespace ordcore::dual {

// Which batch samples belong to which of the N_K classes present in a batch.
// Groups are ordered by ascending class id, members by ascending batch index.
class ClassPartition {
 public:
  struct Group {
    ClassId class_id;
    std::vector<std::size_t> members;
  };

  explicit ClassPartition(std::vector<ClassId> column_classes);

  const std::vector<Group>& groups() const noexcept { return groups_; }
  std::span<const ClassId> column_classes() const noexcept { return column_classes_; }
  std::size_t batch_size() const noexcept { return column_classes_.size(); }
  std::size_t class_count() const noexcept { return groups_.size(); }
  std::vector<ClassId> present_classes() const;

 private:
  std::vector<ClassId> column_classes_;
  std::vector<Group> groups_;
};

double softplus(double x) noexcept;
double inverse_softplus(double y);
double sigmoid(double x) noexcept;

// One multiplier per dataset-wide class. The stored parameter is
// unconstrained; lambda = softplus(raw) is always strictly positive.
class DualVariables {
 public:
  // lambda_c = 1 for every class.
  explicit DualVariables(std::size_t class_count);

  static DualVariables from_raw(std::vector<double> raw);
  static DualVariables from_lambda(std::span<const double> lambda);

  std::size_t size() const noexcept { return raw_.size(); }
  double lambda(ClassId c) const;
  std::vector<double> lambdas() const;
  std::span<const double> raw() const noexcept { return raw_; }
  std::span<double> raw() noexcept { return raw_; }

 private:
  std::vector<double> raw_;
};

// exp(-|r - y_j|) normalised over every batch column. The prototype is not a
// batch member, so no column is zeroed.
Vector prototype_label_otd(RankLabel class_rank, std::span<const RankLabel> batch_labels);

// One prototype row per group of the partition, row k using ranks[class_id].
otd::TosetMatrix prototype_rows(const ClassPartition& partition,
                                std::span<const RankLabel> batch_labels,
                                std::span<const RankLabel> ranks);

// P~[k][j] = P[k][j] e^{-lambda_c(j)} / sum_s P[k][s] e^{-lambda_c(s)}
otd::TosetMatrix reparam_p(const otd::TosetMatrix& prototypes, const DualVariables& duals,
                           const ClassPartition& partition);

// Q~[u][j] = Q[u][j] e^{lambda_c(j)} / sum_s Q[u][s] e^{lambda_c(s)}
otd::TosetMatrix reparam_q(const otd::TosetMatrix& q, const DualVariables& duals,
                           const ClassPartition& partition);

// (1/N_K) sum_k (1/|U(k)|) sum_{u in U(k)} KL(P~_k || Q~_u).
//
// A per-sample row Q~_u has a structural zero in its own column u. That column
// is dropped from the pair (k, u) and P~_k renormalised over the remaining
// columns, which for uniform lambda turns the term into exactly
// KL(P_u || Q_u) with P_u the label OTD row of sample u. Any other support
// mismatch throws DivergenceOverflow.
double dual_kl_loss(const otd::TosetMatrix& p_tilde, const otd::TosetMatrix& q_tilde,
                    const ClassPartition& partition);

// -sum over present classes of lambda log lambda.
double entropy_reg(const DualVariables& duals, std::span<const ClassId> present_classes);

// L_OR + alpha L_dual + beta L_ent; throws NonFiniteLoss on non-finite input
// or result.
double total_loss(double l_or, double l_dual, double l_ent, double alpha, double beta);

// Max over classes of || P~_k - mean_{u in U(k)} Q~_u ||_1.
double constraint_residual(const Matrix& p_tilde, const Matrix& q_tilde,
                           const ClassPartition& partition);

struct DualGradients {
  double l_dual = 0.0;
  double l_ent = 0.0;
  Matrix features;           // d(alpha L_dual + beta L_ent) / dz, N_B x D
  std::vector<double> raw;   // same objective w.r.t. raw dual parameters, length C
};

// Value and analytic gradient of alpha L_dual + beta L_ent for one batch.
DualGradients dual_backward(const Matrix& features, const otd::TosetMatrix& prototypes,
                            const DualVariables& duals, const ClassPartition& partition,
                            double alpha, double beta);

// Unconstrained per-sample alignment (1/N_B) sum_i KL(P_i || Q_i).
double direct_kl_loss(const otd::TosetMatrix& p, const otd::TosetMatrix& q);

struct DirectKlGradients {
  double value = 0.0;
  Matrix features;
};

DirectKlGradients direct_kl_backward(const Matrix& features, std::span<const RankLabel> labels);

}  // namespace ordcore::dual
