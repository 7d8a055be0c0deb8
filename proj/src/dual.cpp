#include "ordcore/dual.hpp"

#include "ordcore/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace ordcore::dual {

ClassPartition::ClassPartition(std::vector<ClassId> column_classes)
    : column_classes_(std::move(column_classes)) {
  require(!column_classes_.empty(), ErrorKind::DegenerateBatch, "class partition of an empty batch");
  std::map<ClassId, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < column_classes_.size(); ++i) by_class[column_classes_[i]].push_back(i);
  groups_.reserve(by_class.size());
  for (auto& [cls, members] : by_class) groups_.push_back(Group{cls, std::move(members)});
}

std::vector<ClassId> ClassPartition::present_classes() const {
  std::vector<ClassId> out;
  out.reserve(groups_.size());
  for (const auto& g : groups_) out.push_back(g.class_id);
  return out;
}

double softplus(double x) noexcept {
  // log(1 + e^x) without overflow for large x; floored so that lambda stays
  // strictly positive when e^x underflows.
  const double y = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return std::max(y, std::numeric_limits<double>::min());
}

double inverse_softplus(double y) {
  require(y > 0.0 && std::isfinite(y), ErrorKind::InvariantViolation,
          "inverse softplus needs a finite positive value");
  // log(e^y - 1) = y + log(1 - e^{-y})
  return y + std::log(-std::expm1(-y));
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

DualVariables::DualVariables(std::size_t class_count)
    : raw_(class_count, inverse_softplus(1.0)) {}

DualVariables DualVariables::from_raw(std::vector<double> raw) {
  for (double r : raw) {
    require(std::isfinite(r), ErrorKind::InvariantViolation, "raw dual parameter is not finite");
  }
  DualVariables out(0);
  out.raw_ = std::move(raw);
  return out;
}

DualVariables DualVariables::from_lambda(std::span<const double> lambda) {
  std::vector<double> raw;
  raw.reserve(lambda.size());
  for (double l : lambda) raw.push_back(inverse_softplus(l));
  return from_raw(std::move(raw));
}

double DualVariables::lambda(ClassId c) const {
  require(c < raw_.size(), ErrorKind::Configuration,
          "class " + std::to_string(c) + " has no dual variable (C = " + std::to_string(raw_.size()) + ")");
  return softplus(raw_[c]);
}

std::vector<double> DualVariables::lambdas() const {
  std::vector<double> out;
  out.reserve(raw_.size());
  for (double r : raw_) out.push_back(softplus(r));
  return out;
}

Vector prototype_label_otd(RankLabel class_rank, std::span<const RankLabel> batch_labels) {
  require(!batch_labels.empty(), ErrorKind::DegenerateBatch, "prototype OTD over an empty batch");
  const auto n = static_cast<Eigen::Index>(batch_labels.size());
  Vector logits(n);
  for (Eigen::Index j = 0; j < n; ++j) logits(j) = -std::abs(class_rank - batch_labels[static_cast<std::size_t>(j)]);
  require(logits.allFinite(), ErrorKind::Input, "prototype OTD over non-finite labels");
  const double top = logits.maxCoeff();
  Vector row = (logits.array() - top).exp().matrix();
  return row / row.sum();
}

otd::TosetMatrix prototype_rows(const ClassPartition& partition,
                                std::span<const RankLabel> batch_labels,
                                std::span<const RankLabel> ranks) {
  require(batch_labels.size() == partition.batch_size(), ErrorKind::Input,
          "batch labels and partition differ in size");
  require(batch_labels.size() >= 2, ErrorKind::DegenerateBatch, "prototype rows need N_B >= 2");
  Matrix out(static_cast<Eigen::Index>(partition.class_count()),
             static_cast<Eigen::Index>(batch_labels.size()));
  Eigen::Index k = 0;
  for (const auto& group : partition.groups()) {
    require(group.class_id < ranks.size(), ErrorKind::Configuration,
            "class " + std::to_string(group.class_id) + " is outside the rank vocabulary");
    out.row(k++) = prototype_label_otd(ranks[group.class_id], batch_labels).transpose();
  }
  return otd::TosetMatrix(std::move(out), otd::TosetKind::PrototypeP);
}

namespace {

Vector column_multipliers(const DualVariables& duals, const ClassPartition& partition) {
  const auto classes = partition.column_classes();
  Vector mu(static_cast<Eigen::Index>(classes.size()));
  for (std::size_t j = 0; j < classes.size(); ++j) {
    if (classes[j] >= duals.size()) {
      fail(ErrorKind::Configuration, "batch column " + std::to_string(j) + " has class " +
                                         std::to_string(classes[j]) + " with no dual variable");
    }
    mu(static_cast<Eigen::Index>(j)) = duals.lambda(classes[j]);
  }
  return mu;
}

// Rows of `base` reweighted by exp(sign * mu_j) and renormalised. The shift by
// the extreme multiplier keeps every exponent <= 0. With all multipliers equal
// the common factor cancels and rows are returned untouched.
Matrix reweight_rows(const Matrix& base, const Vector& mu, double sign) {
  if (mu.size() == 0 || (mu.array() == mu(0)).all()) return base;
  const double ref = sign > 0 ? mu.maxCoeff() : mu.minCoeff();
  const Vector factor = (sign * (mu.array() - ref)).exp().matrix();
  Matrix out = base;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) = out.row(i).cwiseProduct(factor.transpose());
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

double log_sum_exp(const Vector& v, Eigen::Index skip) {
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (j != skip) top = std::max(top, v(j));
  }
  if (top == -std::numeric_limits<double>::infinity()) return top;
  double sum = 0.0;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (j != skip) sum += std::exp(v(j) - top);
  }
  return top + std::log(sum);
}

}  // namespace

otd::TosetMatrix reparam_p(const otd::TosetMatrix& prototypes, const DualVariables& duals,
                           const ClassPartition& partition) {
  require(static_cast<std::size_t>(prototypes.rows()) == partition.class_count() &&
              static_cast<std::size_t>(prototypes.cols()) == partition.batch_size(),
          ErrorKind::Input, "prototype rows must be N_K x N_B for the partition");
  const Vector mu = column_multipliers(duals, partition);
  return otd::TosetMatrix(reweight_rows(prototypes.entries(), mu, -1.0), otd::TosetKind::ReparamP);
}

otd::TosetMatrix reparam_q(const otd::TosetMatrix& q, const DualVariables& duals,
                           const ClassPartition& partition) {
  require(static_cast<std::size_t>(q.rows()) == partition.batch_size() &&
              static_cast<std::size_t>(q.cols()) == partition.batch_size(),
          ErrorKind::Input, "Q must be N_B x N_B for the partition");
  const Vector mu = column_multipliers(duals, partition);
  return otd::TosetMatrix(reweight_rows(q.entries(), mu, +1.0), otd::TosetKind::ReparamQ);
}

double dual_kl_loss(const otd::TosetMatrix& p_tilde, const otd::TosetMatrix& q_tilde,
                    const ClassPartition& partition) {
  const auto nb = static_cast<Eigen::Index>(partition.batch_size());
  require(static_cast<std::size_t>(p_tilde.rows()) == partition.class_count() && p_tilde.cols() == nb,
          ErrorKind::Input, "P~ must be N_K x N_B for the partition");
  require(q_tilde.rows() == nb && q_tilde.cols() == nb, ErrorKind::Input,
          "Q~ must be N_B x N_B for the partition");

  double total = 0.0;
  Eigen::Index k = 0;
  std::vector<double> p_row, q_row;
  for (const auto& group : partition.groups()) {
    double class_sum = 0.0;
    for (std::size_t member : group.members) {
      const auto u = static_cast<Eigen::Index>(member);
      const bool drop_self = q_tilde(u, u) == 0.0;
      p_row.clear();
      q_row.clear();
      for (Eigen::Index j = 0; j < nb; ++j) {
        if (drop_self && j == u) continue;
        p_row.push_back(p_tilde(k, j));
        q_row.push_back(q_tilde(u, j));
      }
      double mass = 0.0;
      for (double v : p_row) mass += v;
      require(mass > 0.0, ErrorKind::DivergenceOverflow,
              "prototype row has no mass outside sample " + std::to_string(member));
      for (double& v : p_row) v /= mass;
      class_sum += otd::kl_divergence(p_row, q_row);
    }
    total += class_sum / static_cast<double>(group.members.size());
    ++k;
  }
  return total / static_cast<double>(partition.class_count());
}

double entropy_reg(const DualVariables& duals, std::span<const ClassId> present_classes) {
  double sum = 0.0;
  for (ClassId c : present_classes) {
    const double l = duals.lambda(c);
    require(l > 0.0, ErrorKind::InvariantViolation, "dual variable is not positive");
    sum -= l * std::log(l);
  }
  return sum;
}

double total_loss(double l_or, double l_dual, double l_ent, double alpha, double beta) {
  const double total = l_or + alpha * l_dual + beta * l_ent;
  if (!std::isfinite(l_or) || !std::isfinite(l_dual) || !std::isfinite(l_ent) ||
      !std::isfinite(alpha) || !std::isfinite(beta) || !std::isfinite(total)) {
    std::ostringstream msg;
    msg << "non-finite loss: L_OR=" << l_or << " L_dual=" << l_dual << " L_ent=" << l_ent;
    fail(ErrorKind::NonFiniteLoss, msg.str());
  }
  return total;
}

double constraint_residual(const Matrix& p_tilde, const Matrix& q_tilde, const ClassPartition& partition) {
  const auto nb = static_cast<Eigen::Index>(partition.batch_size());
  require(static_cast<std::size_t>(p_tilde.rows()) == partition.class_count() && p_tilde.cols() == nb &&
              q_tilde.rows() == nb && q_tilde.cols() == nb,
          ErrorKind::Input, "residual arguments do not match the partition");
  double worst = 0.0;
  Eigen::Index k = 0;
  for (const auto& group : partition.groups()) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(nb);
    for (std::size_t u : group.members) mean += q_tilde.row(static_cast<Eigen::Index>(u));
    mean /= static_cast<double>(group.members.size());
    worst = std::max(worst, (p_tilde.row(k) - mean).cwiseAbs().sum());
    ++k;
  }
  return worst;
}

DualGradients dual_backward(const Matrix& features, const otd::TosetMatrix& prototypes,
                            const DualVariables& duals, const ClassPartition& partition,
                            double alpha, double beta) {
  otd::validate_features(features);
  const auto nb = static_cast<Eigen::Index>(partition.batch_size());
  require(features.rows() == nb, ErrorKind::Input, "features and partition differ in batch size");
  require(nb >= 2, ErrorKind::DegenerateBatch, "dual loss needs N_B >= 2");
  require(static_cast<std::size_t>(prototypes.rows()) == partition.class_count() && prototypes.cols() == nb,
          ErrorKind::Input, "prototype rows must be N_K x N_B for the partition");

  const Vector mu = column_multipliers(duals, partition);
  const Matrix logits = -otd::pairwise_distance(features);
  const auto n_k = static_cast<double>(partition.class_count());

  DualGradients out;
  Matrix logit_grad = Matrix::Zero(nb, nb);
  Vector mu_grad = Vector::Zero(nb);
  Vector a(nb), b(nb), log_p(nb), log_q(nb);

  Eigen::Index k = 0;
  for (const auto& group : partition.groups()) {
    const double weight = 1.0 / (n_k * static_cast<double>(group.members.size()));
    for (Eigen::Index j = 0; j < nb; ++j) a(j) = std::log(prototypes(k, j)) - mu(j);
    for (std::size_t member : group.members) {
      const auto u = static_cast<Eigen::Index>(member);
      for (Eigen::Index j = 0; j < nb; ++j) b(j) = logits(u, j) + mu(j);
      const double lse_a = log_sum_exp(a, u);
      const double lse_b = log_sum_exp(b, u);
      double kl = 0.0;
      for (Eigen::Index j = 0; j < nb; ++j) {
        if (j == u) continue;
        log_p(j) = a(j) - lse_a;
        log_q(j) = b(j) - lse_b;
        const double p = std::exp(log_p(j));
        if (p > 0.0) kl += p * (log_p(j) - log_q(j));
      }
      out.l_dual += weight * kl;
      for (Eigen::Index j = 0; j < nb; ++j) {
        if (j == u) continue;
        const double p = std::exp(log_p(j));
        const double q = std::exp(log_q(j));
        logit_grad(u, j) += alpha * weight * (q - p);
        const double through_p = p > 0.0 ? -p * ((log_p(j) - log_q(j)) - kl) : 0.0;
        mu_grad(j) += alpha * weight * (through_p + q - p);
      }
    }
    ++k;
  }

  out.features = otd::feature_otd_backward_logits(features, logit_grad);
  out.raw.assign(duals.size(), 0.0);
  const auto classes = partition.column_classes();
  for (std::size_t j = 0; j < classes.size(); ++j) out.raw[classes[j]] += mu_grad(static_cast<Eigen::Index>(j));
  const auto present = partition.present_classes();
  out.l_ent = entropy_reg(duals, present);
  for (ClassId c : present) {
    const double l = duals.lambda(c);
    out.raw[c] += beta * -(std::log(l) + 1.0);
  }
  for (std::size_t c = 0; c < out.raw.size(); ++c) out.raw[c] *= sigmoid(duals.raw()[c]);
  return out;
}

double direct_kl_loss(const otd::TosetMatrix& p, const otd::TosetMatrix& q) {
  require(p.rows() == q.rows() && p.cols() == q.cols() && p.rows() >= 2, ErrorKind::Input,
          "direct KL needs matching N_B x N_B matrices");
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const Eigen::RowVectorXd pr = p.entries().row(i);
    const Eigen::RowVectorXd qr = q.entries().row(i);
    total += otd::kl_divergence({pr.data(), static_cast<std::size_t>(pr.size())},
                                {qr.data(), static_cast<std::size_t>(qr.size())});
  }
  return total / static_cast<double>(p.rows());
}

DirectKlGradients direct_kl_backward(const Matrix& features, std::span<const RankLabel> labels) {
  const auto p = otd::label_otd(labels);
  const auto q = otd::feature_otd(features);
  require(p.rows() == q.rows(), ErrorKind::Input, "features and labels are not aligned");
  const auto n = q.rows();
  DirectKlGradients out;
  out.value = direct_kl_loss(p, q);
  // d KL(P_i || softmax(s_i)) / d s_ij = Q_ij - P_ij
  const Matrix logit_grad = (q.entries() - p.entries()) / static_cast<double>(n);
  out.features = otd::feature_otd_backward_logits(features, logit_grad);
  return out;
}

}  // namespace ordcore::dual
