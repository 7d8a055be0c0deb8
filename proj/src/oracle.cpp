#include "ordcore/oracle.hpp"

#include "ordcore/error.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <sstream>

namespace ordcore::dual {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Scalar exp so that -inf maps to exactly 0 (the vectorised one can return
// a denormal).
Vector shifted_exp(const Vector& v, double top) {
  return v.unaryExpr([top](double x) { return std::exp(x - top); });
}

double lse(const Vector& v) {
  const double top = v.maxCoeff();
  if (top == -kInf) return top;
  return top + std::log(shifted_exp(v, top).sum());
}

Vector softmax(const Vector& v) {
  const double top = v.maxCoeff();
  Vector e = shifted_exp(v, top);
  return e / e.sum();
}

// log of a nonnegative row, zeros mapping to -inf.
Vector log_row(const Eigen::RowVectorXd& row) {
  Vector out(row.size());
  for (Eigen::Index j = 0; j < row.size(); ++j) out(j) = row(j) > 0.0 ? std::log(row(j)) : -kInf;
  return out;
}

// Dual of one class block restricted to a set of columns, as a function of
// the column multipliers mu:
//   g(mu) = -lse(log P - mu) - (1/m) sum_u lse(log Q_u + mu)
// grad g = P~ - mean Q~, and -hess g = Cov(P~) + (1/m) sum_u Cov(Q~_u).
struct ClassBlock {
  Vector log_p;                // over the block's columns
  std::vector<Vector> log_q;   // one per member

  double value(const Vector& mu) const {
    double g = -lse(log_p - mu);
    for (const auto& lq : log_q) g -= lse(lq + mu) / static_cast<double>(log_q.size());
    return g;
  }

  Vector p_tilde(const Vector& mu) const { return softmax(log_p - mu); }

  std::vector<Vector> q_tilde(const Vector& mu) const {
    std::vector<Vector> out;
    out.reserve(log_q.size());
    for (const auto& lq : log_q) out.push_back(softmax(lq + mu));
    return out;
  }

  // Gradient and negated Hessian in one pass.
  void derivatives(const Vector& mu, Vector& grad, Eigen::MatrixXd& neg_hess) const {
    const Vector p = p_tilde(mu);
    const auto m = static_cast<double>(log_q.size());
    grad = p;
    neg_hess = Eigen::MatrixXd(p.asDiagonal()) - p * p.transpose();
    for (const auto& q : q_tilde(mu)) {
      grad -= q / m;
      neg_hess += (Eigen::MatrixXd(q.asDiagonal()) - q * q.transpose()) / m;
    }
  }
};

// Maximises a concave dual whose only flat direction is the all-ones vector
// (in the reduced coordinates given by `lift`), pinning the last coordinate.
// `evaluate` returns the dual value, `derive` the reduced gradient and
// negated Hessian. Returns the iteration count or -1 on hitting the cap.
template <typename Evaluate, typename Derive>
int newton_ascent(Vector& x, const Evaluate& evaluate, const Derive& derive, double tolerance,
                  int max_iterations, double& final_residual) {
  const Eigen::Index n = x.size();
  Vector grad;
  Eigen::MatrixXd neg_hess;
  for (int it = 0; it < max_iterations; ++it) {
    derive(x, grad, neg_hess);
    final_residual = grad.cwiseAbs().sum();
    if (final_residual <= tolerance || n <= 1) return it;
    const Eigen::Index r = n - 1;
    Vector step = Vector::Zero(n);
    step.head(r) = neg_hess.topLeftCorner(r, r).ldlt().solve(grad.head(r));
    if (!step.allFinite()) return -1;
    const double base = evaluate(x);
    const double slope = grad.dot(step);
    double t = 1.0;
    Vector candidate = x + step;
    // Armijo backtracking; the slack term absorbs rounding once the gain is
    // at machine precision.
    while (evaluate(candidate) < base + 1e-4 * t * slope - 1e-15 * (1.0 + std::abs(base))) {
      t *= 0.5;
      if (t < 1e-12) break;
      candidate = x + t * step;
    }
    x = candidate;
  }
  derive(x, grad, neg_hess);
  final_residual = grad.cwiseAbs().sum();
  return final_residual <= tolerance ? max_iterations : -1;
}

void check_shapes(const otd::TosetMatrix& prototypes, const otd::TosetMatrix& q,
                  const ClassPartition& partition) {
  const auto nb = static_cast<Eigen::Index>(partition.batch_size());
  require(static_cast<std::size_t>(prototypes.rows()) == partition.class_count() && prototypes.cols() == nb,
          ErrorKind::Input, "prototype rows must be N_K x N_B for the partition");
  require(q.rows() == nb && q.cols() == nb, ErrorKind::Input, "Q must be N_B x N_B for the partition");
}

}  // namespace

double program_objective(const Matrix& p_tilde, const Matrix& q_tilde, const Matrix& prototypes,
                         const Matrix& q, const ClassPartition& partition) {
  auto kl = [](const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    return otd::kl_divergence({a.data(), static_cast<std::size_t>(a.size())},
                              {b.data(), static_cast<std::size_t>(b.size())});
  };
  double total = 0.0;
  Eigen::Index k = 0;
  for (const auto& group : partition.groups()) {
    double block = kl(p_tilde.row(k), prototypes.row(k));
    for (std::size_t u : group.members) {
      const auto ui = static_cast<Eigen::Index>(u);
      block += kl(q_tilde.row(ui), q.row(ui)) / static_cast<double>(group.members.size());
    }
    total += block;
    ++k;
  }
  return total / static_cast<double>(partition.class_count());
}

OracleSolution oracle_solve(const otd::TosetMatrix& prototypes, const otd::TosetMatrix& q,
                            const ClassPartition& partition, std::size_t class_count,
                            const OracleOptions& options) {
  check_shapes(prototypes, q, partition);
  require(partition.batch_size() <= 8, ErrorKind::Input, "oracle_solve is limited to N_B <= 8");
  const auto nb = static_cast<Eigen::Index>(partition.batch_size());
  const auto nk = static_cast<Eigen::Index>(partition.class_count());

  OracleSolution sol;
  sol.p_tilde = Matrix::Zero(nk, nb);
  sol.q_tilde = Matrix::Zero(nb, nb);
  sol.multipliers = Matrix::Constant(nk, nb, kInf);

  Eigen::Index k = 0;
  for (const auto& group : partition.groups()) {
    // A column can carry mass only if the prototype and at least one member
    // row put mass on it; everything else is pinned to zero.
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < nb; ++j) {
      bool member_mass = false;
      for (std::size_t u : group.members) member_mass |= q(static_cast<Eigen::Index>(u), j) > 0.0;
      if (member_mass && prototypes(k, j) > 0.0) active.push_back(j);
    }
    require(!active.empty(), ErrorKind::OracleFailure,
            "class " + std::to_string(group.class_id) + " has no feasible column");
    const auto na = static_cast<Eigen::Index>(active.size());

    ClassBlock block;
    block.log_p = Vector(na);
    for (Eigen::Index a = 0; a < na; ++a) block.log_p(a) = std::log(prototypes(k, active[a]));
    for (std::size_t u : group.members) {
      Vector lq(na);
      for (Eigen::Index a = 0; a < na; ++a) {
        const double v = q(static_cast<Eigen::Index>(u), active[a]);
        lq(a) = v > 0.0 ? std::log(v) : -kInf;
      }
      block.log_q.push_back(std::move(lq));
    }

    Vector mu = Vector::Zero(na);
    double residual = 0.0;
    const int iters = newton_ascent(
        mu, [&](const Vector& x) { return block.value(x); },
        [&](const Vector& x, Vector& g, Eigen::MatrixXd& h) { block.derivatives(x, g, h); },
        options.tolerance, options.max_iterations, residual);
    if (iters < 0) {
      std::ostringstream msg;
      msg << "oracle did not converge for class " << group.class_id << ": residual " << residual;
      fail(ErrorKind::OracleFailure, msg.str());
    }
    sol.iterations += iters;

    mu.array() -= mu.mean();
    const Vector p = block.p_tilde(mu);
    const auto qs = block.q_tilde(mu);
    for (Eigen::Index a = 0; a < na; ++a) {
      sol.p_tilde(k, active[a]) = p(a);
      sol.multipliers(k, active[a]) = mu(a);
    }
    for (std::size_t i = 0; i < group.members.size(); ++i) {
      for (Eigen::Index a = 0; a < na; ++a) {
        sol.q_tilde(static_cast<Eigen::Index>(group.members[i]), active[a]) = qs[i](a);
      }
    }
    ++k;
  }

  sol.residual = constraint_residual(sol.p_tilde, sol.q_tilde, partition);
  sol.objective = program_objective(sol.p_tilde, sol.q_tilde, prototypes.entries(), q.entries(), partition);
  sol.lambda_star = restricted_dual_ascent(prototypes, q, partition, class_count, options);
  return sol;
}

DualVariables restricted_dual_ascent(const otd::TosetMatrix& prototypes, const otd::TosetMatrix& q,
                                     const ClassPartition& partition, std::size_t class_count,
                                     const OracleOptions& options) {
  check_shapes(prototypes, q, partition);
  const auto nb = static_cast<Eigen::Index>(partition.batch_size());
  const auto present = partition.present_classes();
  for (ClassId c : present) {
    require(c < class_count, ErrorKind::Configuration,
            "class " + std::to_string(c) + " has no dual variable");
  }
  const auto nv = static_cast<Eigen::Index>(present.size());

  // Column j's multiplier is variable index var_of[j].
  std::vector<Eigen::Index> var_of(static_cast<std::size_t>(nb));
  for (Eigen::Index v = 0; v < nv; ++v) {
    for (std::size_t j : partition.groups()[static_cast<std::size_t>(v)].members) {
      var_of[j] = v;
    }
  }
  auto lift = [&](const Vector& lam) {
    Vector mu(nb);
    for (Eigen::Index j = 0; j < nb; ++j) mu(j) = lam(var_of[static_cast<std::size_t>(j)]);
    return mu;
  };

  std::vector<ClassBlock> blocks;
  Eigen::Index k = 0;
  for (const auto& group : partition.groups()) {
    ClassBlock block;
    block.log_p = log_row(prototypes.entries().row(k));
    for (std::size_t u : group.members) block.log_q.push_back(log_row(q.entries().row(static_cast<Eigen::Index>(u))));
    blocks.push_back(std::move(block));
    ++k;
  }
  const double weight = 1.0 / static_cast<double>(blocks.size());

  auto evaluate = [&](const Vector& lam) {
    const Vector mu = lift(lam);
    double g = 0.0;
    for (const auto& b : blocks) g += weight * b.value(mu);
    return g;
  };
  auto derive = [&](const Vector& lam, Vector& grad, Eigen::MatrixXd& neg_hess) {
    const Vector mu = lift(lam);
    Vector g_full = Vector::Zero(nb);
    Eigen::MatrixXd h_full = Eigen::MatrixXd::Zero(nb, nb);
    Vector g;
    Eigen::MatrixXd h;
    for (const auto& b : blocks) {
      b.derivatives(mu, g, h);
      g_full += weight * g;
      h_full += weight * h;
    }
    Eigen::MatrixXd lift_matrix = Eigen::MatrixXd::Zero(nb, nv);
    for (Eigen::Index j = 0; j < nb; ++j) lift_matrix(j, var_of[static_cast<std::size_t>(j)]) = 1.0;
    grad = lift_matrix.transpose() * g_full;
    neg_hess = lift_matrix.transpose() * h_full * lift_matrix;
  };

  Vector lam = Vector::Zero(nv);
  double residual = 0.0;
  if (newton_ascent(lam, evaluate, derive, options.tolerance, options.max_iterations, residual) < 0) {
    std::ostringstream msg;
    msg << "restricted dual ascent did not converge: aggregated residual " << residual;
    fail(ErrorKind::OracleFailure, msg.str());
  }
  lam.array() += 1.0 - lam.minCoeff();

  std::vector<double> lambda(class_count, 1.0);
  for (Eigen::Index v = 0; v < nv; ++v) lambda[present[static_cast<std::size_t>(v)]] = lam(v);
  return DualVariables::from_lambda(lambda);
}

PrimalSolution primal_mirror_descent(const otd::TosetMatrix& prototypes, const otd::TosetMatrix& q,
                                     const ClassPartition& partition, double step, int max_iterations,
                                     double tolerance) {
  check_shapes(prototypes, q, partition);
  const auto nb = static_cast<Eigen::Index>(partition.batch_size());
  PrimalSolution out;
  out.p_tilde = Matrix::Zero(static_cast<Eigen::Index>(partition.class_count()), nb);
  out.q_tilde = q.entries();

  Eigen::Index k = 0;
  for (const auto& group : partition.groups()) {
    const auto m = static_cast<double>(group.members.size());
    int it = 0;
    for (; it < max_iterations; ++it) {
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(nb);
      for (std::size_t u : group.members) mean += out.q_tilde.row(static_cast<Eigen::Index>(u));
      mean /= m;
      double change = 0.0;
      for (std::size_t member : group.members) {
        const auto u = static_cast<Eigen::Index>(member);
        Eigen::RowVectorXd next = Eigen::RowVectorXd::Zero(nb);
        double top = -kInf;
        Eigen::RowVectorXd logits = Eigen::RowVectorXd::Constant(nb, -kInf);
        for (Eigen::Index j = 0; j < nb; ++j) {
          const double cur = out.q_tilde(u, j);
          if (q(u, j) == 0.0 || cur == 0.0) continue;
          const double grad = std::log(mean(j) / prototypes(k, j)) + std::log(cur / q(u, j));
          logits(j) = std::log(cur) - step * grad;
          top = std::max(top, logits(j));
        }
        for (Eigen::Index j = 0; j < nb; ++j) {
          if (logits(j) > -kInf) next(j) = std::exp(logits(j) - top);
        }
        next /= next.sum();
        change = std::max(change, (next - out.q_tilde.row(u)).cwiseAbs().maxCoeff());
        out.q_tilde.row(u) = next;
      }
      if (change <= tolerance) break;
    }
    out.iterations = std::max(out.iterations, it);
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(nb);
    for (std::size_t u : group.members) mean += out.q_tilde.row(static_cast<Eigen::Index>(u));
    out.p_tilde.row(k) = mean / m;
    ++k;
  }
  out.objective = program_objective(out.p_tilde, out.q_tilde, prototypes.entries(), q.entries(), partition);
  return out;
}

}  // namespace ordcore::dual

namespace ordcore::dual {

OracleTrial random_trial(Rng& rng, std::size_t max_batch, std::size_t max_classes) {
  require(max_batch >= 2 && max_classes >= 1, ErrorKind::Input, "random_trial needs max_batch >= 2");
  OracleTrial t;
  const std::size_t present = 1 + rng.below(std::min(max_classes, max_batch));
  const std::size_t nb = std::max<std::size_t>(present, 2) + rng.below(max_batch - std::max<std::size_t>(present, 2) + 1);
  t.class_count = present;
  double r = 0.0;
  for (std::size_t c = 0; c < present; ++c) {
    r += rng.uniform(0.5, 2.0);
    t.ranks.push_back(r);
  }
  for (std::size_t c = 0; c < present; ++c) t.classes.push_back(c);
  while (t.classes.size() < nb) t.classes.push_back(rng.below(present));
  rng.shuffle(std::span<ClassId>(t.classes));
  for (ClassId c : t.classes) t.labels.push_back(t.ranks[c]);
  const auto dim = static_cast<Eigen::Index>(2 + rng.below(2));
  t.features.resize(static_cast<Eigen::Index>(nb), dim);
  for (Eigen::Index i = 0; i < t.features.size(); ++i) t.features.data()[i] = rng.normal();
  return t;
}

double TrialComparison::worst() const {
  return std::max({p_gap, q_gap, oracle_residual, closed_form_residual});
}

TrialComparison compare_closed_forms(const OracleTrial& trial, bool corrupt) {
  const ClassPartition partition(trial.classes);
  const auto prototypes = prototype_rows(partition, trial.labels, trial.ranks);
  const auto q = otd::feature_otd(trial.features);
  const OracleSolution sol = oracle_solve(prototypes, q, partition, trial.class_count);

  std::vector<double> lambda = sol.lambda_star.lambdas();
  if (corrupt) {
    for (double& l : lambda) l = 1.0 / l;
  }
  const auto duals = DualVariables::from_lambda(lambda);
  TrialComparison cmp;
  cmp.oracle_p = sol.p_tilde;
  cmp.oracle_q = sol.q_tilde;
  cmp.closed_p = reparam_p(prototypes, duals, partition).entries();
  cmp.closed_q = reparam_q(q, duals, partition).entries();
  cmp.lambda_star = sol.lambda_star.lambdas();
  cmp.p_gap = (cmp.closed_p - cmp.oracle_p).cwiseAbs().maxCoeff();
  cmp.q_gap = (cmp.closed_q - cmp.oracle_q).cwiseAbs().maxCoeff();
  cmp.oracle_residual = sol.residual;
  cmp.closed_form_residual = constraint_residual(cmp.closed_p, cmp.closed_q, partition);
  return cmp;
}

}  // namespace ordcore::dual
