#pragma once

// Numerical solvers for the prototype-constrained program
//
//   min  (1/N_K) sum_k [ KL(P~_k || P_k) + (1/|U(k)|) sum_u KL(Q~_u || Q_u) ]
//   s.t. P~_k = (1/|U(k)|) sum_{u in U(k)} Q~_u        for every class k,
//
// used to check the closed-form reparameterisations. Test scale only.

#include "ordcore/dual.hpp"
#include "ordcore/random.hpp"

namespace ordcore::dual {

struct OracleOptions {
  double tolerance = 1e-12;     // L1 constraint residual per class
  int max_iterations = 200;     // Newton iterations per class
};

struct OracleSolution {
  Matrix p_tilde;       // N_K x N_B primal minimiser
  Matrix q_tilde;       // N_B x N_B primal minimiser
  // Per-class, per-column multipliers of the full vector constraint, gauge
  // fixed to zero mean over the class's active columns. Columns forced to
  // zero mass (a singleton class's own column) hold +infinity.
  Matrix multipliers;
  // Column-class multipliers maximising the dual restricted to
  // mu_{k,j} = lambda_{c(j)}; the form the closed-form reparameterisations use.
  DualVariables lambda_star{0};
  double objective = 0.0;
  double residual = 0.0;
  int iterations = 0;
};

// Objective of the program above at (P~, Q~); no constraint term.
double program_objective(const Matrix& p_tilde, const Matrix& q_tilde, const Matrix& prototypes,
                         const Matrix& q, const ClassPartition& partition);

// Dual Newton ascent with the exact per-class vector multipliers. Throws
// OracleFailure with the final residual if the iteration cap is reached.
OracleSolution oracle_solve(const otd::TosetMatrix& prototypes, const otd::TosetMatrix& q,
                            const ClassPartition& partition, std::size_t class_count,
                            const OracleOptions& options = {});

// Newton ascent on the dual restricted to column-class multipliers. The gauge
// is fixed so that the smallest present multiplier is 1; absent classes stay
// at 1.
DualVariables restricted_dual_ascent(const otd::TosetMatrix& prototypes, const otd::TosetMatrix& q,
                                     const ClassPartition& partition, std::size_t class_count,
                                     const OracleOptions& options = {});

struct PrimalSolution {
  Matrix p_tilde;
  Matrix q_tilde;
  double objective = 0.0;
  int iterations = 0;
};

// Independent primal route: P~_k is eliminated through the constraint and the
// Q~_u rows are optimised by entropic mirror descent on the product of
// simplexes (Bregman projection = row normalisation).
PrimalSolution primal_mirror_descent(const otd::TosetMatrix& prototypes, const otd::TosetMatrix& q,
                                     const ClassPartition& partition, double step = 0.5,
                                     int max_iterations = 200000, double tolerance = 1e-14);

// A random tiny instance: labels from `class_count` ranks with every present
// class occurring, Gaussian features.
struct OracleTrial {
  Labels ranks;                 // class id -> rank label
  std::vector<ClassId> classes; // column classes
  Labels labels;
  Matrix features;
  std::size_t class_count = 0;
};

OracleTrial random_trial(Rng& rng, std::size_t max_batch = 6, std::size_t max_classes = 3);

struct TrialComparison {
  double p_gap = 0.0;               // max |closed-form P~ - oracle P~|
  double q_gap = 0.0;               // max |closed-form Q~ - oracle Q~|
  double oracle_residual = 0.0;
  double closed_form_residual = 0.0;
  Matrix oracle_p;
  Matrix oracle_q;
  Matrix closed_p;
  Matrix closed_q;
  std::vector<double> lambda_star;

  double worst() const;
};

// Closed forms evaluated at the oracle's lambda*. `corrupt` evaluates them at
// 1/lambda* instead, a deliberately wrong reading used as a negative control.
TrialComparison compare_closed_forms(const OracleTrial& trial, bool corrupt = false);

}  // namespace ordcore::dual
