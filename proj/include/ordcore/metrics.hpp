#pragma once

#include "ordcore/types.hpp"

#include <optional>
#include <span>
#include <vector>

namespace ordcore::metrics {

double mae(std::span<const double> predictions, std::span<const double> labels);

// Fraction of exact matches.
double accuracy(std::span<const double> predictions, std::span<const double> labels);

enum class CsBoundary { Inclusive, Strict };

// Fraction of samples with |error| <= ell (Inclusive) or < ell (Strict).
double cumulative_score(std::span<const double> predictions, std::span<const double> labels, double ell = 5.0,
                        CsBoundary boundary = CsBoundary::Inclusive);

// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

// Throws UndefinedCorrelation when either input is constant.
double pearson(std::span<const double> a, std::span<const double> b);
double spearman(std::span<const double> a, std::span<const double> b);

struct Correlations {
  double srcc = 0.0;
  double plcc = 0.0;
};

Correlations rank_correlations(std::span<const double> predictions, std::span<const double> labels);

// Spearman correlation between ||z_i - z_j|| and |y_i - y_j| over all
// unordered pairs i < j.
double manifold_order_score(const Matrix& features, std::span<const RankLabel> labels);

struct Projection {
  Matrix coords;                          // N x k
  std::vector<double> explained_variance; // descending, length k
};

// Centred data on the top-k principal directions. Each component's sign is
// chosen so that its largest-magnitude coordinate is positive.
Projection pca_project(const Matrix& features, std::size_t k = 2);

struct EvalReport {
  double mae = 0.0;
  double accuracy = 0.0;
  double cs = 0.0;
  double cs_threshold = 5.0;
  std::optional<double> srcc;  // empty when predictions are constant
  std::optional<double> plcc;
  double ordinal_constraint_rate = 0.0;
  std::optional<double> manifold_order_score;
  double raw_kl = 0.0;
};

}  // namespace ordcore::metrics
