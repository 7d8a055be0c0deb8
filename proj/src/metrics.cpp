#include "ordcore/metrics.hpp"

#include "ordcore/error.hpp"
#include "ordcore/otd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ordcore::metrics {

namespace {

void check_aligned(std::span<const double> a, std::span<const double> b) {
  require(!a.empty(), ErrorKind::Input, "metric over an empty set");
  require(a.size() == b.size(), ErrorKind::Input, "predictions and labels are not aligned");
}

}  // namespace

double mae(std::span<const double> predictions, std::span<const double> labels) {
  check_aligned(predictions, labels);
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) sum += std::abs(predictions[i] - labels[i]);
  return sum / static_cast<double>(labels.size());
}

double accuracy(std::span<const double> predictions, std::span<const double> labels) {
  check_aligned(predictions, labels);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

double cumulative_score(std::span<const double> predictions, std::span<const double> labels, double ell,
                        CsBoundary boundary) {
  check_aligned(predictions, labels);
  require(ell >= 0.0, ErrorKind::Input, "CS threshold must be >= 0");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double err = std::abs(predictions[i] - labels[i]);
    hit += (boundary == CsBoundary::Inclusive ? err <= ell : err < ell) ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  check_aligned(a, b);
  require(a.size() >= 2, ErrorKind::UndefinedCorrelation, "correlation needs at least 2 points");
  const double n = static_cast<double>(a.size());
  const double mean_a = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mean_b = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  require(saa > 0.0 && sbb > 0.0, ErrorKind::UndefinedCorrelation, "correlation of a constant vector");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

Correlations rank_correlations(std::span<const double> predictions, std::span<const double> labels) {
  return Correlations{spearman(predictions, labels), pearson(predictions, labels)};
}

double manifold_order_score(const Matrix& features, std::span<const RankLabel> labels) {
  require(static_cast<Eigen::Index>(labels.size()) == features.rows(), ErrorKind::Input,
          "features and labels are not aligned");
  require(labels.size() >= 3, ErrorKind::DegenerateBatch, "manifold order score needs at least 3 samples");
  const Matrix dist = otd::pairwise_distance(features);
  const std::size_t n = labels.size();
  std::vector<double> feature_d, label_d;
  feature_d.reserve(n * (n - 1) / 2);
  label_d.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      feature_d.push_back(dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      label_d.push_back(std::abs(labels[i] - labels[j]));
    }
  }
  return spearman(feature_d, label_d);
}

Projection pca_project(const Matrix& features, std::size_t k) {
  otd::validate_features(features);
  require(features.rows() >= 2, ErrorKind::DegenerateBatch, "PCA needs at least 2 samples");
  require(k >= 1 && k <= static_cast<std::size_t>(features.cols()), ErrorKind::Input,
          "PCA components k must be in [1, D_feat]");
  const Eigen::MatrixXd centred = features.rowwise() - features.colwise().mean();
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(features.rows() - 1);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  require(eig.info() == Eigen::Success, ErrorKind::InvariantViolation, "PCA eigen-decomposition failed");

  Projection out;
  const auto d = cov.rows();
  const auto kk = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd basis(d, kk);
  for (Eigen::Index c = 0; c < kk; ++c) {
    basis.col(c) = eig.eigenvectors().col(d - 1 - c);
    out.explained_variance.push_back(std::max(0.0, eig.eigenvalues()(d - 1 - c)));
  }
  out.coords = centred * basis;
  for (Eigen::Index c = 0; c < kk; ++c) {
    Eigen::Index at = 0;
    out.coords.col(c).cwiseAbs().maxCoeff(&at);
    if (out.coords(at, c) < 0.0) out.coords.col(c) *= -1.0;
  }
  return out;
}

}  // namespace ordcore::metrics
