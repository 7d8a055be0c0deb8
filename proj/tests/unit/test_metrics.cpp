#include "ordcore/error.hpp"
#include "ordcore/metrics.hpp"
#include "ordcore/random.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace ordcore;
using namespace ordcore::metrics;

namespace {

// Spearman by the textbook route: Pearson on average ranks, O(n^2) ranking.
double spearman_reference(const std::vector<double>& a, const std::vector<double>& b) {
  auto rank = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (double x : v) {
        less += x < v[i];
        equal += x == v[i];
      }
      r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
  };
  const auto ra = rank(a), rb = rank(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(Metrics, MaeAndAccuracy) {
  const std::vector<double> pred{1, 2, 3};
  const std::vector<double> truth{2, 2, 5};
  EXPECT_DOUBLE_EQ(mae(pred, truth), 1.0);
  EXPECT_DOUBLE_EQ(accuracy(pred, truth), 1.0 / 3.0);
  EXPECT_THROW(mae(pred, std::vector<double>{1.0}), Error);
}

TEST(Metrics, CumulativeScoreBoundary) {
  const std::vector<double> pred{1, 2, 3};
  const std::vector<double> truth{2, 2, 5};
  EXPECT_DOUBLE_EQ(cumulative_score(pred, truth, 1.0, CsBoundary::Inclusive), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(cumulative_score(pred, truth, 1.0, CsBoundary::Strict), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(cumulative_score(pred, truth), 1.0);
}

TEST(Metrics, AverageRanksShareTies) {
  const std::vector<double> v{10, 20, 10, 5};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{2.5, 4, 2.5, 1}));
}

TEST(Metrics, SpearmanExample) {
  const std::vector<double> a{1, 2, 3};
  const std::vector<double> b{2, 3, 1};
  EXPECT_NEAR(spearman(a, b), -0.5, 1e-15);
}

TEST(Metrics, CorrelationsAgainstReference) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(15), b(15);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = std::round(rng.normal() * 2.0);  // ties on purpose
      b[i] = a[i] + rng.normal();
    }
    EXPECT_NEAR(spearman(a, b), spearman_reference(a, b), 1e-12);
    const auto c = rank_correlations(a, b);
    EXPECT_NEAR(c.srcc, spearman_reference(a, b), 1e-12);
    EXPECT_LE(std::abs(c.plcc), 1.0 + 1e-12);
  }
  const std::vector<double> x{1, 2, 4};
  const std::vector<double> y{3, 5, 9};  // affine in x
  EXPECT_NEAR(pearson(x, y), 1.0, 1e-15);
}

TEST(Metrics, ConstantInputIsUndefined) {
  const std::vector<double> flat{2, 2, 2};
  const std::vector<double> other{1, 2, 3};
  try {
    spearman(flat, other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UndefinedCorrelation);
  }
  EXPECT_THROW(pearson(other, flat), Error);
}

TEST(Metrics, ManifoldScoreBruteForce) {
  Rng rng(4);
  const Eigen::Index n = 9;
  Matrix z(n, 3);
  Labels y;
  for (Eigen::Index i = 0; i < n; ++i) {
    y.push_back(static_cast<double>(i % 4));
    for (Eigen::Index d = 0; d < 3; ++d) z(i, d) = rng.normal();
  }
  std::vector<double> fd, ld;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      fd.push_back((z.row(i) - z.row(j)).norm());
      ld.push_back(std::abs(y[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(j)]));
    }
  }
  EXPECT_NEAR(manifold_order_score(z, y), spearman_reference(fd, ld), 1e-12);
}

TEST(Metrics, ManifoldScoreOnALineIsOne) {
  Matrix z(5, 2);
  Labels y;
  for (Eigen::Index i = 0; i < 5; ++i) {
    // Integer coordinates keep equal label gaps at bit-equal distances.
    z(i, 0) = 3.0 * static_cast<double>(i);
    z(i, 1) = -6.0 * static_cast<double>(i);
    y.push_back(static_cast<double>(i));
  }
  EXPECT_NEAR(manifold_order_score(z, y), 1.0, 1e-12);
}

TEST(Metrics, ManifoldScoreOfShuffledLabelsIsNearZero) {
  Rng rng(12);
  const Eigen::Index n = 120;
  Matrix z(n, 1);
  Labels y;
  for (Eigen::Index i = 0; i < n; ++i) {
    z(i, 0) = static_cast<double>(i);
    y.push_back(static_cast<double>(i));
  }
  rng.shuffle(std::span<double>(y));
  EXPECT_LT(std::abs(manifold_order_score(z, y)), 0.1);
}

TEST(Metrics, PcaMatchesClosedForm2x2) {
  Rng rng(21);
  const Eigen::Index n = 40;
  Matrix z(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = 3.0 * rng.normal();
    const double b = 0.5 * rng.normal();
    z(i, 0) = a + b + 1.0;
    z(i, 1) = a - b - 2.0;
  }
  // Sample covariance entries and the 2x2 eigenvalues in closed form.
  const Vector mean = z.colwise().mean().transpose();
  double sxx = 0, syy = 0, sxy = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dx = z(i, 0) - mean(0), dy = z(i, 1) - mean(1);
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  sxx /= n - 1;
  syy /= n - 1;
  sxy /= n - 1;
  const double mid = (sxx + syy) / 2.0;
  const double rad = std::sqrt((sxx - syy) * (sxx - syy) / 4.0 + sxy * sxy);

  const auto p = pca_project(z, 2);
  ASSERT_EQ(p.explained_variance.size(), 2u);
  EXPECT_NEAR(p.explained_variance[0], mid + rad, 1e-10);
  EXPECT_NEAR(p.explained_variance[1], mid - rad, 1e-10);
  for (Eigen::Index c = 0; c < 2; ++c) {
    const double var = p.coords.col(c).squaredNorm() / static_cast<double>(n - 1);
    EXPECT_NEAR(var, p.explained_variance[static_cast<std::size_t>(c)], 1e-10);
    Eigen::Index at = 0;
    p.coords.col(c).cwiseAbs().maxCoeff(&at);
    EXPECT_GT(p.coords(at, c), 0.0);
  }
  EXPECT_NEAR(p.coords.col(0).dot(p.coords.col(1)), 0.0, 1e-9);
  EXPECT_THROW(pca_project(z, 3), Error);
}
