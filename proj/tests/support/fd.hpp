#pragma once

// Central finite differences and the error measure used by the gradient
// checks.

#include "ordcore/random.hpp"
#include "ordcore/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace ordcore::testing {

inline constexpr double kStep = 1e-5;
inline constexpr double kRelTolerance = 1e-4;

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// d f / d x by central differences, perturbing x in place.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, Matrix x, double h = kStep) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    const double up = f(x);
    x.data()[i] = saved - h;
    const double down = f(x);
    x.data()[i] = saved;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Largest elementwise |a - b| / max(|a|, |b|); entries where both are below
// `floor` are compared on the floor scale so that exact zeros do not divide.
inline double max_relative_error(const Matrix& a, const Matrix& b, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double x = a.data()[i];
    const double y = b.data()[i];
    const double scale = std::max({std::abs(x), std::abs(y), floor});
    worst = std::max(worst, std::abs(x - y) / scale);
  }
  return worst;
}

}  // namespace ordcore::testing
