#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace ordcore {

// Row-major so that one row is one sample; matches how batches are sliced.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Ordinal ranks are plain reals: any two are comparable and |a - b| is the
// label distance.
using RankLabel = double;
using Labels = std::vector<RankLabel>;

// Zero-based index into a dataset's rank vocabulary.
using ClassId = std::size_t;

}  // namespace ordcore
