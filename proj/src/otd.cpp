#include "ordcore/otd.hpp"

#include "ordcore/error.hpp"
#include "ordcore/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

namespace ordcore {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Input: return "input";
    case ErrorKind::DegenerateBatch: return "degenerate-batch";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::DivergenceOverflow: return "divergence-overflow";
    case ErrorKind::NonFiniteLoss: return "non-finite-loss";
    case ErrorKind::InvariantViolation: return "invariant-violation";
    case ErrorKind::OracleFailure: return "oracle-failure";
    case ErrorKind::UndefinedCorrelation: return "undefined-correlation";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

std::size_t thread_count() {
  const char* raw = std::getenv("CORE_THREADS");
  if (raw == nullptr || *raw == '\0') return 1;
  char* end = nullptr;
  const long value = std::strtol(raw, &end, 10);
  if (*end != '\0' || value < 1) return 1;
  return static_cast<std::size_t>(value);
}

void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body,
                     std::size_t chunks) {
  chunks = std::max<std::size_t>(1, std::min(chunks, n));
  if (chunks == 1) {
    body(0, 0, n);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(chunks);
  const std::size_t step = (n + chunks - 1) / chunks;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t begin = std::min(n, c * step);
    const std::size_t end = std::min(n, begin + step);
    workers.emplace_back([&body, c, begin, end] { body(c, begin, end); });
  }
  for (auto& w : workers) w.join();
}

}  // namespace ordcore

namespace ordcore::otd {

const char* to_string(TosetKind kind) noexcept {
  switch (kind) {
    case TosetKind::LabelP: return "label-P";
    case TosetKind::FeatureQ: return "feature-Q";
    case TosetKind::PrototypeP: return "prototype-P";
    case TosetKind::ReparamP: return "reparam-P";
    case TosetKind::ReparamQ: return "reparam-Q";
  }
  return "unknown";
}

void validate_rows(const Matrix& entries, bool zero_diagonal) {
  for (Eigen::Index i = 0; i < entries.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < entries.cols(); ++j) {
      const double v = entries(i, j);
      if (!(v >= 0.0 && v <= 1.0)) {
        std::ostringstream msg;
        msg << "toset entry (" << i << "," << j << ") = " << v << " outside [0,1]";
        fail(ErrorKind::InvariantViolation, msg.str());
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      std::ostringstream msg;
      msg << "toset row " << i << " sums to " << sum;
      fail(ErrorKind::InvariantViolation, msg.str());
    }
    if (zero_diagonal && i < entries.cols() && entries(i, i) != 0.0) {
      std::ostringstream msg;
      msg << "toset diagonal (" << i << "," << i << ") is nonzero";
      fail(ErrorKind::InvariantViolation, msg.str());
    }
  }
}

TosetMatrix::TosetMatrix(Matrix entries, TosetKind kind) : entries_(std::move(entries)), kind_(kind) {
  if (is_per_sample(kind)) {
    require(entries_.rows() == entries_.cols(), ErrorKind::InvariantViolation,
            std::string(to_string(kind)) + " matrix must be square");
  }
  validate_rows(entries_, is_per_sample(kind));
}

void validate_features(const Matrix& features) {
  require(features.rows() >= 1, ErrorKind::Input, "feature batch is empty");
  require(features.cols() >= 1, ErrorKind::Input, "feature dimension must be at least 1");
  require(features.allFinite(), ErrorKind::Input, "feature batch contains non-finite entries");
}

Matrix pairwise_distance(const Matrix& vectors) {
  validate_features(vectors);
  const Eigen::Index n = vectors.rows();
  Matrix dist = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < vectors.cols(); ++k) {
        const double diff = vectors(i, k) - vectors(j, k);
        acc += diff * diff;
      }
      dist(i, j) = dist(j, i) = std::sqrt(acc);
    }
  }
  return dist;
}

namespace {

// Row-wise softmax over the off-diagonal entries of a square logit matrix,
// shifted by the row maximum so large distances cannot underflow a row.
Matrix off_diagonal_softmax(const Matrix& logits) {
  const Eigen::Index n = logits.rows();
  Matrix out = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) top = std::max(top, logits(i, j));
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      out(i, j) = std::exp(logits(i, j) - top);
      sum += out(i, j);
    }
    out.row(i) /= sum;
  }
  return out;
}

}  // namespace

TosetMatrix label_otd(std::span<const RankLabel> labels) {
  require(labels.size() >= 2, ErrorKind::DegenerateBatch,
          "label OTD needs at least 2 labels (no neighbours to normalise over)");
  Matrix column(static_cast<Eigen::Index>(labels.size()), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) column(static_cast<Eigen::Index>(i), 0) = labels[i];
  require(column.allFinite(), ErrorKind::Input, "labels contain non-finite values");
  return TosetMatrix(off_diagonal_softmax(-pairwise_distance(column)), TosetKind::LabelP);
}

TosetMatrix feature_otd(const Matrix& features) {
  validate_features(features);
  require(features.rows() >= 2, ErrorKind::DegenerateBatch,
          "feature OTD needs a batch of at least 2 samples");
  return TosetMatrix(off_diagonal_softmax(-pairwise_distance(features)), TosetKind::FeatureQ);
}

Matrix feature_otd_backward_logits(const Matrix& features, const Matrix& upstream_logits) {
  validate_features(features);
  const Eigen::Index n = features.rows();
  require(upstream_logits.rows() == n && upstream_logits.cols() == n, ErrorKind::Input,
          "upstream gradient must be N_B x N_B");
  Matrix grad = Matrix::Zero(n, features.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const auto diff = (features.row(i) - features.row(j)).eval();
      const double d = std::sqrt(diff.squaredNorm());
      // Coincident rows: the distance has no unique direction, take the zero
      // subgradient.
      if (d == 0.0) continue;
      // s_ij = s_ji = -d_ij
      const double coeff = -(upstream_logits(i, j) + upstream_logits(j, i)) / d;
      grad.row(i) += coeff * diff;
      grad.row(j) -= coeff * diff;
    }
  }
  return grad;
}

Matrix feature_otd_backward(const Matrix& features, const Matrix& upstream) {
  validate_features(features);
  const Eigen::Index n = features.rows();
  require(upstream.rows() == n && upstream.cols() == n, ErrorKind::Input,
          "upstream gradient must be N_B x N_B");
  const Matrix q = feature_otd(features).entries();
  Matrix logits_grad = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mean = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) mean += q(i, j) * upstream(i, j);
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) logits_grad(i, j) = q(i, j) * (upstream(i, j) - mean);
    }
  }
  return feature_otd_backward_logits(features, logits_grad);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size(), ErrorKind::Input, "KL arguments differ in length");
  double kl = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] == 0.0) continue;
    if (q[j] == 0.0) {
      fail(ErrorKind::DivergenceOverflow,
           "KL support mismatch at column " + std::to_string(j) + ": p > 0 where q = 0");
    }
    kl += p[j] * (std::log(p[j]) - std::log(q[j]));
  }
  return kl;
}

bool TosetReport::all_passed() const noexcept {
  return std::all_of(checks.begin(), checks.end(), [](const PropertyCheck& c) { return c.passed; });
}

namespace {

class CheckAccumulator {
 public:
  explicit CheckAccumulator(std::string name) { check_.name = std::move(name); }

  // `where` is only called for the first failure.
  template <typename Describe>
  void record(bool ok, Describe&& where) {
    if (!ok && check_.passed) {
      check_.passed = false;
      check_.counterexample = where();
    }
  }

  bool failed() const noexcept { return !check_.passed; }
  PropertyCheck take() { return std::move(check_); }

 private:
  PropertyCheck check_;
};

std::string describe(const std::string& set, std::initializer_list<std::size_t> idx,
                     std::span<const double> values) {
  std::ostringstream os;
  os << set << ":";
  for (std::size_t i : idx) os << " [" << i << "]=" << values[i];
  return os.str();
}

// The four total-order axioms and the triple constraint, evaluated on one set
// of reals under the usual <=.
struct OrderChecks {
  CheckAccumulator reflexivity;
  CheckAccumulator antisymmetry;
  CheckAccumulator transitivity;
  CheckAccumulator comparability;
  CheckAccumulator ordinal_constraint;

  explicit OrderChecks(const std::string& prefix)
      : reflexivity(prefix + "reflexivity"),
        antisymmetry(prefix + "antisymmetry"),
        transitivity(prefix + "transitivity"),
        comparability(prefix + "comparability"),
        ordinal_constraint(prefix + "ordinal-constraint") {}

  void run(std::span<const double> v, const std::string& set) {
    const std::size_t n = v.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (!reflexivity.failed()) reflexivity.record(v[i] <= v[i], [&] { return describe(set, {i}, v); });
      for (std::size_t j = 0; j < n; ++j) {
        if (!comparability.failed()) {
          comparability.record(v[i] <= v[j] || v[j] <= v[i], [&] { return describe(set, {i, j}, v); });
        }
        if (!antisymmetry.failed() && v[i] <= v[j] && v[j] <= v[i]) {
          antisymmetry.record(v[i] == v[j], [&] { return describe(set, {i, j}, v); });
        }
      }
    }
    if (transitivity.failed() && ordinal_constraint.failed()) return;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (!(v[i] <= v[j])) continue;
        for (std::size_t l = 0; l < n; ++l) {
          if (!(v[j] <= v[l])) continue;
          if (!transitivity.failed()) transitivity.record(v[i] <= v[l], [&] { return describe(set, {i, j, l}, v); });
          if (!ordinal_constraint.failed() && i != j && j != l && i != l) {
            const double outer = std::abs(v[i] - v[l]);
            const bool ok = outer >= std::max(std::abs(v[i] - v[j]), std::abs(v[j] - v[l]));
            ordinal_constraint.record(ok, [&] { return describe(set, {i, j, l}, v); });
          }
        }
      }
    }
  }

  void emit(std::vector<PropertyCheck>& out) {
    out.push_back(reflexivity.take());
    out.push_back(antisymmetry.take());
    out.push_back(transitivity.take());
    out.push_back(comparability.take());
    out.push_back(ordinal_constraint.take());
  }
};

}  // namespace

TosetReport check_toset(std::span<const RankLabel> labels) {
  OrderChecks on_labels("labels/");
  on_labels.run(labels, "labels");

  OrderChecks on_distances("distance-sets/");
  std::vector<double> distances(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      distances[j] = j == i ? 0.0 : std::abs(labels[i] - labels[j]);
    }
    on_distances.run(distances, "P_" + std::to_string(i));
  }

  TosetReport report;
  on_labels.emit(report.checks);
  on_distances.emit(report.checks);
  return report;
}

double ordinal_constraint_rate(const Matrix& features, std::span<const RankLabel> labels) {
  validate_features(features);
  const std::size_t n = labels.size();
  require(static_cast<Eigen::Index>(n) == features.rows(), ErrorKind::Input,
          "features and labels are not aligned");
  require(n >= 3, ErrorKind::DegenerateBatch, "ordinal constraint rate needs at least 3 samples");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
  const Matrix dist = pairwise_distance(features);

  const std::size_t workers = thread_count();
  std::vector<unsigned long long> satisfied(workers, 0);
  parallel_chunks(
      n,
      [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        unsigned long long count = 0;
        for (std::size_t p = begin; p < end; ++p) {
          const auto a = static_cast<Eigen::Index>(order[p]);
          for (std::size_t q = p + 1; q < n; ++q) {
            const auto b = static_cast<Eigen::Index>(order[q]);
            const double ab = dist(a, b);
            for (std::size_t r = q + 1; r < n; ++r) {
              const auto c = static_cast<Eigen::Index>(order[r]);
              if (dist(a, c) >= std::max(ab, dist(b, c))) ++count;
            }
          }
        }
        satisfied[chunk] = count;
      },
      workers);

  const unsigned long long total =
      static_cast<unsigned long long>(n) * (n - 1) * (n - 2) / 6;
  const unsigned long long hit = std::accumulate(satisfied.begin(), satisfied.end(), 0ULL);
  return static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace ordcore::otd
