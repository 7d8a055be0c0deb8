#include "ordcore/datagen.hpp"

#include "ordcore/error.hpp"
#include "ordcore/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace ordcore::datagen {

namespace {

constexpr std::size_t kCurveDim = 5;
constexpr std::uint64_t kMixingSeed = 0x0DDBA11;

// Helix: one full turn every 4 ranks with a second harmonic and a slow rise,
// so points 4 ranks apart are closer than neighbouring ranks.
constexpr double kTurnsPerRank = 0.25;
constexpr double kRadius = 1.0;
constexpr double kRise = 0.35;

Eigen::Matrix<double, 5, 1> base_curve(Curve curve, double t) {
  Eigen::Matrix<double, 5, 1> p = Eigen::Matrix<double, 5, 1>::Zero();
  switch (curve) {
    case Curve::Helix: {
      const double angle = 2.0 * std::numbers::pi * kTurnsPerRank * t;
      p << kRise * t, kRadius * std::cos(angle), kRadius * std::sin(angle), 0.5 * kRadius * std::cos(2.0 * angle),
          0.5 * kRadius * std::sin(2.0 * angle);
      break;
    }
    case Curve::Line:
      p(0) = t;
      break;
  }
  return p;
}

// Fixed embedding of the 5-D curve into D_in dimensions: orthonormal columns
// when D_in >= 5, orthonormal rows otherwise.
Eigen::MatrixXd mixing_matrix(std::size_t input_dim) {
  const auto d = static_cast<Eigen::Index>(std::max(input_dim, kCurveDim));
  Rng rng(kMixingSeed);
  Eigen::MatrixXd gauss(d, d);
  for (Eigen::Index i = 0; i < gauss.size(); ++i) gauss.data()[i] = rng.normal();
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
  return q.topLeftCorner(static_cast<Eigen::Index>(input_dim), static_cast<Eigen::Index>(kCurveDim));
}

}  // namespace

const char* to_string(Curve curve) noexcept {
  switch (curve) {
    case Curve::Helix: return "helix";
    case Curve::Line: return "line";
  }
  return "unknown";
}

Curve curve_from_string(const std::string& name) {
  if (name == "helix") return Curve::Helix;
  if (name == "line") return Curve::Line;
  fail(ErrorKind::Configuration, "unknown curve '" + name + "' (expected helix or line)");
}

void SyntheticSpec::validate() const {
  require(class_count >= 2, ErrorKind::Input, "synthetic spec needs class_count >= 2");
  require(samples_per_class >= 1, ErrorKind::Input, "synthetic spec needs samples_per_class >= 1");
  require(input_dim >= 1, ErrorKind::Input, "synthetic spec needs input_dim >= 1");
  require(noise >= 0.0 && std::isfinite(noise), ErrorKind::Input, "synthetic spec needs a finite noise >= 0");
}

void Dataset::index_labels() {
  ranks = labels;
  std::sort(ranks.begin(), ranks.end());
  ranks.erase(std::unique(ranks.begin(), ranks.end()), ranks.end());
  require(ranks.size() >= 2, ErrorKind::Io, "dataset needs at least 2 distinct labels (C >= 2)");
  classes.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    classes[i] = static_cast<ClassId>(std::lower_bound(ranks.begin(), ranks.end(), labels[i]) - ranks.begin());
  }
}

std::string Dataset::fingerprint() const {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto mix = [&hash](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      hash ^= p[i];
      hash *= 0x100000001b3ULL;
    }
  };
  const std::uint64_t dims[2] = {static_cast<std::uint64_t>(features.rows()),
                                 static_cast<std::uint64_t>(features.cols())};
  mix(dims, sizeof dims);
  mix(features.data(), static_cast<std::size_t>(features.size()) * sizeof(double));
  mix(labels.data(), labels.size() * sizeof(double));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  out.classes.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(labels[rows[i]]);
    out.classes.push_back(classes[rows[i]]);
  }
  out.ranks = ranks;
  return out;
}

Vector curve_point(Curve curve, double t, std::size_t input_dim) {
  return mixing_matrix(input_dim) * base_curve(curve, t);
}

Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  const Eigen::MatrixXd mixing = mixing_matrix(spec.input_dim);
  Rng rng(spec.seed);
  const std::size_t n = spec.class_count * spec.samples_per_class;
  Dataset data;
  data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.input_dim));
  data.labels.reserve(n);
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.class_count; ++c) {
    const double rank = static_cast<double>(c + 1);
    for (std::size_t s = 0; s < spec.samples_per_class; ++s, ++row) {
      const double t = rank + rng.uniform(-0.5, 0.5);
      Vector x = mixing * base_curve(spec.curve, t);
      for (Eigen::Index d = 0; d < x.size(); ++d) x(d) += spec.noise * rng.normal();
      data.features.row(static_cast<Eigen::Index>(row)) = x.transpose();
      data.labels.push_back(rank);
    }
  }
  data.index_labels();
  return data;
}

namespace {

double parse_cell(std::string_view cell, std::size_t line_no, std::size_t column) {
  while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
    std::ostringstream msg;
    msg << "line " << line_no << ", column " << column + 1 << ": non-numeric cell '" << cell << "'";
    fail(ErrorKind::Io, msg.str());
  }
  return value;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = has_header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    std::vector<double> cells;
    std::string_view rest(line);
    std::size_t column = 0;
    while (true) {
      const auto comma = rest.find(',');
      cells.push_back(parse_cell(rest.substr(0, comma), line_no, column++));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (cells.size() < 2) {
      fail(ErrorKind::Io, "line " + std::to_string(line_no) + ": need at least one feature and a label");
    }
    if (!rows.empty() && cells.size() != rows.front().size()) {
      fail(ErrorKind::Io, "line " + std::to_string(line_no) + ": expected " +
                              std::to_string(rows.front().size()) + " columns, found " +
                              std::to_string(cells.size()));
    }
    rows.push_back(std::move(cells));
  }
  require(!rows.empty(), ErrorKind::Io, path.string() + " contains no samples");

  Dataset data;
  const auto width = static_cast<Eigen::Index>(rows.front().size() - 1);
  data.features.resize(static_cast<Eigen::Index>(rows.size()), width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index d = 0; d < width; ++d) data.features(static_cast<Eigen::Index>(i), d) = rows[i][static_cast<std::size_t>(d)];
    data.labels.push_back(rows[i].back());
  }
  data.index_labels();
  return data;
}

void write_csv(const Dataset& data, const std::filesystem::path& path, bool with_header) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  char buf[32];
  if (with_header) {
    for (Eigen::Index d = 0; d < data.features.cols(); ++d) out << "x" << d << ",";
    out << "label\n";
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (Eigen::Index d = 0; d < data.features.cols(); ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", data.features(static_cast<Eigen::Index>(i), d));
      out << buf << ",";
    }
    std::snprintf(buf, sizeof buf, "%.17g", data.labels[i]);
    out << buf << "\n";
  }
  require(static_cast<bool>(out), ErrorKind::Io, "write to " + path.string() + " failed");
}

}  // namespace ordcore::datagen
