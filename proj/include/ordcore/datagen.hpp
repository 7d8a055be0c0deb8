#pragma once

// Synthetic ordinal datasets and CSV ingestion.

#include "ordcore/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace ordcore::datagen {

enum class Curve { Helix, Line };

const char* to_string(Curve curve) noexcept;
Curve curve_from_string(const std::string& name);

struct SyntheticSpec {
  std::size_t class_count = 10;
  std::size_t samples_per_class = 60;
  std::size_t input_dim = 16;
  double noise = 0.3;
  Curve curve = Curve::Helix;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Dataset {
  Matrix features;              // N x D_in
  Labels labels;                // N rank values
  Labels ranks;                 // sorted distinct vocabulary r_1 < ... < r_C
  std::vector<ClassId> classes; // index of each label in `ranks`

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t class_count() const noexcept { return ranks.size(); }

  // Rebuilds `ranks` and `classes` from `labels`; needs at least 2 distinct
  // labels.
  void index_labels();

  // FNV-1a over the raw bytes of features and labels, as 16 hex digits.
  std::string fingerprint() const;

  Dataset subset(std::span<const std::size_t> rows) const;
};

// Class c has rank c + 1. Each sample draws a latent t = rank + U(-0.5, 0.5),
// is lifted onto a fixed smooth curve in D_in dimensions and perturbed with
// isotropic Gaussian noise of scale `noise`. Deterministic per seed.
Dataset generate(const SyntheticSpec& spec);

// The noiseless curve point for latent t (exposed for tests).
Vector curve_point(Curve curve, double t, std::size_t input_dim);

// Comma-separated reals, label in the last column, '.' decimals. Blank lines
// are skipped; with has_header the first non-blank line is ignored.
Dataset load_csv(const std::filesystem::path& path, bool has_header = false);

void write_csv(const Dataset& data, const std::filesystem::path& path, bool with_header = false);

}  // namespace ordcore::datagen
