#pragma once

// Train-then-evaluate runs and the ablation matrices built on them.

#include "ordcore/serialize.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ordcore::experiment {

struct Outcome {
  train::TrainResult result;
  metrics::EvalReport report;  // on the held-out data
  std::string train_fingerprint;
};

// Synthetic train split from dataset.seed, held-out split from the resolved
// test seed.
datagen::Dataset train_split(const io::RunConfig& config);
datagen::Dataset test_split(const io::RunConfig& config);

Outcome run(const io::RunConfig& config);
Outcome run(const io::RunConfig& config, const datagen::Dataset& train_data, const datagen::Dataset& test_data);

enum class Suite { LossComponents, Sampling, BatchSize };

const char* to_string(Suite suite) noexcept;
Suite suite_from_string(const std::string& name);

struct Variant {
  std::string name;
  io::RunConfig config;
};

// loss-components: kl-only, dual, dual+ent
// sampling:        random, stratified
// batch-size:      N_B in {8, 16, 32, 64, 128}
std::vector<Variant> variants(Suite suite, const io::RunConfig& base);

struct Row {
  std::string variant;
  io::RunConfig config;
  std::size_t effective_batch = 0;
  train::EpochRecord last_epoch;
  metrics::EvalReport report;
};

struct SuiteResult {
  std::vector<Row> rows;
  std::vector<std::string> warnings;
};

SuiteResult run_suite(Suite suite, const io::RunConfig& base);

io::CsvTable suite_table(const SuiteResult& result);

}  // namespace ordcore::experiment
