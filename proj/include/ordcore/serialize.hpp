#pragma once

// JSON documents read and written by the CLI: run configuration, checkpoint,
// run manifest; plus the CSV emitters. JSON doubles use the shortest
// round-trip form, CSV cells use %.17g; both restore bit-exactly.

#include "ordcore/datagen.hpp"
#include "ordcore/metrics.hpp"
#include "ordcore/train.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace ordcore::io {

using Json = nlohmann::json;

struct RunConfig {
  train::TrainConfig train;
  datagen::SyntheticSpec dataset;
  std::optional<std::uint64_t> test_seed;  // defaults to dataset.seed + 1000

  std::uint64_t resolved_test_seed() const { return test_seed.value_or(dataset.seed + 1000); }
};

// Unknown keys and out-of-range values raise Configuration errors that name
// the offending key or bound.
RunConfig config_from_json(const Json& doc);
Json config_to_json(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);

Json params_to_json(const encoder::EncoderParams& params);
encoder::EncoderParams params_from_json(const Json& doc);

struct Checkpoint {
  RunConfig config;
  train::TrainState state;
};

Json checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const Json& doc);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct RunManifest {
  RunConfig config;
  std::uint64_t seed = 0;
  std::string dataset_fingerprint;
  std::vector<train::EpochRecord> history;
  metrics::EvalReport report;
  double seconds = 0.0;
  std::vector<std::string> warnings;
};

Json history_to_json(const std::vector<train::EpochRecord>& history);
std::vector<train::EpochRecord> history_from_json(const Json& doc);
Json report_to_json(const metrics::EvalReport& report);
metrics::EvalReport report_from_json(const Json& doc);
Json manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const Json& doc);

Json read_json(const std::filesystem::path& path);
void write_json(const Json& doc, const std::filesystem::path& path);

// "%.17g"; the only float formatting used in emitted CSV.
std::string format_double(double value);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void write_csv(const CsvTable& table, const std::filesystem::path& path);

CsvTable curves_table(const std::vector<train::EpochRecord>& history);

}  // namespace ordcore::io
