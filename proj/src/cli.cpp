#include "ordcore/cli.hpp"

#include "ordcore/error.hpp"
#include "ordcore/experiment.hpp"
#include "ordcore/oracle.hpp"
#include "ordcore/otd.hpp"
#include "ordcore/serialize.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>

namespace ordcore::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;  // empty: "ordcore_out", or no files for oracle-check
  bool no_overwrite = false;

  std::string data_path;
  bool header = false;
  std::string suite;
  long long trials = 100;
  bool corrupt_lambda = false;
  std::string checkpoint_path;
  std::size_t batch_index = 0;
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Input:
    case ErrorKind::DegenerateBatch:
    case ErrorKind::Configuration:
      return kBadInput;
    case ErrorKind::NonFiniteLoss:
      return kTrainingAborted;
    case ErrorKind::Io:
      return kIo;
    case ErrorKind::OracleFailure:
      return kOracleMismatch;
    default:
      return kInternal;
  }
}

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  std::replace(text.begin(), text.end(), '\r', ' ');
  return text;
}

int report_error(std::ostream& err, int code, const std::string& kind, const std::string& message) {
  err << "error: exit=" << code << " kind=" << kind << " message=" << one_line(message) << "\n";
  return code;
}

io::RunConfig resolve_config(const Options& opt) {
  io::RunConfig cfg = opt.config_path.empty() ? io::config_from_json(io::Json::object())
                                              : io::load_config(opt.config_path);
  if (opt.seed) {
    cfg.train.seed = *opt.seed;
    cfg.dataset.seed = *opt.seed;
  }
  return cfg;
}

fs::path out_dir(const Options& opt) { return opt.out_dir.empty() ? fs::path("ordcore_out") : fs::path(opt.out_dir); }

void prepare_out_dir(const Options& opt) {
  const fs::path dir = out_dir(opt);
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    require(!opt.no_overwrite, ErrorKind::Io, "output directory " + dir.string() + " exists (--no-overwrite)");
    require(fs::is_directory(dir, ec), ErrorKind::Io, dir.string() + " is not a directory");
    return;
  }
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

datagen::Dataset load_data(const Options& opt) {
  return datagen::load_csv(opt.data_path, opt.header);
}

int cmd_train(const Options& opt, std::ostream& out, std::ostream& err) {
  const io::RunConfig cfg = resolve_config(opt);
  const datagen::Dataset train_data = opt.data_path.empty() ? experiment::train_split(cfg) : load_data(opt);
  const datagen::Dataset test_data = opt.data_path.empty() ? experiment::test_split(cfg) : train_data;
  prepare_out_dir(opt);
  const fs::path dir = out_dir(opt);

  const auto start = std::chrono::steady_clock::now();
  experiment::Outcome outcome;
  try {
    outcome = experiment::run(cfg, train_data, test_data);
  } catch (const train::TrainingAborted& e) {
    io::save_checkpoint({cfg, e.last_good()}, dir / "checkpoint.json");
    io::write_csv(io::curves_table(e.last_good().history), dir / "curves.csv");
    return report_error(err, kTrainingAborted, to_string(e.kind()),
                        std::string(e.what()) + "; last good state in " + (dir / "checkpoint.json").string());
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& w : outcome.result.warnings) err << "warning: " << one_line(w) << "\n";

  io::save_checkpoint({cfg, outcome.result.state}, dir / "checkpoint.json");
  io::write_csv(io::curves_table(outcome.result.state.history), dir / "curves.csv");
  io::RunManifest manifest;
  manifest.config = cfg;
  manifest.seed = cfg.train.seed;
  manifest.dataset_fingerprint = outcome.train_fingerprint;
  manifest.history = outcome.result.state.history;
  manifest.report = outcome.report;
  manifest.seconds = seconds;
  manifest.warnings = outcome.result.warnings;
  io::write_json(io::manifest_to_json(manifest), dir / "manifest.json");
  out << "train: mae=" << io::format_double(outcome.report.mae)
      << " raw_kl=" << io::format_double(outcome.report.raw_kl) << " out=" << dir.string() << "\n";
  return kOk;
}

int cmd_ablate(const Options& opt, std::ostream& out, std::ostream& err) {
  const auto suite = experiment::suite_from_string(opt.suite);
  const io::RunConfig cfg = resolve_config(opt);
  prepare_out_dir(opt);
  experiment::SuiteResult result;
  try {
    result = experiment::run_suite(suite, cfg);
  } catch (const train::TrainingAborted& e) {
    return report_error(err, kTrainingAborted, to_string(e.kind()), e.what());
  }
  for (const auto& w : result.warnings) err << "warning: " << one_line(w) << "\n";
  const fs::path path = out_dir(opt) / ("ablation_" + std::string(experiment::to_string(suite)) + ".csv");
  io::write_csv(experiment::suite_table(result), path);
  out << "ablate: suite=" << experiment::to_string(suite) << " rows=" << result.rows.size()
      << " out=" << path.string() << "\n";
  return kOk;
}

io::Json matrix_json(const Matrix& m) {
  io::Json rows = io::Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows.push_back(std::vector<double>(m.row(i).data(), m.row(i).data() + m.cols()));
  }
  return rows;
}

int cmd_oracle_check(const Options& opt, std::ostream& out, std::ostream& err) {
  require(opt.trials >= 1, ErrorKind::Configuration, "trials must be >= 1 (got " + std::to_string(opt.trials) + ")");
  const bool write_files = !opt.out_dir.empty();
  if (write_files) prepare_out_dir(opt);
  const double tolerance = 1e-6;
  Rng rng(opt.seed.value_or(0));

  io::CsvTable table;
  table.header = {"trial", "batch_size", "classes", "p_gap", "q_gap", "oracle_residual", "closed_form_residual"};
  double worst = -1.0;
  std::size_t failures = 0;
  io::Json worst_dump;
  for (long long t = 0; t < opt.trials; ++t) {
    const dual::OracleTrial trial = dual::random_trial(rng);
    dual::TrialComparison cmp;
    std::string oracle_error;
    try {
      cmp = dual::compare_closed_forms(trial, opt.corrupt_lambda);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::OracleFailure) throw;
      oracle_error = e.what();
      cmp.p_gap = cmp.q_gap = cmp.oracle_residual = std::numeric_limits<double>::infinity();
    }
    const double w = cmp.worst();
    if (!(w <= tolerance)) ++failures;
    table.rows.push_back({std::to_string(t), std::to_string(trial.labels.size()), std::to_string(trial.class_count),
                          io::format_double(cmp.p_gap), io::format_double(cmp.q_gap),
                          io::format_double(cmp.oracle_residual), io::format_double(cmp.closed_form_residual)});
    if (w > worst) {
      worst = w;
      worst_dump = io::Json{{"trial", t},
                            {"labels", trial.labels},
                            {"ranks", trial.ranks},
                            {"features", matrix_json(trial.features)},
                            {"lambda_star", cmp.lambda_star},
                            {"corrupt_lambda", opt.corrupt_lambda},
                            {"p_gap", cmp.p_gap},
                            {"q_gap", cmp.q_gap},
                            {"oracle_residual", cmp.oracle_residual},
                            {"closed_form_residual", cmp.closed_form_residual},
                            {"oracle_p_tilde", matrix_json(cmp.oracle_p)},
                            {"oracle_q_tilde", matrix_json(cmp.oracle_q)},
                            {"closed_form_p_tilde", matrix_json(cmp.closed_p)},
                            {"closed_form_q_tilde", matrix_json(cmp.closed_q)},
                            {"oracle_error", oracle_error}};
    }
  }
  if (write_files) io::write_csv(table, fs::path(opt.out_dir) / "oracle_check.csv");
  out << "oracle-check: trials=" << opt.trials << " failures=" << failures
      << " worst=" << io::format_double(worst) << "\n";
  if (failures == 0) return kOk;
  if (write_files) {
    io::write_json(worst_dump, fs::path(opt.out_dir) / "oracle_worst.json");
  } else {
    out << worst_dump.dump() << "\n";
  }
  return report_error(err, kOracleMismatch, "OracleMismatch",
                      std::to_string(failures) + " of " + std::to_string(opt.trials) +
                          " trials exceed 1e-6; worst deviation " + io::format_double(worst));
}

int cmd_diagnose(const Options& opt, std::ostream& out, std::ostream&) {
  require(!opt.checkpoint_path.empty(), ErrorKind::Configuration, "diagnose needs --checkpoint");
  const io::Checkpoint ck = io::load_checkpoint(opt.checkpoint_path);
  io::RunConfig cfg = ck.config;
  if (opt.seed) cfg.dataset.seed = *opt.seed;
  const datagen::Dataset data = opt.data_path.empty() ? experiment::test_split(cfg) : load_data(opt);
  require(data.class_count() == ck.state.params.arch.class_count, ErrorKind::Input,
          "dataset has " + std::to_string(data.class_count()) + " classes, checkpoint expects " +
              std::to_string(ck.state.params.arch.class_count));
  const std::size_t width = std::max<std::size_t>(2, std::min(cfg.train.batch_size, data.size()));
  const std::size_t batches = data.size() / width;
  require(opt.batch_index < batches, ErrorKind::Configuration,
          "batch_index must be < " + std::to_string(batches));
  prepare_out_dir(opt);
  const fs::path dir = out_dir(opt);

  const metrics::EvalReport report = train::evaluate(ck.state.params, data, cfg.train.batch_size);
  io::write_json(io::report_to_json(report), dir / "report.json");

  const auto fwd = encoder::forward(ck.state.params, data.features);
  const auto proj = metrics::pca_project(fwd.features, std::min<std::size_t>(2, static_cast<std::size_t>(fwd.features.cols())));
  io::CsvTable pca;
  pca.header = {"index", "label"};
  for (Eigen::Index c = 0; c < proj.coords.cols(); ++c) pca.header.push_back("pc" + std::to_string(c + 1));
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<std::string> row = {std::to_string(i), io::format_double(data.labels[i])};
    for (Eigen::Index c = 0; c < proj.coords.cols(); ++c) {
      row.push_back(io::format_double(proj.coords(static_cast<Eigen::Index>(i), c)));
    }
    pca.rows.push_back(std::move(row));
  }
  io::write_csv(pca, dir / "pca.csv");

  // Same fixed batching as the raw-KL term of the report.
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(0);
  rng.shuffle(std::span<std::size_t>(order));
  const std::span<const std::size_t> rows(order.data() + opt.batch_index * width, width);
  const datagen::Dataset batch = data.subset(rows);
  const dual::ClassPartition partition(batch.classes);
  const auto p = otd::label_otd(batch.labels);
  const auto q = otd::feature_otd(encoder::forward(ck.state.params, batch.features).features);
  const auto protos = dual::prototype_rows(partition, batch.labels, data.ranks);
  const auto p_tilde = dual::reparam_p(protos, ck.state.duals, partition);
  const auto q_tilde = dual::reparam_q(q, ck.state.duals, partition);
  io::CsvTable otd_table;
  otd_table.header = {"matrix", "row", "col", "row_sample", "row_label", "value"};
  auto emit = [&](const char* name, const Matrix& m, bool per_sample) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const std::size_t sample = per_sample ? rows[static_cast<std::size_t>(i)] : 0;
      const double label = per_sample ? batch.labels[static_cast<std::size_t>(i)]
                                      : data.ranks[partition.groups()[static_cast<std::size_t>(i)].class_id];
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        otd_table.rows.push_back({name, std::to_string(i), std::to_string(j),
                                  per_sample ? std::to_string(sample) : std::string("prototype"),
                                  io::format_double(label), io::format_double(m(i, j))});
      }
    }
  };
  emit("P", p.entries(), true);
  emit("Q", q.entries(), true);
  emit("P_tilde", p_tilde.entries(), false);
  emit("Q_tilde", q_tilde.entries(), true);
  io::write_csv(otd_table, dir / "otd.csv");
  out << "diagnose: mae=" << io::format_double(report.mae) << " out=" << dir.string() << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options opt;
  CLI::App app{"Consistent ordinal representation learning on synthetic and tabular data", "ordcore"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--config", opt.config_path, "JSON run configuration");
  auto* seed_opt = app.add_option("--seed", seed, "overrides the training and dataset seed");
  app.add_option("--out", opt.out_dir, "output directory");
  app.add_flag("--no-overwrite", opt.no_overwrite, "fail if the output directory exists");

  auto* train_cmd = app.add_subcommand("train", "train and write checkpoint, manifest and curves");
  train_cmd->add_option("--data", opt.data_path, "CSV dataset (features..., label) instead of the synthetic one");
  train_cmd->add_flag("--header", opt.header, "the CSV has a header row");

  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation matrix");
  ablate_cmd->add_option("--suite", opt.suite, "loss-components | sampling | batch-size")->required();

  auto* oracle_cmd = app.add_subcommand("oracle-check", "compare closed forms against the numerical oracle");
  oracle_cmd->add_option("--trials", opt.trials, "number of random instances");
  oracle_cmd->add_flag("--corrupt-lambda", opt.corrupt_lambda, "evaluate the closed forms at 1/lambda (negative control)");

  auto* diagnose_cmd = app.add_subcommand("diagnose", "evaluate a checkpoint and dump PCA and OTD matrices");
  diagnose_cmd->add_option("--checkpoint", opt.checkpoint_path, "checkpoint.json")->required();
  diagnose_cmd->add_option("--data", opt.data_path, "CSV dataset (features..., label)");
  diagnose_cmd->add_flag("--header", opt.header, "the CSV has a header row");
  diagnose_cmd->add_option("--batch-index", opt.batch_index, "batch whose OTD matrices are written");

  for (auto* sub : {train_cmd, ablate_cmd, oracle_cmd, diagnose_cmd}) sub->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    return report_error(err, kBadInput, "Arguments", e.what());
  }
  if (seed_opt->count() > 0) opt.seed = seed;

  try {
    if (train_cmd->parsed()) return cmd_train(opt, out, err);
    if (ablate_cmd->parsed()) return cmd_ablate(opt, out, err);
    if (oracle_cmd->parsed()) return cmd_oracle_check(opt, out, err);
    return cmd_diagnose(opt, out, err);
  } catch (const Error& e) {
    return report_error(err, exit_code_for(e.kind()), to_string(e.kind()), e.what());
  } catch (const fs::filesystem_error& e) {
    return report_error(err, kIo, "Io", e.what());
  } catch (const std::exception& e) {
    return report_error(err, kInternal, "Internal", e.what());
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace ordcore::cli
