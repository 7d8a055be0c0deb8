#include "ordcore/experiment.hpp"

#include "ordcore/error.hpp"

namespace ordcore::experiment {

datagen::Dataset train_split(const io::RunConfig& config) { return datagen::generate(config.dataset); }

datagen::Dataset test_split(const io::RunConfig& config) {
  datagen::SyntheticSpec spec = config.dataset;
  spec.seed = config.resolved_test_seed();
  return datagen::generate(spec);
}

Outcome run(const io::RunConfig& config, const datagen::Dataset& train_data, const datagen::Dataset& test_data) {
  Outcome out;
  out.train_fingerprint = train_data.fingerprint();
  out.result = train::train(config.train, train_data);
  out.report = train::evaluate(out.result.state.params, test_data, config.train.batch_size);
  return out;
}

Outcome run(const io::RunConfig& config) { return run(config, train_split(config), test_split(config)); }

const char* to_string(Suite suite) noexcept {
  switch (suite) {
    case Suite::LossComponents: return "loss-components";
    case Suite::Sampling: return "sampling";
    case Suite::BatchSize: return "batch-size";
  }
  return "unknown";
}

Suite suite_from_string(const std::string& name) {
  if (name == "loss-components") return Suite::LossComponents;
  if (name == "sampling") return Suite::Sampling;
  if (name == "batch-size") return Suite::BatchSize;
  fail(ErrorKind::Configuration, "unknown suite '" + name + "' (expected loss-components, sampling or batch-size)");
}

std::vector<Variant> variants(Suite suite, const io::RunConfig& base) {
  std::vector<Variant> out;
  switch (suite) {
    case Suite::LossComponents: {
      io::RunConfig kl = base;
      kl.train.alignment = train::Alignment::Direct;
      io::RunConfig dual = base;
      dual.train.alignment = train::Alignment::Dual;
      dual.train.beta = 0.0;
      io::RunConfig ent = base;
      ent.train.alignment = train::Alignment::Dual;
      out = {{"kl-only", kl}, {"dual", dual}, {"dual+ent", ent}};
      break;
    }
    case Suite::Sampling: {
      io::RunConfig random = base;
      random.train.sampling = train::Sampling::Random;
      io::RunConfig strat = base;
      strat.train.sampling = train::Sampling::Stratified;
      out = {{"random", random}, {"stratified", strat}};
      break;
    }
    case Suite::BatchSize:
      for (std::size_t nb : {8, 16, 32, 64, 128}) {
        io::RunConfig c = base;
        c.train.batch_size = nb;
        out.push_back({"batch-" + std::to_string(nb), c});
      }
      break;
  }
  return out;
}

SuiteResult run_suite(Suite suite, const io::RunConfig& base) {
  const datagen::Dataset train_data = train_split(base);
  const datagen::Dataset test_data = test_split(base);
  SuiteResult result;
  for (const auto& v : variants(suite, base)) {
    Outcome o = run(v.config, train_data, test_data);
    for (const auto& w : o.result.warnings) result.warnings.push_back(v.name + ": " + w);
    Row row;
    row.variant = v.name;
    row.config = v.config;
    row.effective_batch = v.config.train.sampling == train::Sampling::Stratified
                              ? std::min(v.config.train.batch_size, train_data.class_count())
                              : v.config.train.batch_size;
    row.last_epoch = o.result.state.history.back();
    row.report = o.report;
    result.rows.push_back(std::move(row));
  }
  return result;
}

io::CsvTable suite_table(const SuiteResult& result) {
  io::CsvTable table;
  table.header = {"variant",  "alignment", "sampling", "batch_size", "effective_batch", "alpha",  "beta",
                  "mae",      "accuracy",  "cs",       "srcc",       "plcc",            "ocr",    "manifold_order_score",
                  "test_raw_kl", "train_raw_kl", "train_l_or", "train_l_dual", "train_residual"};
  auto opt = [](const std::optional<double>& v) { return v ? io::format_double(*v) : std::string("nan"); };
  for (const auto& r : result.rows) {
    const auto& t = r.config.train;
    table.rows.push_back({r.variant,
                          train::to_string(t.alignment),
                          train::to_string(t.sampling),
                          std::to_string(t.batch_size),
                          std::to_string(r.effective_batch),
                          io::format_double(t.alpha),
                          io::format_double(t.beta),
                          io::format_double(r.report.mae),
                          io::format_double(r.report.accuracy),
                          io::format_double(r.report.cs),
                          opt(r.report.srcc),
                          opt(r.report.plcc),
                          io::format_double(r.report.ordinal_constraint_rate),
                          opt(r.report.manifold_order_score),
                          io::format_double(r.report.raw_kl),
                          io::format_double(r.last_epoch.raw_kl),
                          io::format_double(r.last_epoch.l_or),
                          io::format_double(r.last_epoch.l_dual),
                          io::format_double(r.last_epoch.residual)});
  }
  return table;
}

}  // namespace ordcore::experiment
