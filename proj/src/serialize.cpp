#include "ordcore/serialize.hpp"

#include "ordcore/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace ordcore::io {

namespace {

constexpr const char* kCheckpointFormat = "ordcore-checkpoint";
constexpr int kCheckpointVersion = 1;

void reject_unknown(const Json& doc, const std::set<std::string>& allowed, const std::string& where) {
  require(doc.is_object(), ErrorKind::Configuration, where + " must be an object");
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    if (!allowed.count(key)) fail(ErrorKind::Configuration, "unknown key '" + where + key + "'");
  }
}

template <typename T>
void read_key(const Json& doc, const char* key, T& out, const std::string& where) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::Configuration, "key '" + where + key + "' has the wrong type");
  }
}

void read_count(const Json& doc, const char* key, std::size_t& out, const std::string& where) {
  if (!doc.contains(key)) return;
  const Json& v = doc.at(key);
  if (v.is_number_integer() && v.get<std::int64_t>() < 0) {
    fail(ErrorKind::Configuration, "key '" + where + key + "' must be non-negative");
  }
  require(v.is_number_unsigned() || v.is_number_integer(), ErrorKind::Configuration,
          "key '" + where + key + "' must be an integer");
  out = v.get<std::size_t>();
}

Json layer_to_json(const encoder::Layer& layer) {
  return Json{{"rows", layer.weight.rows()},
              {"cols", layer.weight.cols()},
              {"weight", std::vector<double>(layer.weight.data(), layer.weight.data() + layer.weight.size())},
              {"bias", std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size())}};
}

encoder::Layer layer_from_json(const Json& doc) {
  const auto rows = doc.at("rows").get<Eigen::Index>();
  const auto cols = doc.at("cols").get<Eigen::Index>();
  const auto weight = doc.at("weight").get<std::vector<double>>();
  const auto bias = doc.at("bias").get<std::vector<double>>();
  require(rows >= 0 && cols >= 0 && static_cast<Eigen::Index>(weight.size()) == rows * cols &&
              static_cast<Eigen::Index>(bias.size()) == rows,
          ErrorKind::Io, "layer entry counts do not match its shape");
  encoder::Layer layer;
  layer.weight = Eigen::Map<const Matrix>(weight.data(), rows, cols);
  layer.bias = Eigen::Map<const Vector>(bias.data(), rows);
  return layer;
}

Json adam_to_json(const encoder::Adam& adam) {
  const auto& o = adam.options();
  return Json{{"step", adam.step()},
              {"beta1", o.beta1},
              {"beta2", o.beta2},
              {"epsilon", o.epsilon},
              {"weight_decay", o.weight_decay},
              {"m", adam.first_moments()},
              {"v", adam.second_moments()}};
}

encoder::Adam adam_from_json(const Json& doc) {
  encoder::AdamOptions o;
  o.beta1 = doc.at("beta1").get<double>();
  o.beta2 = doc.at("beta2").get<double>();
  o.epsilon = doc.at("epsilon").get<double>();
  o.weight_decay = doc.at("weight_decay").get<double>();
  encoder::Adam adam(o);
  adam.restore(doc.at("step").get<std::int64_t>(), doc.at("m").get<std::vector<std::vector<double>>>(),
               doc.at("v").get<std::vector<std::vector<double>>>());
  return adam;
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> optional_from(const Json& v) {
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

}  // namespace

RunConfig config_from_json(const Json& doc) {
  reject_unknown(doc,
                 {"alpha", "beta", "batch_size", "epochs", "base_lr", "decay_factor", "decay_period", "weight_decay",
                  "dual_lr", "seed", "sampling", "baseline", "alignment", "hidden", "feature_dim", "dataset",
                  "test_seed"},
                 "");
  RunConfig cfg;
  auto& t = cfg.train;
  read_key(doc, "alpha", t.alpha, "");
  read_key(doc, "beta", t.beta, "");
  read_count(doc, "batch_size", t.batch_size, "");
  read_count(doc, "epochs", t.epochs, "");
  read_key(doc, "base_lr", t.base_lr, "");
  read_key(doc, "decay_factor", t.decay_factor, "");
  read_count(doc, "decay_period", t.decay_period, "");
  read_key(doc, "weight_decay", t.weight_decay, "");
  if (doc.contains("dual_lr") && !doc.at("dual_lr").is_null()) {
    double lr = 0.0;
    read_key(doc, "dual_lr", lr, "");
    t.dual_lr = lr;
  }
  read_key(doc, "seed", t.seed, "");
  std::string name;
  if (doc.contains("sampling")) {
    read_key(doc, "sampling", name, "");
    t.sampling = train::sampling_from_string(name);
  }
  if (doc.contains("baseline")) {
    read_key(doc, "baseline", name, "");
    t.baseline = train::baseline_from_string(name);
  }
  if (doc.contains("alignment")) {
    read_key(doc, "alignment", name, "");
    t.alignment = train::alignment_from_string(name);
  }
  read_key(doc, "hidden", t.hidden, "");
  read_count(doc, "feature_dim", t.feature_dim, "");
  if (doc.contains("test_seed")) {
    std::uint64_t s = 0;
    read_key(doc, "test_seed", s, "");
    cfg.test_seed = s;
  }
  if (doc.contains("dataset")) {
    const Json& d = doc.at("dataset");
    reject_unknown(d, {"class_count", "samples_per_class", "input_dim", "noise", "curve", "seed"}, "dataset.");
    auto& s = cfg.dataset;
    read_count(d, "class_count", s.class_count, "dataset.");
    read_count(d, "samples_per_class", s.samples_per_class, "dataset.");
    read_count(d, "input_dim", s.input_dim, "dataset.");
    read_key(d, "noise", s.noise, "dataset.");
    read_key(d, "seed", s.seed, "dataset.");
    if (d.contains("curve")) {
      read_key(d, "curve", name, "dataset.");
      s.curve = datagen::curve_from_string(name);
    }
  }
  t.validate();
  try {
    cfg.dataset.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Configuration, e.what());
  }
  return cfg;
}

Json config_to_json(const RunConfig& cfg) {
  const auto& t = cfg.train;
  const auto& s = cfg.dataset;
  return Json{{"alpha", t.alpha},
              {"beta", t.beta},
              {"batch_size", t.batch_size},
              {"epochs", t.epochs},
              {"base_lr", t.base_lr},
              {"decay_factor", t.decay_factor},
              {"decay_period", t.decay_period},
              {"weight_decay", t.weight_decay},
              {"dual_lr", optional_number(t.dual_lr)},
              {"seed", t.seed},
              {"sampling", train::to_string(t.sampling)},
              {"baseline", train::to_string(t.baseline)},
              {"alignment", train::to_string(t.alignment)},
              {"hidden", t.hidden},
              {"feature_dim", t.feature_dim},
              {"test_seed", cfg.resolved_test_seed()},
              {"dataset",
               {{"class_count", s.class_count},
                {"samples_per_class", s.samples_per_class},
                {"input_dim", s.input_dim},
                {"noise", s.noise},
                {"curve", datagen::to_string(s.curve)},
                {"seed", s.seed}}}};
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open config " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Configuration, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

Json params_to_json(const encoder::EncoderParams& params) {
  Json layers = Json::array();
  for (const auto& layer : params.feature_layers) layers.push_back(layer_to_json(layer));
  return Json{{"architecture",
               {{"input_dim", params.arch.input_dim},
                {"hidden", params.arch.hidden},
                {"feature_dim", params.arch.feature_dim},
                {"class_count", params.arch.class_count}}},
              {"feature_layers", layers},
              {"head", layer_to_json(params.head)}};
}

encoder::EncoderParams params_from_json(const Json& doc) {
  encoder::EncoderParams params;
  const Json& a = doc.at("architecture");
  params.arch.input_dim = a.at("input_dim").get<std::size_t>();
  params.arch.hidden = a.at("hidden").get<std::vector<std::size_t>>();
  params.arch.feature_dim = a.at("feature_dim").get<std::size_t>();
  params.arch.class_count = a.at("class_count").get<std::size_t>();
  for (const auto& layer : doc.at("feature_layers")) params.feature_layers.push_back(layer_from_json(layer));
  params.head = layer_from_json(doc.at("head"));
  params.validate();
  return params;
}

Json checkpoint_to_json(const Checkpoint& ck) {
  const auto raw = ck.state.duals.raw();
  return Json{{"format", kCheckpointFormat},
              {"version", kCheckpointVersion},
              {"config", config_to_json(ck.config)},
              {"params", params_to_json(ck.state.params)},
              {"duals", {{"raw", std::vector<double>(raw.begin(), raw.end())}, {"lambda", ck.state.duals.lambdas()}}},
              {"optimizer", {{"network", adam_to_json(ck.state.net_optimizer)},
                             {"dual", adam_to_json(ck.state.dual_optimizer)}}},
              {"step", ck.state.net_optimizer.step()},
              {"epochs_completed", ck.state.history.size()},
              {"history", history_to_json(ck.state.history)}};
}

Checkpoint checkpoint_from_json(const Json& doc) {
  try {
    require(doc.value("format", std::string()) == kCheckpointFormat, ErrorKind::Io, "not an ordcore checkpoint");
    require(doc.at("version").get<int>() == kCheckpointVersion, ErrorKind::Io, "unsupported checkpoint version");
    Checkpoint ck;
    ck.config = config_from_json(doc.at("config"));
    ck.state.params = params_from_json(doc.at("params"));
    ck.state.duals = dual::DualVariables::from_raw(doc.at("duals").at("raw").get<std::vector<double>>());
    ck.state.net_optimizer = adam_from_json(doc.at("optimizer").at("network"));
    ck.state.dual_optimizer = adam_from_json(doc.at("optimizer").at("dual"));
    if (doc.contains("history")) ck.state.history = history_from_json(doc.at("history"));
    return ck;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, std::string("malformed checkpoint: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::Io, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_json(checkpoint_to_json(checkpoint), path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_json(path)); }

Json history_to_json(const std::vector<train::EpochRecord>& history) {
  Json out = Json::array();
  for (const auto& r : history) {
    out.push_back(Json{{"epoch", r.epoch},
                       {"lr", r.lr},
                       {"l_or", r.l_or},
                       {"l_dual", r.l_dual},
                       {"l_ent", r.l_ent},
                       {"raw_kl", r.raw_kl},
                       {"residual", r.residual},
                       {"total", r.total},
                       {"lambda", r.lambdas}});
  }
  return out;
}

std::vector<train::EpochRecord> history_from_json(const Json& doc) {
  std::vector<train::EpochRecord> out;
  for (const auto& j : doc) {
    train::EpochRecord r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.lr = j.at("lr").get<double>();
    r.l_or = j.at("l_or").get<double>();
    r.l_dual = j.at("l_dual").get<double>();
    r.l_ent = j.at("l_ent").get<double>();
    r.raw_kl = j.at("raw_kl").get<double>();
    r.residual = j.at("residual").get<double>();
    r.total = j.at("total").get<double>();
    r.lambdas = j.at("lambda").get<std::vector<double>>();
    out.push_back(std::move(r));
  }
  return out;
}

Json report_to_json(const metrics::EvalReport& r) {
  return Json{{"mae", r.mae},
              {"accuracy", r.accuracy},
              {"cs", r.cs},
              {"cs_threshold", r.cs_threshold},
              {"srcc", optional_number(r.srcc)},
              {"plcc", optional_number(r.plcc)},
              {"ordinal_constraint_rate", r.ordinal_constraint_rate},
              {"manifold_order_score", optional_number(r.manifold_order_score)},
              {"raw_kl", r.raw_kl}};
}

metrics::EvalReport report_from_json(const Json& doc) {
  metrics::EvalReport r;
  r.mae = doc.at("mae").get<double>();
  r.accuracy = doc.at("accuracy").get<double>();
  r.cs = doc.at("cs").get<double>();
  r.cs_threshold = doc.at("cs_threshold").get<double>();
  r.srcc = optional_from(doc.at("srcc"));
  r.plcc = optional_from(doc.at("plcc"));
  r.ordinal_constraint_rate = doc.at("ordinal_constraint_rate").get<double>();
  r.manifold_order_score = optional_from(doc.at("manifold_order_score"));
  r.raw_kl = doc.at("raw_kl").get<double>();
  return r;
}

Json manifest_to_json(const RunManifest& m) {
  return Json{{"config", config_to_json(m.config)},
              {"seed", m.seed},
              {"dataset_fingerprint", m.dataset_fingerprint},
              {"history", history_to_json(m.history)},
              {"report", report_to_json(m.report)},
              {"timing", {{"seconds", m.seconds}}},
              {"warnings", m.warnings}};
}

RunManifest manifest_from_json(const Json& doc) {
  RunManifest m;
  m.config = config_from_json(doc.at("config"));
  m.seed = doc.at("seed").get<std::uint64_t>();
  m.dataset_fingerprint = doc.at("dataset_fingerprint").get<std::string>();
  m.history = history_from_json(doc.at("history"));
  m.report = report_from_json(doc.at("report"));
  m.seconds = doc.at("timing").at("seconds").get<double>();
  m.warnings = doc.at("warnings").get<std::vector<std::string>>();
  return m;
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Io, path.string() + " is not valid JSON: " + e.what());
  }
}

void write_json(const Json& doc, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
  require(static_cast<bool>(out), ErrorKind::Io, "write to " + path.string() + " failed");
}

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_csv(const CsvTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << "\n";
  };
  line(table.header);
  for (const auto& row : table.rows) line(row);
  require(static_cast<bool>(out), ErrorKind::Io, "write to " + path.string() + " failed");
}

CsvTable curves_table(const std::vector<train::EpochRecord>& history) {
  CsvTable table;
  table.header = {"epoch", "lr", "l_or", "l_dual", "l_ent", "raw_kl", "residual", "total"};
  const std::size_t classes = history.empty() ? 0 : history.front().lambdas.size();
  for (std::size_t c = 0; c < classes; ++c) table.header.push_back("lambda_" + std::to_string(c));
  for (const auto& r : history) {
    std::vector<std::string> row = {std::to_string(r.epoch), format_double(r.lr),     format_double(r.l_or),
                                    format_double(r.l_dual), format_double(r.l_ent),  format_double(r.raw_kl),
                                    format_double(r.residual), format_double(r.total)};
    for (double l : r.lambdas) row.push_back(format_double(l));
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace ordcore::io
