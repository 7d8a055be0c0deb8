#include "ordcore/train.hpp"

#include "ordcore/baselines.hpp"
#include "ordcore/otd.hpp"

#include <cmath>
#include <sstream>

namespace ordcore::train {

const char* to_string(Sampling s) noexcept { return s == Sampling::Random ? "random" : "stratified"; }

const char* to_string(Baseline b) noexcept { return b == Baseline::Sord ? "sord" : "ce"; }

const char* to_string(Alignment a) noexcept {
  switch (a) {
    case Alignment::Dual: return "dual";
    case Alignment::Direct: return "direct";
    case Alignment::None: return "none";
  }
  return "unknown";
}

Sampling sampling_from_string(const std::string& s) {
  if (s == "random") return Sampling::Random;
  if (s == "stratified") return Sampling::Stratified;
  fail(ErrorKind::Configuration, "sampling must be 'random' or 'stratified', got '" + s + "'");
}

Baseline baseline_from_string(const std::string& s) {
  if (s == "sord") return Baseline::Sord;
  if (s == "ce") return Baseline::CrossEntropy;
  fail(ErrorKind::Configuration, "baseline must be 'sord' or 'ce', got '" + s + "'");
}

Alignment alignment_from_string(const std::string& s) {
  if (s == "dual") return Alignment::Dual;
  if (s == "direct") return Alignment::Direct;
  if (s == "none") return Alignment::None;
  fail(ErrorKind::Configuration, "alignment must be 'dual', 'direct' or 'none', got '" + s + "'");
}

void TrainConfig::validate() const {
  auto bound = [](bool ok, const std::string& what) { require(ok, ErrorKind::Configuration, what); };
  bound(std::isfinite(alpha) && alpha >= 0.0, "alpha must be >= 0");
  bound(std::isfinite(beta) && beta >= 0.0, "beta must be >= 0");
  bound(batch_size >= 2, "batch_size must be >= 2 (got " + std::to_string(batch_size) + ")");
  bound(epochs >= 1, "epochs must be >= 1");
  bound(std::isfinite(base_lr) && base_lr > 0.0, "base_lr must be > 0");
  bound(std::isfinite(decay_factor) && decay_factor > 0.0, "decay_factor must be > 0");
  bound(decay_period >= 1, "decay_period must be >= 1");
  bound(std::isfinite(weight_decay) && weight_decay >= 0.0, "weight_decay must be >= 0");
  bound(!dual_lr || (std::isfinite(*dual_lr) && *dual_lr > 0.0), "dual_lr must be > 0");
  bound(feature_dim >= 1, "feature_dim must be >= 1");
  for (std::size_t h : hidden) bound(h >= 1, "hidden layer widths must be >= 1");
}

double TrainConfig::learning_rate(std::size_t epoch) const {
  return base_lr * std::pow(decay_factor, static_cast<double>(epoch / decay_period));
}

double TrainConfig::dual_learning_rate(std::size_t epoch) const {
  return dual_lr.value_or(base_lr) * std::pow(decay_factor, static_cast<double>(epoch / decay_period));
}

encoder::Architecture architecture_for(const TrainConfig& config, const datagen::Dataset& data) {
  return encoder::Architecture{static_cast<std::size_t>(data.features.cols()), config.hidden, config.feature_dim,
                               data.class_count()};
}

TrainState initial_state(const TrainConfig& config, const datagen::Dataset& data) {
  config.validate();
  TrainState state;
  state.params = encoder::init_params(architecture_for(config, data), config.seed);
  state.duals = dual::DualVariables(data.class_count());
  state.net_optimizer = encoder::Adam(encoder::AdamOptions{0.9, 0.999, 1e-8, config.weight_decay});
  state.dual_optimizer = encoder::Adam(encoder::AdamOptions{0.9, 0.999, 1e-8, 0.0});
  return state;
}

std::vector<std::vector<std::size_t>> epoch_batches(const TrainConfig& config, const datagen::Dataset& data,
                                                    Rng& rng) {
  const std::size_t n = data.size();
  std::vector<std::vector<std::size_t>> batches;
  if (config.sampling == Sampling::Random) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start + config.batch_size <= n; start += config.batch_size) {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(start + config.batch_size));
    }
    return batches;
  }

  const std::size_t c = data.class_count();
  const std::size_t width = std::min(config.batch_size, c);
  std::vector<std::vector<std::size_t>> queues(c);
  for (std::size_t i = 0; i < n; ++i) queues[data.classes[i]].push_back(i);
  std::vector<std::size_t> cursor(c, 0);
  for (auto& q : queues) rng.shuffle(std::span<std::size_t>(q));
  const std::size_t count = n / width;
  std::size_t next_class = 0;
  for (std::size_t b = 0; b < count; ++b) {
    std::vector<std::size_t> batch;
    batch.reserve(width);
    while (batch.size() < width) {
      const std::size_t cls = next_class;
      next_class = (next_class + 1) % c;
      auto& q = queues[cls];
      if (q.empty()) continue;
      if (cursor[cls] == q.size()) {
        rng.shuffle(std::span<std::size_t>(q));
        cursor[cls] = 0;
      }
      batch.push_back(q[cursor[cls]++]);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

namespace {

bool all_finite(const encoder::ParamGradients& grads) {
  for (const auto& layer : grads.feature_layers) {
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  }
  return grads.head.weight.allFinite() && grads.head.bias.allFinite();
}

bool all_finite(const encoder::EncoderParams& params) {
  for (const auto& layer : params.feature_layers) {
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  }
  return params.head.weight.allFinite() && params.head.bias.allFinite();
}

struct StepStats {
  double l_or = 0.0;
  double l_dual = 0.0;
  double l_ent = 0.0;
  double raw_kl = 0.0;
  double residual = 0.0;
  double total = 0.0;
};

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& config, const datagen::Dataset& data) {
  config.validate();
  require(data.size() >= 2, ErrorKind::DegenerateBatch, "training needs at least 2 samples");
  TrainResult result;
  if (config.sampling == Sampling::Stratified && config.batch_size > data.class_count()) {
    result.warnings.push_back("stratified sampling caps the batch size at C = " +
                              std::to_string(data.class_count()) + " (batch_size " +
                              std::to_string(config.batch_size) + " requested)");
  }
  require(config.sampling == Sampling::Random || std::min(config.batch_size, data.class_count()) >= 2,
          ErrorKind::DegenerateBatch, "stratified batches need at least 2 classes");
  require(config.sampling == Sampling::Stratified || config.batch_size <= data.size(),
          ErrorKind::DegenerateBatch,
          "batch_size " + std::to_string(config.batch_size) + " exceeds the dataset size");

  TrainState state = initial_state(config, data);
  Rng sampler(config.seed ^ 0x9E3779B97F4A7C15ULL);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.learning_rate(epoch);
    const double dual_lr = config.dual_learning_rate(epoch);
    const auto batches = epoch_batches(config, data, sampler);
    StepStats sum;
    for (const auto& batch : batches) {
      const Matrix inputs = gather_rows(data.features, batch);
      Labels labels;
      std::vector<ClassId> classes;
      for (std::size_t i : batch) {
        labels.push_back(data.labels[i]);
        classes.push_back(data.classes[i]);
      }
      const auto fwd = encoder::forward(state.params, inputs);
      const Matrix& z = fwd.features;
      if (!z.allFinite() || !fwd.logits.allFinite()) {
        throw TrainingAborted("epoch " + std::to_string(epoch) + ": forward pass overflowed", state);
      }

      const auto l_or = config.baseline == Baseline::Sord
                            ? baselines::sord_loss(fwd.logits, baselines::sord_target_matrix(labels, data.ranks))
                            : baselines::cross_entropy(fwd.logits, classes);

      const dual::ClassPartition partition(classes);
      const auto prototypes = dual::prototype_rows(partition, labels, data.ranks);
      const auto q = otd::feature_otd(z);
      const auto p_tilde = dual::reparam_p(prototypes, state.duals, partition);
      const auto q_tilde = dual::reparam_q(q, state.duals, partition);

      StepStats step;
      step.l_or = l_or.value;
      step.raw_kl = dual::direct_kl_loss(otd::label_otd(labels), q);
      step.residual = dual::constraint_residual(p_tilde.entries(), q_tilde.entries(), partition);
      // Measured the same way under every alignment so that traces compare bit for bit.
      step.l_dual = dual::dual_kl_loss(p_tilde, q_tilde, partition);
      step.l_ent = dual::entropy_reg(state.duals, partition.present_classes());

      Matrix grad_z = Matrix::Zero(z.rows(), z.cols());
      std::vector<double> grad_raw;
      double align_term = 0.0;
      double ent_term = 0.0;
      switch (config.alignment) {
        case Alignment::Dual: {
          auto g = dual::dual_backward(z, prototypes, state.duals, partition, config.alpha, config.beta);
          align_term = step.l_dual;
          ent_term = step.l_ent;
          grad_z = std::move(g.features);
          grad_raw = std::move(g.raw);
          break;
        }
        case Alignment::Direct: {
          auto g = dual::direct_kl_backward(z, labels);
          align_term = g.value;
          grad_z = config.alpha * g.features;
          break;
        }
        case Alignment::None:
          break;
      }

      try {
        step.total = config.alignment == Alignment::None
                         ? dual::total_loss(l_or.value, 0.0, 0.0, 0.0, 0.0)
                         : dual::total_loss(l_or.value, align_term, ent_term, config.alpha,
                                            config.alignment == Alignment::Dual ? config.beta : 0.0);
      } catch (const Error& e) {
        throw TrainingAborted(std::string("epoch ") + std::to_string(epoch) + ": " + e.what(), state);
      }

      const auto grads = encoder::backward(state.params, fwd, grad_z, l_or.logits);
      bool finite = all_finite(grads);
      for (double g : grad_raw) finite = finite && std::isfinite(g);
      if (!finite) {
        throw TrainingAborted("epoch " + std::to_string(epoch) + ": non-finite gradient", state);
      }

      TrainState before = state;
      state.net_optimizer.begin_step();
      const auto param_blocks = encoder::parameter_blocks(state.params);
      const auto grad_blocks = encoder::gradient_blocks(grads);
      for (std::size_t b = 0; b < param_blocks.size(); ++b) {
        state.net_optimizer.update(b, param_blocks[b], grad_blocks[b], lr);
      }
      if (!grad_raw.empty()) {
        state.dual_optimizer.begin_step();
        state.dual_optimizer.update(0, state.duals.raw(), grad_raw, dual_lr, false);
      }
      bool params_finite = all_finite(state.params);
      for (double r : state.duals.raw()) params_finite = params_finite && std::isfinite(r);
      if (!params_finite) {
        throw TrainingAborted("epoch " + std::to_string(epoch) + ": optimizer produced non-finite parameters",
                              std::move(before));
      }

      sum.l_or += step.l_or;
      sum.l_dual += step.l_dual;
      sum.l_ent += step.l_ent;
      sum.raw_kl += step.raw_kl;
      sum.residual += step.residual;
      sum.total += step.total;
    }

    const auto nb = static_cast<double>(batches.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.l_or = sum.l_or / nb;
    rec.l_dual = sum.l_dual / nb;
    rec.l_ent = sum.l_ent / nb;
    rec.raw_kl = sum.raw_kl / nb;
    rec.residual = sum.residual / nb;
    rec.total = sum.total / nb;
    rec.lambdas = state.duals.lambdas();
    state.history.push_back(std::move(rec));
  }
  result.state = std::move(state);
  return result;
}

metrics::EvalReport evaluate(const encoder::EncoderParams& params, const datagen::Dataset& data,
                             std::size_t batch_size, double cs_threshold) {
  require(data.size() >= 3, ErrorKind::DegenerateBatch, "evaluation needs at least 3 samples");
  const auto fwd = encoder::forward(params, data.features);
  const auto expected = baselines::predict(fwd.logits, data.ranks, baselines::PredictMode::Expectation);
  const auto argmax = baselines::predict(fwd.logits, data.ranks, baselines::PredictMode::Argmax);

  metrics::EvalReport report;
  report.mae = metrics::mae(expected, data.labels);
  report.accuracy = metrics::accuracy(argmax, data.labels);
  report.cs_threshold = cs_threshold;
  report.cs = metrics::cumulative_score(expected, data.labels, cs_threshold);
  try {
    const auto corr = metrics::rank_correlations(expected, data.labels);
    report.srcc = corr.srcc;
    report.plcc = corr.plcc;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::UndefinedCorrelation) throw;
  }
  report.ordinal_constraint_rate = otd::ordinal_constraint_rate(fwd.features, data.labels);
  try {
    report.manifold_order_score = metrics::manifold_order_score(fwd.features, data.labels);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::UndefinedCorrelation) throw;
  }

  // Raw KL over fixed pseudo-random batches so class-ordered data still mixes.
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(0);
  rng.shuffle(std::span<std::size_t>(order));
  const std::size_t width = std::max<std::size_t>(2, std::min(batch_size, data.size()));
  double kl_sum = 0.0;
  std::size_t kl_batches = 0;
  for (std::size_t start = 0; start + width <= order.size(); start += width) {
    std::span<const std::size_t> rows(order.data() + start, width);
    Labels labels;
    for (std::size_t i : rows) labels.push_back(data.labels[i]);
    kl_sum += dual::direct_kl_loss(otd::label_otd(labels), otd::feature_otd(gather_rows(fwd.features, rows)));
    ++kl_batches;
  }
  report.raw_kl = kl_sum / static_cast<double>(kl_batches);
  return report;
}

}  // namespace ordcore::train
