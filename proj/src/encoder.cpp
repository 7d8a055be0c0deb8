#include "ordcore/encoder.hpp"

#include "ordcore/error.hpp"
#include "ordcore/random.hpp"

#include <cmath>

namespace ordcore::encoder {

namespace {

std::vector<std::pair<std::size_t, std::size_t>> feature_shapes(const Architecture& arch) {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;  // (out, in)
  std::size_t in = arch.input_dim;
  for (std::size_t h : arch.hidden) {
    shapes.emplace_back(h, in);
    in = h;
  }
  shapes.emplace_back(arch.feature_dim, in);
  return shapes;
}

void check_arch(const Architecture& arch) {
  require(arch.input_dim >= 1 && arch.feature_dim >= 1 && arch.class_count >= 1,
          ErrorKind::Configuration, "architecture dimensions must be positive");
  for (std::size_t h : arch.hidden) {
    require(h >= 1, ErrorKind::Configuration, "hidden layer width must be positive");
  }
}

Layer make_layer(std::size_t out, std::size_t in) {
  return Layer{Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
               Vector::Zero(static_cast<Eigen::Index>(out))};
}

void check_layer(const Layer& layer, std::size_t out, std::size_t in, const char* what) {
  require(layer.weight.rows() == static_cast<Eigen::Index>(out) &&
              layer.weight.cols() == static_cast<Eigen::Index>(in) &&
              layer.bias.size() == static_cast<Eigen::Index>(out),
          ErrorKind::InvariantViolation, std::string(what) + " has the wrong shape");
  require(layer.weight.allFinite() && layer.bias.allFinite(), ErrorKind::InvariantViolation,
          std::string(what) + " has non-finite entries");
}

}  // namespace

void EncoderParams::validate() const {
  check_arch(arch);
  const auto shapes = feature_shapes(arch);
  require(feature_layers.size() == shapes.size(), ErrorKind::InvariantViolation,
          "feature layer count does not match the architecture");
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    check_layer(feature_layers[l], shapes[l].first, shapes[l].second, "feature layer");
  }
  check_layer(head, arch.class_count, arch.feature_dim, "head");
}

EncoderParams zero_params(const Architecture& arch) {
  check_arch(arch);
  EncoderParams params;
  params.arch = arch;
  for (const auto& [out, in] : feature_shapes(arch)) params.feature_layers.push_back(make_layer(out, in));
  params.head = make_layer(arch.class_count, arch.feature_dim);
  return params;
}

EncoderParams init_params(const Architecture& arch, std::uint64_t seed) {
  EncoderParams params = zero_params(arch);
  Rng rng(seed);
  auto fill = [&rng](Layer& layer) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = rng.uniform(-bound, bound);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = rng.uniform(-bound, bound);
  };
  for (auto& layer : params.feature_layers) fill(layer);
  fill(params.head);
  return params;
}

ForwardResult forward(const EncoderParams& params, const Matrix& inputs) {
  require(inputs.cols() == static_cast<Eigen::Index>(params.arch.input_dim), ErrorKind::Input,
          "input width " + std::to_string(inputs.cols()) + " does not match D_in = " +
              std::to_string(params.arch.input_dim));
  require(inputs.allFinite(), ErrorKind::Input, "inputs contain non-finite entries");
  ForwardResult out;
  Matrix act = inputs;
  const std::size_t last = params.feature_layers.size() - 1;
  for (std::size_t l = 0; l < params.feature_layers.size(); ++l) {
    const auto& layer = params.feature_layers[l];
    Matrix pre = act * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    out.inputs.push_back(std::move(act));
    act = l == last ? pre : Matrix(pre.cwiseMax(0.0));
    out.pre.push_back(std::move(pre));
  }
  out.features = std::move(act);
  out.logits = out.features * params.head.weight.transpose();
  out.logits.rowwise() += params.head.bias.transpose();
  return out;
}

ParamGradients backward(const EncoderParams& params, const ForwardResult& cache, const Matrix& grad_features,
                        const Matrix& grad_logits) {
  require(grad_features.rows() == cache.features.rows() && grad_features.cols() == cache.features.cols(),
          ErrorKind::Input, "feature gradient shape mismatch");
  require(grad_logits.rows() == cache.logits.rows() && grad_logits.cols() == cache.logits.cols(),
          ErrorKind::Input, "logit gradient shape mismatch");
  ParamGradients grads;
  grads.head.weight = grad_logits.transpose() * cache.features;
  grads.head.bias = grad_logits.colwise().sum().transpose();

  Matrix g = grad_features + grad_logits * params.head.weight;
  const std::size_t layers = params.feature_layers.size();
  grads.feature_layers.resize(layers);
  for (std::size_t l = layers; l-- > 0;) {
    if (l + 1 < layers) {
      // ReLU: no gradient through units with non-positive pre-activation
      g = g.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
    }
    grads.feature_layers[l].weight = g.transpose() * cache.inputs[l];
    grads.feature_layers[l].bias = g.colwise().sum().transpose();
    if (l > 0) g = g * params.feature_layers[l].weight;
  }
  return grads;
}

ParamGradients backward(const EncoderParams& params, const Matrix& inputs, const Matrix& grad_features,
                        const Matrix& grad_logits) {
  return backward(params, forward(params, inputs), grad_features, grad_logits);
}

std::vector<std::span<double>> parameter_blocks(EncoderParams& params) {
  std::vector<std::span<double>> blocks;
  auto add = [&blocks](Layer& layer) {
    blocks.emplace_back(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
    blocks.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  };
  for (auto& layer : params.feature_layers) add(layer);
  add(params.head);
  return blocks;
}

std::vector<std::span<const double>> gradient_blocks(const ParamGradients& grads) {
  std::vector<std::span<const double>> blocks;
  auto add = [&blocks](const Layer& layer) {
    blocks.emplace_back(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
    blocks.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  };
  for (const auto& layer : grads.feature_layers) add(layer);
  add(grads.head);
  return blocks;
}

void Adam::update(std::size_t block, std::span<double> params, std::span<const double> grads, double lr,
                  bool apply_weight_decay) {
  require(params.size() == grads.size(), ErrorKind::Input, "parameter and gradient blocks differ in size");
  require(step_ >= 1, ErrorKind::InvariantViolation, "Adam::update before begin_step");
  if (m_.size() <= block) {
    m_.resize(block + 1);
    v_.resize(block + 1);
  }
  if (m_[block].empty()) {
    m_[block].assign(params.size(), 0.0);
    v_[block].assign(params.size(), 0.0);
  }
  require(m_[block].size() == params.size(), ErrorKind::InvariantViolation, "Adam block changed size");
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double decay = apply_weight_decay ? options_.weight_decay : 0.0;
  auto& m = m_[block];
  auto& v = v_[block];
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + decay * params[i];
    m[i] = b1 * m[i] + (1.0 - b1) * g;
    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + options_.epsilon);
  }
}

void Adam::restore(std::int64_t step, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v) {
  require(step >= 0 && m.size() == v.size(), ErrorKind::InvariantViolation, "inconsistent optimizer state");
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace ordcore::encoder
