#pragma once

// x -> z = f(x) -> logits = g(z): a fully connected feature map with ReLU
// hidden layers and a linear feature output, followed by a linear head.

#include "ordcore/types.hpp"

#include <cstdint>
#include <vector>

namespace ordcore::encoder {

struct Architecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t feature_dim = 0;
  std::size_t class_count = 0;

  bool operator==(const Architecture&) const = default;
};

// y = x W^T + b, W is out x in.
struct Layer {
  Matrix weight;
  Vector bias;
};

struct EncoderParams {
  Architecture arch;
  std::vector<Layer> feature_layers;  // hidden layers then the feature layer
  Layer head;

  // Throws InvariantViolation on shape mismatch or non-finite entries.
  void validate() const;
};

// Symmetric uniform fan-in initialisation: U(-1/sqrt(in), 1/sqrt(in)).
EncoderParams init_params(const Architecture& arch, std::uint64_t seed);

EncoderParams zero_params(const Architecture& arch);

struct ForwardResult {
  std::vector<Matrix> inputs;  // input to each feature layer
  std::vector<Matrix> pre;     // pre-activation of each feature layer
  Matrix features;
  Matrix logits;
};

ForwardResult forward(const EncoderParams& params, const Matrix& inputs);

struct ParamGradients {
  std::vector<Layer> feature_layers;
  Layer head;
};

// Gradients of a scalar loss given dL/dz and dL/dlogits for the batch.
ParamGradients backward(const EncoderParams& params, const ForwardResult& cache,
                        const Matrix& grad_features, const Matrix& grad_logits);

// Convenience overload that reruns the forward pass.
ParamGradients backward(const EncoderParams& params, const Matrix& inputs, const Matrix& grad_features,
                        const Matrix& grad_logits);

// Flat views over every parameter tensor in a fixed order: feature layers
// (weight then bias) followed by the head.
std::vector<std::span<double>> parameter_blocks(EncoderParams& params);
std::vector<std::span<const double>> gradient_blocks(const ParamGradients& grads);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

// Adam with coupled weight decay. Moments are allocated lazily per block on
// the first step.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  // Advances the shared step counter; call once per optimisation step before
  // updating any block.
  void begin_step() { ++step_; }

  void update(std::size_t block, std::span<double> params, std::span<const double> grads, double lr,
              bool apply_weight_decay = true);

  std::int64_t step() const noexcept { return step_; }
  const AdamOptions& options() const noexcept { return options_; }
  const std::vector<std::vector<double>>& first_moments() const noexcept { return m_; }
  const std::vector<std::vector<double>>& second_moments() const noexcept { return v_; }

  void restore(std::int64_t step, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v);

 private:
  AdamOptions options_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace ordcore::encoder
