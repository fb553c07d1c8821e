#pragma once

// Multi-layer LSTM regressor: forward pass, backpropagation through time,
// dropout and Adam. Gate blocks are stacked in the fixed order
// input, forget, cell-candidate, output inside every 4H-row weight matrix.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "irloss/tensor.hpp"

namespace irloss {

enum class Gate : std::size_t { input = 0, forget = 1, candidate = 2, output = 3 };

struct LstmLayerParams {
  Matrix input_weights;   // 4H x D
  Matrix hidden_weights;  // 4H x H
  Vector bias;            // 4H

  std::size_t input_size() const noexcept { return input_weights.cols(); }
  std::size_t hidden_size() const noexcept { return hidden_weights.cols(); }

  bool operator==(const LstmLayerParams&) const = default;
};

/// The tensors shared by parameters, gradients and optimizer moments.
struct ParamTensors {
  std::vector<LstmLayerParams> layers;
  Matrix output_weights;  // M x H_last
  Vector output_bias;     // M

  std::size_t input_size() const;
  std::size_t output_size() const noexcept { return output_bias.size(); }
  std::size_t parameter_count() const;

  /// Every tensor in declaration order: per layer (input weights, hidden
  /// weights, bias), then output weights, output bias.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  bool same_shape(const ParamTensors& other) const;
  bool all_finite() const;

  bool operator==(const ParamTensors&) const = default;
};

struct ModelParams : ParamTensors {
  /// Applied at every layer boundary: between stacked LSTM layers and
  /// between the top layer and the output projection.
  double dropout = 0.0;

  /// Throws std::invalid_argument / ShapeError when the structure is illegal.
  void validate() const;

  bool operator==(const ModelParams&) const = default;
};

struct Gradients : ParamTensors {
  static Gradients zeros_like(const ParamTensors& shape);

  void set_zero();
  void scale(double factor);
  Gradients& operator+=(const Gradients& other);
};

struct LayerShape {
  std::size_t input_size;
  std::size_t hidden_size;
};

/// Uniform Glorot-style initialization per matrix, zero biases except the
/// forget-gate slice which starts at 1.0.
ModelParams init_params(std::span<const LayerShape> layers, std::size_t output_dim,
                        std::uint64_t seed, double dropout = 0.0);

enum class Mode { train, eval };

struct LayerCache {
  Sequence inputs;      // what the layer consumed (after dropout)
  Sequence input_mask;  // dropout mask on the inputs, empty when unused
  Sequence gates;       // activated gates per step, 4H each
  Sequence cells;       // c_t
  Sequence cell_tanh;   // tanh(c_t)
  Sequence hiddens;     // h_t
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Vector top_hidden;  // readout input after dropout
  Vector top_mask;    // empty when dropout inactive
};

struct ForwardResult {
  Vector prediction;
  ForwardCache cache;
};

/// Runs the stack over the sequence and projects the last top-layer hidden
/// state. Dropout masks are drawn from `seed` in train mode only.
ForwardResult forward(const ModelParams& params, const Sequence& sequence, Mode mode,
                      std::uint64_t seed = 0);

/// Eval-mode forward without keeping the cache.
Vector predict(const ModelParams& params, const Sequence& sequence);

/// Reverse-mode gradient of <loss_grad, prediction> w.r.t. every parameter.
Gradients backward(const ModelParams& params, const ForwardCache& cache,
                   std::span<const double> loss_grad);

/// Same as backward() but adds into an existing accumulator.
void backward_into(const ModelParams& params, const ForwardCache& cache,
                   std::span<const double> loss_grad, Gradients& grads);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Gradients first_moment;
  Gradients second_moment;
  std::uint64_t step = 0;
  AdamConfig config;

  static AdamState fresh(const ParamTensors& shape, AdamConfig config = {});
};

/// One bias-corrected Adam update, in place.
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state);

// Binary parameter container, little-endian. See docs/checkpoint_format.md.
void write_params(std::ostream& out, const ModelParams& params);
ModelParams read_params(std::istream& in);

}  // namespace irloss
