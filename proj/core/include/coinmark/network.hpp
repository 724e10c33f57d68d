#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "coinmark/tensor.hpp"

namespace coinmark {

// Layer descriptions. Convolutions use valid padding; inputs are [C, H, W].
struct Conv2dSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
};

struct MaxPoolSpec {
  std::size_t size = 2;
  std::size_t stride = 2;
};

struct ReluSpec {};

/// Fully connected; flattens its input, so any input with `in_units`
/// elements is accepted.
struct DenseSpec {
  std::size_t in_units = 1;
  std::size_t out_units = 1;
};

struct SoftmaxSpec {};

using LayerSpec = std::variant<Conv2dSpec, MaxPoolSpec, ReluSpec, DenseSpec, SoftmaxSpec>;

std::string layer_name(const LayerSpec& spec);

/// Output shape of `spec` applied to `input`. Throws ShapeMismatch naming
/// `layer_index` when the input does not fit the layer.
Shape layer_output_shape(const LayerSpec& spec, const Shape& input, std::size_t layer_index);

struct Layer {
  LayerSpec spec;
  Shape input_shape;
  Shape output_shape;
  Tensor weights;  // empty for parameter-free layers
  Tensor bias;
};

/// Activations recorded by a forward pass, consumed by backward. One tape
/// per thread; the network itself is not modified by forward.
class Tape {
 public:
  bool recorded() const { return recorded_; }
  void clear();

 private:
  friend class Network;
  bool recorded_ = false;
  std::vector<Tensor> activations;             // input followed by each layer output
  std::vector<std::vector<std::size_t>> argmax;  // per maxpool layer, winning input index
};

/// A strict chain of layers evaluated in order.
class Network {
 public:
  Network() = default;
  /// Validates shape chaining at build time and allocates zeroed parameters.
  Network(Shape input_shape, std::vector<LayerSpec> specs);

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const;
  std::size_t layer_count() const { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  Layer& layer(std::size_t i) { return layers_.at(i); }
  std::vector<LayerSpec> specs() const;

  /// Uniform init in [-a, a] with a = sqrt(6 / (fan_in + fan_out)); biases zero.
  void init_weights(std::uint64_t seed);

  /// All trainable tensors in layer order (weights then bias per layer).
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const;

  Tensor forward(const Tensor& input) const;
  Tensor forward(const Tensor& input, Tape& tape) const;

  /// Back-propagates `output_grad` through the recorded pass. Overwrites the
  /// grad of every parameter and of the tape's input tensor, which is also
  /// returned.
  Tensor backward(Tape& tape, std::span<const double> output_grad);

  /// Same as backward but leaves parameter grads untouched; only the
  /// gradient with respect to the input is computed.
  Tensor input_backward(Tape& tape, std::span<const double> output_grad) const;

 private:
  Tensor backward_impl(Tape& tape, std::span<const double> output_grad,
                       std::vector<Tensor>* param_grads) const;

  Shape input_shape_;
  std::vector<Layer> layers_;
};

/// Numerically stable softmax (max-subtracted).
std::vector<double> softmax(std::span<const double> scores);

/// Negative log softmax probability of class c.
double softmax_loss(std::span<const double> scores, std::size_t c);

struct LossWithGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d scores = p - onehot(c)
};

LossWithGrad softmax_loss_grad(std::span<const double> scores, std::size_t c);

/// d softmax_loss(forward(input), c) / d input, same shape as input.
Tensor input_gradient(const Network& net, const Tensor& input, std::size_t c);

/// Index of the largest value; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace coinmark
