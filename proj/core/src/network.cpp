#include "coinmark/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "coinmark/error.hpp"
#include "coinmark/random.hpp"

namespace coinmark {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void shape_error(std::size_t layer_index, const std::string& what,
                              const Shape& expected, const Shape& actual) {
  fail(ErrorKind::ShapeMismatch, "layer " + std::to_string(layer_index) + " (" + what +
                                     "): expected input " + shape_string(expected) +
                                     ", got " + shape_string(actual));
}

void conv_forward(const Conv2dSpec& s, const Layer& layer, const Tensor& in, Tensor& out) {
  const std::size_t H = in.shape[1], W = in.shape[2];
  const std::size_t Ho = out.shape[1], Wo = out.shape[2];
  const std::size_t k = s.kernel;
  const double* w = layer.weights.values.data();
  const double* x = in.values.data();
  double* y = out.values.data();
  for (std::size_t co = 0; co < s.out_channels; ++co) {
    double* yc = y + co * Ho * Wo;
    std::fill(yc, yc + Ho * Wo, layer.bias[co]);
    for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
      const double* xc = x + ci * H * W;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wv = w[((co * s.in_channels + ci) * k + ky) * k + kx];
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const double* row = xc + (oy * s.stride + ky) * W + kx;
            double* yrow = yc + oy * Wo;
            if (s.stride == 1) {
              for (std::size_t ox = 0; ox < Wo; ++ox) yrow[ox] += wv * row[ox];
            } else {
              for (std::size_t ox = 0; ox < Wo; ++ox) yrow[ox] += wv * row[ox * s.stride];
            }
          }
        }
      }
    }
  }
}

void conv_backward(const Conv2dSpec& s, const Layer& layer, const Tensor& in,
                   const std::vector<double>& gout, std::vector<double>& gin,
                   std::vector<Tensor>* pgrads, std::size_t pw, std::size_t pb) {
  const std::size_t H = in.shape[1], W = in.shape[2];
  const std::size_t Ho = layer.output_shape[1], Wo = layer.output_shape[2];
  const std::size_t k = s.kernel;
  const double* w = layer.weights.values.data();
  const double* x = in.values.data();
  double* gw = pgrads ? (*pgrads)[pw].values.data() : nullptr;
  double* gb = pgrads ? (*pgrads)[pb].values.data() : nullptr;
  for (std::size_t co = 0; co < s.out_channels; ++co) {
    const double* gc = gout.data() + co * Ho * Wo;
    if (gb) {
      double acc = 0.0;
      for (std::size_t i = 0; i < Ho * Wo; ++i) acc += gc[i];
      gb[co] = acc;
    }
    for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
      const double* xc = x + ci * H * W;
      double* gic = gin.data() + ci * H * W;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::size_t widx = ((co * s.in_channels + ci) * k + ky) * k + kx;
          const double wv = w[widx];
          double acc = 0.0;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const std::size_t base = (oy * s.stride + ky) * W + kx;
            const double* grow = gc + oy * Wo;
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const std::size_t idx = base + ox * s.stride;
              gic[idx] += wv * grow[ox];
              acc += grow[ox] * xc[idx];
            }
          }
          if (gw) gw[widx] = acc;
        }
      }
    }
  }
}

}  // namespace

std::string layer_name(const LayerSpec& spec) {
  return std::visit(overloaded{
                        [](const Conv2dSpec&) { return std::string("conv2d"); },
                        [](const MaxPoolSpec&) { return std::string("maxpool"); },
                        [](const ReluSpec&) { return std::string("relu"); },
                        [](const DenseSpec&) { return std::string("dense"); },
                        [](const SoftmaxSpec&) { return std::string("softmax"); },
                    },
                    spec);
}

Shape layer_output_shape(const LayerSpec& spec, const Shape& input, std::size_t layer_index) {
  return std::visit(
      overloaded{
          [&](const Conv2dSpec& s) -> Shape {
            require(s.kernel >= 1 && s.stride >= 1 && s.in_channels >= 1 && s.out_channels >= 1,
                    "conv2d parameters must be positive");
            if (input.size() != 3 || input[0] != s.in_channels || input[1] < s.kernel ||
                input[2] < s.kernel) {
              shape_error(layer_index, "conv2d", {s.in_channels, s.kernel, s.kernel}, input);
            }
            return {s.out_channels, (input[1] - s.kernel) / s.stride + 1,
                    (input[2] - s.kernel) / s.stride + 1};
          },
          [&](const MaxPoolSpec& s) -> Shape {
            require(s.size >= 1 && s.stride >= 1, "maxpool parameters must be positive");
            if (input.size() != 3 || input[1] < s.size || input[2] < s.size) {
              shape_error(layer_index, "maxpool", {input.empty() ? 1 : input[0], s.size, s.size},
                          input);
            }
            return {input[0], (input[1] - s.size) / s.stride + 1,
                    (input[2] - s.size) / s.stride + 1};
          },
          [&](const ReluSpec&) -> Shape { return input; },
          [&](const DenseSpec& s) -> Shape {
            require(s.in_units >= 1 && s.out_units >= 1, "dense parameters must be positive");
            if (shape_size(input) != s.in_units) {
              shape_error(layer_index, "dense", {s.in_units}, input);
            }
            return {s.out_units};
          },
          [&](const SoftmaxSpec&) -> Shape {
            if (input.size() != 1) shape_error(layer_index, "softmax", {shape_size(input)}, input);
            return input;
          },
      },
      spec);
}

void Tape::clear() {
  recorded_ = false;
  activations.clear();
  argmax.clear();
}

Network::Network(Shape input_shape, std::vector<LayerSpec> specs)
    : input_shape_(std::move(input_shape)) {
  require(!specs.empty(), "network needs at least one layer");
  for (auto d : input_shape_) require(d > 0, "input dimensions must be positive");
  Shape current = input_shape_;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    Layer layer;
    layer.spec = specs[i];
    layer.input_shape = current;
    layer.output_shape = layer_output_shape(specs[i], current, i);
    if (auto* c = std::get_if<Conv2dSpec>(&specs[i])) {
      layer.weights = Tensor({c->out_channels, c->in_channels, c->kernel, c->kernel});
      layer.bias = Tensor({c->out_channels});
    } else if (auto* d = std::get_if<DenseSpec>(&specs[i])) {
      layer.weights = Tensor({d->out_units, d->in_units});
      layer.bias = Tensor({d->out_units});
    }
    current = layer.output_shape;
    layers_.push_back(std::move(layer));
  }
}

const Shape& Network::output_shape() const {
  require(!layers_.empty(), "empty network");
  return layers_.back().output_shape;
}

std::vector<LayerSpec> Network::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) out.push_back(l.spec);
  return out;
}

void Network::init_weights(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& layer : layers_) {
    std::size_t fan_in = 0, fan_out = 0;
    if (auto* c = std::get_if<Conv2dSpec>(&layer.spec)) {
      fan_in = c->in_channels * c->kernel * c->kernel;
      fan_out = c->out_channels * c->kernel * c->kernel;
    } else if (auto* d = std::get_if<DenseSpec>(&layer.spec)) {
      fan_in = d->in_units;
      fan_out = d->out_units;
    } else {
      continue;
    }
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& w : layer.weights.values) w = rng.uniform(-a, a);
    std::fill(layer.bias.values.begin(), layer.bias.values.end(), 0.0);
  }
}

std::vector<Tensor*> Network::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    if (l.weights.size() == 0) continue;
    out.push_back(&l.weights);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Tensor*> Network::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& l : layers_) {
    if (l.weights.size() == 0) continue;
    out.push_back(&l.weights);
    out.push_back(&l.bias);
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

Tensor Network::forward(const Tensor& input) const {
  Tape scratch;
  return forward(input, scratch);
}

Tensor Network::forward(const Tensor& input, Tape& tape) const {
  require(!layers_.empty(), "forward on an empty network");
  if (input.shape != input_shape_) shape_error(0, layer_name(layers_[0].spec), input_shape_, input.shape);
  if (input.values.size() != shape_size(input.shape)) {
    fail(ErrorKind::ShapeMismatch, "input tensor values do not match its shape");
  }
  tape.clear();
  tape.activations.reserve(layers_.size() + 1);
  tape.activations.push_back(Tensor(input.shape, input.values));

  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& layer = layers_[li];
    const Tensor& in = tape.activations.back();
    Tensor out(layer.output_shape);
    std::visit(
        overloaded{
            [&](const Conv2dSpec& s) { conv_forward(s, layer, in, out); },
            [&](const MaxPoolSpec& s) {
              const std::size_t C = in.shape[0], H = in.shape[1], W = in.shape[2];
              const std::size_t Ho = out.shape[1], Wo = out.shape[2];
              std::vector<std::size_t> winners(out.size());
              for (std::size_t c = 0; c < C; ++c) {
                for (std::size_t oy = 0; oy < Ho; ++oy) {
                  for (std::size_t ox = 0; ox < Wo; ++ox) {
                    std::size_t best = (c * H + oy * s.stride) * W + ox * s.stride;
                    for (std::size_t py = 0; py < s.size; ++py) {
                      for (std::size_t px = 0; px < s.size; ++px) {
                        const std::size_t idx = (c * H + oy * s.stride + py) * W + ox * s.stride + px;
                        // Strict comparison keeps the first maximal element.
                        if (in.values[idx] > in.values[best]) best = idx;
                      }
                    }
                    const std::size_t o = (c * Ho + oy) * Wo + ox;
                    out.values[o] = in.values[best];
                    winners[o] = best;
                  }
                }
              }
              tape.argmax.push_back(std::move(winners));
            },
            [&](const ReluSpec&) {
              for (std::size_t i = 0; i < in.size(); ++i) out.values[i] = std::max(0.0, in.values[i]);
            },
            [&](const DenseSpec& s) {
              const double* w = layer.weights.values.data();
              for (std::size_t o = 0; o < s.out_units; ++o) {
                double acc = layer.bias[o];
                const double* row = w + o * s.in_units;
                for (std::size_t i = 0; i < s.in_units; ++i) acc += row[i] * in.values[i];
                out.values[o] = acc;
              }
            },
            [&](const SoftmaxSpec&) { out.values = softmax(in.values); },
        },
        layer.spec);
    tape.activations.push_back(std::move(out));
  }
  tape.recorded_ = true;
  return tape.activations.back();
}

Tensor Network::backward(Tape& tape, std::span<const double> output_grad) {
  std::vector<Tensor> grads;
  for (const auto* p : std::as_const(*this).parameters()) grads.emplace_back(p->shape);
  Tensor gin = backward_impl(tape, output_grad, &grads);
  auto params = parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->grad = std::move(grads[i].values);
  return gin;
}

Tensor Network::input_backward(Tape& tape, std::span<const double> output_grad) const {
  return backward_impl(tape, output_grad, nullptr);
}

Tensor Network::backward_impl(Tape& tape, std::span<const double> output_grad,
                              std::vector<Tensor>* param_grads) const {
  if (!tape.recorded()) fail(ErrorKind::InvalidArgument, "backward called before forward");
  if (output_grad.size() != tape.activations.back().size()) {
    fail(ErrorKind::ShapeMismatch, "output gradient has " + std::to_string(output_grad.size()) +
                                       " entries, network output has " +
                                       std::to_string(tape.activations.back().size()));
  }
  std::vector<double> g(output_grad.begin(), output_grad.end());
  std::size_t param_slot = param_grads ? param_grads->size() : 0;
  std::size_t pool_slot = tape.argmax.size();

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& layer = layers_[li];
    const Tensor& in = tape.activations[li];
    const Tensor& out = tape.activations[li + 1];
    std::vector<double> gin(in.size(), 0.0);
    std::visit(
        overloaded{
            [&](const Conv2dSpec& s) {
              param_slot -= param_grads ? 2 : 0;
              conv_backward(s, layer, in, g, gin, param_grads, param_slot, param_slot + 1);
            },
            [&](const MaxPoolSpec&) {
              const auto& winners = tape.argmax[--pool_slot];
              for (std::size_t o = 0; o < g.size(); ++o) gin[winners[o]] += g[o];
            },
            [&](const ReluSpec&) {
              for (std::size_t i = 0; i < gin.size(); ++i) gin[i] = in.values[i] > 0.0 ? g[i] : 0.0;
            },
            [&](const DenseSpec& s) {
              const double* w = layer.weights.values.data();
              for (std::size_t o = 0; o < s.out_units; ++o) {
                const double go = g[o];
                const double* row = w + o * s.in_units;
                for (std::size_t i = 0; i < s.in_units; ++i) gin[i] += row[i] * go;
              }
              if (param_grads) {
                param_slot -= 2;
                double* gw = (*param_grads)[param_slot].values.data();
                double* gb = (*param_grads)[param_slot + 1].values.data();
                for (std::size_t o = 0; o < s.out_units; ++o) {
                  gb[o] = g[o];
                  double* row = gw + o * s.in_units;
                  for (std::size_t i = 0; i < s.in_units; ++i) row[i] = g[o] * in.values[i];
                }
              }
            },
            [&](const SoftmaxSpec&) {
              double dot = 0.0;
              for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * out.values[i];
              for (std::size_t i = 0; i < g.size(); ++i) gin[i] = out.values[i] * (g[i] - dot);
            },
        },
        layer.spec);
    g = std::move(gin);
  }

  Tensor& input = tape.activations.front();
  input.grad = g;
  return Tensor(input.shape, std::move(g));
}

std::vector<double> softmax(std::span<const double> scores) {
  require(!scores.empty(), "softmax of an empty score vector");
  double m = -std::numeric_limits<double>::infinity();
  for (double s : scores) {
    if (!std::isfinite(s)) fail(ErrorKind::NumericalFailure, "non-finite class score");
    m = std::max(m, s);
  }
  std::vector<double> p(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp(scores[i] - m);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return p;
}

double softmax_loss(std::span<const double> scores, std::size_t c) {
  require(!scores.empty(), "softmax loss of an empty score vector");
  require(c < scores.size(), "class index out of range");
  double m = -std::numeric_limits<double>::infinity();
  for (double s : scores) {
    if (!std::isfinite(s)) fail(ErrorKind::NumericalFailure, "non-finite class score");
    m = std::max(m, s);
  }
  double total = 0.0;
  for (double s : scores) total += std::exp(s - m);
  // log-sum-exp minus the target score; never negative up to rounding.
  return std::max(0.0, std::log(total) - (scores[c] - m));
}

LossWithGrad softmax_loss_grad(std::span<const double> scores, std::size_t c) {
  LossWithGrad out;
  out.loss = softmax_loss(scores, c);
  out.grad = softmax(scores);
  out.grad[c] -= 1.0;
  return out;
}

Tensor input_gradient(const Network& net, const Tensor& input, std::size_t c) {
  Tape tape;
  const Tensor scores = net.forward(input, tape);
  const auto lg = softmax_loss_grad(scores.values, c);
  return net.input_backward(tape, lg.grad);
}

std::size_t argmax(std::span<const double> values) {
  require(!values.empty(), "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace coinmark
