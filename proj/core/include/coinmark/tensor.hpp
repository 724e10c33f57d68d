#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace coinmark {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Image-like tensors use the layout
/// [channels, height, width], so the flat index is (ch * H + y) * W + x.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  /// Filled by a backward pass; empty until then.
  std::vector<double> grad;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, std::vector<double> v);

  std::size_t size() const { return values.size(); }
  bool has_grad() const { return grad.size() == values.size() && !values.empty(); }

  std::span<double> span() { return values; }
  std::span<const double> span() const { return values; }

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

}  // namespace coinmark
