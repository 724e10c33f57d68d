#include "coinmark/tensor.hpp"

#include <sstream>

#include "coinmark/error.hpp"

namespace coinmark {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::ShapeMismatch: return "shape mismatch";
    case ErrorKind::NumericalFailure: return "numerical failure";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Version: return "version mismatch";
    case ErrorKind::Truncated: return "truncated file";
    case ErrorKind::Checksum: return "checksum mismatch";
    case ErrorKind::MissingFile: return "missing file";
    case ErrorKind::UnknownLabel: return "unknown label";
    case ErrorKind::UnknownField: return "unknown field";
    case ErrorKind::ConstraintRestoreFailed: return "constraint restore failed";
  }
  return "error";
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape s) : shape(std::move(s)), values(shape_size(shape), 0.0) {
  for (auto d : shape) require(d > 0, "tensor dimensions must be positive");
}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  for (auto d : shape) require(d > 0, "tensor dimensions must be positive");
  if (shape_size(shape) != values.size()) {
    fail(ErrorKind::ShapeMismatch, "tensor " + shape_string(shape) + " cannot hold " +
                                       std::to_string(values.size()) + " values");
  }
}

}  // namespace coinmark
