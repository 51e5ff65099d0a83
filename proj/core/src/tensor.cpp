#include "clue/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "clue/errors.hpp"

namespace clue::ad {

std::size_t num_elements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {
void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive: " + shape_string(shape));
  }
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : data_(std::make_shared<TensorData>()) {
  check_shape(shape);
  data_->value.assign(num_elements(shape), fill);
  data_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : data_(std::make_shared<TensorData>()) {
  check_shape(shape);
  if (values.size() != num_elements(shape)) {
    throw ShapeError("tensor of shape " + shape_string(shape) + " given " +
                     std::to_string(values.size()) + " values");
  }
  data_->shape = std::move(shape);
  data_->value = std::move(values);
}

Tensor Tensor::vector(std::vector<double> v) {
  std::size_t n = v.size();
  return Tensor(Shape{n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  return t;
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  }
  return data_->value[0];
}

void Tensor::set_requires_grad(bool on) {
  data_->requires_grad = on;
  if (on) {
    data_->grad.assign(data_->value.size(), 0.0);
  } else {
    data_->grad.clear();
  }
}

void Tensor::zero_grad() {
  std::fill(data_->grad.begin(), data_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t;
  t.data_ = std::make_shared<TensorData>(*data_);
  return t;
}

}  // namespace clue::ad
