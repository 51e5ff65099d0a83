#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace clue::ad {

using Shape = std::vector<std::size_t>;

std::size_t num_elements(const Shape& shape);
std::string shape_string(const Shape& shape);

struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized like value iff requires_grad
  bool requires_grad = false;
};

/// Dense row-major array of doubles.
///
/// Tensor is a handle: copies share storage, which is what lets the tape
/// route adjoints back into parameters. Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{1}, {v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);
  /// A leaf that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return data_->shape; }
  std::size_t rank() const { return data_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return data_->shape.at(axis); }
  std::size_t size() const { return data_->value.size(); }

  std::span<const double> values() const { return data_->value; }
  std::span<double> values() { return data_->value; }
  // Gradient buffers are accumulation targets shared by every handle.
  std::span<double> grad() const { return data_->grad; }

  double operator[](std::size_t i) const { return data_->value[i]; }
  double& operator[](std::size_t i) { return data_->value[i]; }
  double at(std::size_t i, std::size_t j) const {
    return data_->value[i * data_->shape.back() + j];
  }
  /// Value of an extent-1 tensor.
  double item() const;

  bool requires_grad() const { return data_->requires_grad; }
  void set_requires_grad(bool on);
  void zero_grad();

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return data_ == other.data_; }

 private:
  std::shared_ptr<TensorData> data_;
};

}  // namespace clue::ad
