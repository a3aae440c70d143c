#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "moldkit/error.hpp"

namespace moldkit {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major tensor. T is float or double.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  static Tensor from_rows(std::initializer_list<std::initializer_list<T>> rows);
  static Tensor vector(std::initializer_list<T> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(std::size_t row, std::size_t col) { return data_[row * shape_[1] + col]; }
  const T& at(std::size_t row, std::size_t col) const { return data_[row * shape_[1] + col]; }

  // Row `r` of a rank-2 tensor.
  std::span<T> row(std::size_t r) { return {data_.data() + r * shape_[1], shape_[1]}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * shape_[1], shape_[1]};
  }

  void fill(T value);
  bool all_finite() const;

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

extern template class Tensor<float>;
extern template class Tensor<double>;

// c = a·b for a[m×k], b[k×n]. Accumulates in double for every dtype.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// y[n] = x[k]·w[k×n] (+ bias[n] when non-empty), accumulated in double.
template <typename T>
void vec_matmul(std::span<const T> x, const Tensor<T>& w, std::span<const T> bias,
                std::span<T> out);

// Numerically stable softmax with max subtraction. Throws on empty input.
template <typename T>
std::vector<T> softmax(std::span<const T> logits);
template <typename T>
void softmax_inplace(std::span<T> logits);

// Exact GELU x·Φ(x) using erf.
double gelu(double x);
// dGELU/dx = Φ(x) + x·φ(x).
double gelu_grad(double x);
template <typename T>
void gelu_inplace(std::span<T> values);

// gamma ⊙ (x − mean) / sqrt(var + eps) + beta with population variance.
template <typename T>
std::vector<T> layernorm(std::span<const T> x, std::span<const T> gamma,
                         std::span<const T> beta, double eps);

// Stable logistic function.
double sigmoid(double z);

}  // namespace moldkit
