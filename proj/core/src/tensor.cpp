#include "moldkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace moldkit {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " elements");
  }
}

template <typename T>
Tensor<T> Tensor<T>::from_rows(std::initializer_list<std::initializer_list<T>> rows) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.begin()->size() : 0;
  std::vector<T> data;
  data.reserve(m * n);
  for (const auto& r : rows) {
    if (r.size() != n) throw DimensionError("ragged rows in Tensor::from_rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({m, n}, std::move(data));
}

template <typename T>
Tensor<T> Tensor<T>::vector(std::initializer_list<T> values) {
  return Tensor({values.size()}, std::vector<T>(values));
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> c({m, n});
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = 0; t < k; ++t) {
      const double lhs = a[i * k + t];
      const T* brow = b.data() + t * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += lhs * static_cast<double>(brow[j]);
    }
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = static_cast<T>(acc[j]);
  }
  return c;
}

template <typename T>
void vec_matmul(std::span<const T> x, const Tensor<T>& w, std::span<const T> bias,
                std::span<T> out) {
  if (w.rank() != 2 || x.size() != w.dim(0) || out.size() != w.dim(1) ||
      (!bias.empty() && bias.size() != w.dim(1))) {
    throw DimensionError("vec_matmul shape mismatch: [" + std::to_string(x.size()) + "] x " +
                         shape_string(w.shape()));
  }
  const std::size_t k = w.dim(0), n = w.dim(1);
  std::vector<double> acc(n, 0.0);
  for (std::size_t t = 0; t < k; ++t) {
    const double lhs = x[t];
    const T* wrow = w.data() + t * n;
    for (std::size_t j = 0; j < n; ++j) acc[j] += lhs * static_cast<double>(wrow[j]);
  }
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = static_cast<T>(bias.empty() ? acc[j] : acc[j] + static_cast<double>(bias[j]));
  }
}

template <typename T>
void softmax_inplace(std::span<T> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of an empty vector");
  const T peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (auto& v : logits) {
    const double e = std::exp(static_cast<double>(v) - static_cast<double>(peak));
    v = static_cast<T>(e);
    total += e;
  }
  for (auto& v : logits) v = static_cast<T>(static_cast<double>(v) / total);
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  std::vector<T> out(logits.begin(), logits.end());
  softmax_inplace(std::span<T>(out));
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

template <typename T>
void gelu_inplace(std::span<T> values) {
  for (auto& v : values) v = static_cast<T>(gelu(static_cast<double>(v)));
}

template <typename T>
std::vector<T> layernorm(std::span<const T> x, std::span<const T> gamma, std::span<const T> beta,
                         double eps) {
  if (x.empty() || gamma.size() != x.size() || beta.size() != x.size()) {
    throw DimensionError("layernorm expects x, gamma, beta of equal nonzero length");
  }
  double mean = 0.0;
  for (auto v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (auto v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = static_cast<T>(gamma[i] * ((x[i] - mean) * inv) + beta[i]);
  }
  return out;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

#define MOLDKIT_INSTANTIATE(T)                                                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template void vec_matmul(std::span<const T>, const Tensor<T>&, std::span<const T>,           \
                           std::span<T>);                                                      \
  template std::vector<T> softmax(std::span<const T>);                                         \
  template void softmax_inplace(std::span<T>);                                                 \
  template void gelu_inplace(std::span<T>);                                                   \
  template std::vector<T> layernorm(std::span<const T>, std::span<const T>, std::span<const T>, \
                                    double);

MOLDKIT_INSTANTIATE(float)
MOLDKIT_INSTANTIATE(double)

#undef MOLDKIT_INSTANTIATE

}  // namespace moldkit
