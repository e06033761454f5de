#pragma once

#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ser/common.hpp"

namespace ser::nn {

// Row-major N-d array with an optional same-shape gradient buffer.
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> values;
  std::vector<T> grad;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    values.assign(numel_of(shape), T(0));
  }

  Tensor(std::vector<std::size_t> s, std::vector<T> v)
      : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != numel_of(shape))
      throw shape_error("tensor: value count does not match shape");
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) {
      if (d == 0) throw shape_error("tensor: zero extent");
      n *= d;
    }
    return n;
  }

  std::size_t numel() const { return values.size(); }
  std::size_t ndim() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  void alloc_grad() { grad.assign(values.size(), T(0)); }
  bool has_grad() const { return grad.size() == values.size(); }

  // NCHW accessors
  T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return values[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  const T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return values[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  T& at2(std::size_t n, std::size_t d) { return values[n * shape[1] + d]; }
  const T& at2(std::size_t n, std::size_t d) const { return values[n * shape[1] + d]; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i)
      os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.values.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
      out.values[i] = static_cast<U>(values[i]);
    return out;
  }
};

template <typename T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape == b.shape;
}

}  // namespace ser::nn
