#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

#include "agwm/errors.hpp"

namespace agwm::nn {

/// Dense row-major tensor. The autodiff layer treats everything as 2D
/// [rows, cols]; convolution ops carry their spatial metadata separately.
template <typename T>
struct TensorData {
  std::vector<int> shape;
  std::vector<T> v;

  TensorData() = default;
  TensorData(std::vector<int> s, std::vector<T> values) : shape(std::move(s)), v(std::move(values)) {
    if (numel() != static_cast<std::size_t>(v.size()))
      throw DataError("tensor shape does not match value count");
  }

  static TensorData zeros(std::vector<int> s) {
    TensorData t;
    t.shape = std::move(s);
    t.v.assign(t.numel(), T(0));
    return t;
  }

  static TensorData full(std::vector<int> s, T value) {
    TensorData t;
    t.shape = std::move(s);
    t.v.assign(t.numel(), value);
    return t;
  }

  std::size_t numel() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }

  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const {
    if (shape.size() == 1) return 1;
    int c = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
    return c;
  }
};

}  // namespace agwm::nn
