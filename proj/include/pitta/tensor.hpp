#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "pitta/common.hpp"

namespace pitta {

// Dense row-major f64 tensor. Conv-path layout is (B, C, T); dense-path
// layout is (B, D); per-channel parameters are (C); scalars are {1}.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), 0.0) {}
  Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel_of(shape)) throw Error("Tensor: shape/data size mismatch");
  }

  static size_t numel_of(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
      if (d <= 0) throw Error("Tensor: nonpositive dimension");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  size_t numel() const { return data.size(); }
  double& operator[](size_t i) { return data[i]; }
  double operator[](size_t i) const { return data[i]; }

  // (B, C, T) accessor.
  double& at3(int b, int c, int t, int C, int T) {
    return data[(static_cast<size_t>(b) * C + c) * T + t];
  }
  double at3(int b, int c, int t, int C, int T) const {
    return data[(static_cast<size_t>(b) * C + c) * T + t];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace pitta
