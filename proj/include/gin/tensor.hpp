#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace gin::ad {

// Dense row-major tensor of 64-bit reals. Rank is 1 or 2 everywhere in this
// project; higher ranks are not needed and not supported by the tape ops.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> s) {
    Tensor t;
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    t.shape = std::move(s);
    t.values.assign(n, 0.0);
    return t;
  }

  static Tensor vector(std::size_t n) { return zeros({n}); }
  static Tensor matrix(std::size_t r, std::size_t c) { return zeros({r, c}); }

  static Tensor from(std::initializer_list<double> v) {
    Tensor t;
    t.shape = {v.size()};
    t.values.assign(v);
    return t;
  }

  std::size_t size() const { return values.size(); }
  bool is_vector() const { return shape.size() == 1; }
  bool is_matrix() const { return shape.size() == 2; }

  std::size_t rows() const {
    if (!is_matrix()) throw std::invalid_argument("tensor: rows() on non-matrix");
    return shape[0];
  }
  std::size_t cols() const {
    if (!is_matrix()) throw std::invalid_argument("tensor: cols() on non-matrix");
    return shape[1];
  }

  double& operator()(std::size_t i) { return values[i]; }
  double operator()(std::size_t i) const { return values[i]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * shape[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * shape[1] + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { std::fill(values.begin(), values.end(), v); }
};

}  // namespace gin::ad
