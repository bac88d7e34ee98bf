#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "crowdmap/errors.hpp"

namespace crowdmap {

/// Dense row-major N-D array of doubles with an optional same-shape
/// gradient slot. Network code uses rank-3 (channels, rows, cols) tensors;
/// batches are explicit vectors of them.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty when absent

  Tensor() = default;
  explicit Tensor(std::vector<int> s)
      : shape(std::move(s)), values(numel(shape), 0.0) {}
  Tensor(std::initializer_list<int> s) : Tensor(std::vector<int>(s)) {}

  static std::size_t numel(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d <= 0) throw ValidationError("tensor dimensions must be positive");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t size() const { return values.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  // (channel, row, col) addressing for rank-3 tensors.
  std::size_t index3(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x;
  }
  double& at3(int c, int y, int x) { return values[index3(c, y, x)]; }
  double at3(int c, int y, int x) const { return values[index3(c, y, x)]; }

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
  bool has_grad() const { return grad.size() == values.size(); }

  void check_invariants() const {
    if (values.size() != numel(shape)) {
      throw ValidationError("tensor value count does not match shape");
    }
    if (!grad.empty() && grad.size() != values.size()) {
      throw ValidationError("tensor gradient does not match shape");
    }
  }
};

inline bool same_shape(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape;
}

}  // namespace crowdmap
