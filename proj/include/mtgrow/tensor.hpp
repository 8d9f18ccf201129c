#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mtgrow/common.hpp"

namespace mtgrow {

// Dense row-major tensor of 64-bit reals. The optional grad buffer exists
// only on trainable parameters and always mirrors the data shape.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;
  std::optional<std::vector<double>> grad;

  Tensor() = default;
  Tensor(std::vector<int64_t> shape_, std::vector<double> data_);

  static Tensor zeros(std::vector<int64_t> shape);
  static Tensor full(std::vector<int64_t> shape, double value);
  static Tensor scalar(double value);
  static Tensor randn(std::vector<int64_t> shape, GaussianStream& stream, double stddev);

  int64_t numel() const;
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int axis) const;
  // 2-D accessors
  int64_t rows() const { return dim(0); }
  int64_t cols() const { return dim(1); }
  double& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  double at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  void ensure_grad();
  void zero_grad();

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_str(const std::vector<int64_t>& shape);

bool bitwise_equal(const Tensor& a, const Tensor& b);
double frobenius_norm(const Tensor& t);
double frobenius_distance(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace mtgrow
