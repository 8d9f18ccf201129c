#include "mtgrow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace mtgrow {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d <= 0) fail(ErrorKind::Shape, "non-positive dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream ss;
  ss << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) ss << "x";
    ss << shape[i];
  }
  ss << "]";
  return ss.str();
}

Tensor::Tensor(std::vector<int64_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    fail(ErrorKind::Shape, "data length " + std::to_string(data.size()) +
                               " does not match shape " + shape_str(shape));
}

Tensor Tensor::zeros(std::vector<int64_t> shape) {
  int64_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
  int64_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::randn(std::vector<int64_t> shape, GaussianStream& stream, double stddev) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.data) v = stream.next() * stddev;
  return t;
}

int64_t Tensor::numel() const { return static_cast<int64_t>(data.size()); }

int64_t Tensor::dim(int axis) const {
  if (axis < 0 || axis >= rank())
    fail(ErrorKind::Domain, "axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  return shape[static_cast<size_t>(axis)];
}

void Tensor::ensure_grad() {
  if (!grad) grad = std::vector<double>(data.size(), 0.0);
}

void Tensor::zero_grad() {
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return false;
  for (size_t i = 0; i < a.data.size(); ++i)
    if (std::memcmp(&a.data[i], &b.data[i], sizeof(double)) != 0) return false;
  return true;
}

namespace {

// Kahan-compensated sum of squares; keeps norm comparisons stable on large tensors
double sum_squares(const double* p, size_t n, const double* q = nullptr) {
  double s = 0.0, c = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double v = q == nullptr ? p[i] : p[i] - q[i];
    double y = v * v - c;
    double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return s;
}

}  // namespace

double frobenius_norm(const Tensor& t) {
  return std::sqrt(sum_squares(t.data.data(), t.data.size()));
}

double frobenius_distance(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape)
    fail(ErrorKind::Shape, "frobenius_distance shapes differ: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  return std::sqrt(sum_squares(a.data.data(), a.data.size(), b.data.data()));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape)
    fail(ErrorKind::Shape, "max_abs_diff shapes differ: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace mtgrow
