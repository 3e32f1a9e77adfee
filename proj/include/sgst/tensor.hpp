#pragma once

#include <cstddef>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sgst {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Matrix view helpers. A rank-1 tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  void fill(double v);
  bool all_finite() const;
  double max_abs() const;

  // Elementwise accumulate; shapes must match.
  Tensor& operator+=(const Tensor& other);
  Tensor& scale(double factor);

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool bitwise_equal(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

namespace kernels {

// C = A * B with row-major operands; each C[i][j] accumulates over k in increasing order.
Tensor matmul(const Tensor& a, const Tensor& b);
// C = A * B^T
Tensor matmul_bt(const Tensor& a, const Tensor& b);
// C = A^T * B
Tensor matmul_at(const Tensor& a, const Tensor& b);
// out[j] = sum_k x[k] * w[k][j], the single-row case of matmul with the same summation order.
void row_times_matrix(std::span<const double> x, const Tensor& w, std::span<double> out);

// out = sum_a weights[a] * values[keys[a]] (rows of `width`), skipping zero weights. Terms are
// added in an order fixed by their content (weight descending, then value row), so relabeling
// the keys cannot change a single bit of the result.
void weighted_row_sum(std::span<const std::size_t> keys, std::span<const double> weights, const double* values,
                      std::size_t width, std::span<double> out);

void layer_norm_row(std::span<const double> x, std::span<const double> gain,
                    std::span<const double> bias, double eps, std::span<double> out);

}  // namespace kernels

}  // namespace sgst
