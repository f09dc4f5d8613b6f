#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace acmg {

/// Dense row-major matrix of doubles. Plain value type.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double v);
  bool all_finite() const;
  std::string shape_str() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_str(std::size_t rows, std::size_t cols);

// Value-level kernels. Autodiff wrappers live in autodiff.hpp.

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix elementwise_mul(const Matrix& a, const Matrix& b);
Matrix concat_cols(const Matrix& a, const Matrix& b);
Matrix sigmoid(const Matrix& x);
Matrix softmax_rows(const Matrix& x);
/// Normalizes each row to zero mean and unit variance (no affine).
Matrix layernorm_rows(const Matrix& x, double eps = 1e-5);

double sigmoid(double x);
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace acmg
