#include "acmg/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "acmg/error.hpp"

namespace acmg {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                     " does not match shape " + acmg::shape_str(rows, cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged initializer for Matrix");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_str() const { return acmg::shape_str(rows_, cols_); }

std::string shape_str(std::size_t rows, std::size_t cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + a.shape_str() + " x " + b.shape_str());
  }
  Matrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.data() + k * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

namespace {
void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch, " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}
}  // namespace

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape("add", a, b);
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

Matrix elementwise_mul(const Matrix& a, const Matrix& b) {
  require_same_shape("elementwise_mul", a, b);
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
  return c;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: row counts differ, " + a.shape_str() + " vs " + b.shape_str());
  }
  Matrix c(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    std::copy(a.row(i).begin(), a.row(i).end(), out.begin());
    std::copy(b.row(i).begin(), b.row(i).end(), out.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return c;
}

double sigmoid(double x) {
  // exp overflows past 709.78; the clamp only touches values already saturated.
  const double z = std::clamp(x, -709.0, 709.0);
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Matrix sigmoid(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.values()) v = sigmoid(v);
  return y;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    auto out = y.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      out[j] = std::exp(in[j] - mx);
      sum += out[j];
    }
    for (double& v : out) v /= sum;
  }
  return y;
}

Matrix layernorm_rows(const Matrix& x, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("layernorm_rows: epsilon must be positive");
  Matrix y(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    auto out = y.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = (in[j] - mean) * inv;
  }
  return y;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape("max_abs_diff", a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace acmg
