#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace midfea {

/// Raised when a numeric computation produces a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles.
///
/// Samples are stored one per column throughout the library (X is p x N,
/// activations are d x N), so column extraction helpers are provided.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Takes ownership of row-major `data`; rejects size mismatch and
  /// non-finite entries.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  /// Builds a matrix whose columns are the given vectors.
  static Matrix from_columns(const std::vector<std::vector<double>>& cols);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::vector<double> column(std::size_t c) const;
  void set_column(std::size_t c, std::span<const double> values);

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  Matrix transpose() const;
  /// Columns selected by index, in the given order.
  Matrix select_columns(std::span<const std::size_t> idx) const;

  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// 3rd-order tensor (height x width x depth), depth fastest-varying.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t height, std::size_t width, std::size_t depth, double fill = 0.0);
  Tensor3(std::size_t height, std::size_t width, std::size_t depth, std::vector<double> data);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t depth() const { return depth_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t y, std::size_t x, std::size_t k) {
    return data_[(y * width_ + x) * depth_ + k];
  }
  double operator()(std::size_t y, std::size_t x, std::size_t k) const {
    return data_[(y * width_ + x) * depth_ + k];
  }

  /// The depth vector ("fiber" along the third mode) at (y, x).
  std::span<double> fiber(std::size_t y, std::size_t x) {
    return {data_.data() + (y * width_ + x) * depth_, depth_};
  }
  std::span<const double> fiber(std::size_t y, std::size_t x) const {
    return {data_.data() + (y * width_ + x) * depth_, depth_};
  }

  /// Copies map k out as a height x width matrix.
  Matrix slice(std::size_t k) const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t depth_ = 0;
  std::vector<double> data_;
};

// Products. Shapes are checked and mismatches throw std::invalid_argument.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * b^T without materialising the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
std::vector<double> matvec(const Matrix& a, std::span<const double> v);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> v);
double euclidean_norm(std::span<const double> v);
double squared_distance(std::span<const double> a, std::span<const double> b);

double frobenius_squared(const Matrix& m);
double frobenius_norm(const Matrix& m);
/// Sum over rows of each row's Euclidean norm.
double l21_norm(const Matrix& m);

/// Scales every column to unit Euclidean length; zero columns are left alone.
void normalize_columns(Matrix& m);

}  // namespace midfea
