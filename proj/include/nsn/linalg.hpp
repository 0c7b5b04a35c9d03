#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "nsn/errors.hpp"

namespace nsn {

/// Dense row-major matrix of 64-bit reals.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  std::span<double> row(std::size_t i) { return std::span<double>(data_).subspan(i * cols_, cols_); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * cols_, cols_);
  }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Thin SVD: m = U * diag(singular_values) * Vt, with U (m x k) and Vt (k x n)
/// orthonormal and singular values sorted non-increasing, k = min(m, n).
struct SvdResult {
  Matrix U;
  std::vector<double> singular_values;
  Matrix Vt;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
Matrix transpose(const Matrix& m);

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
void scale_in_place(Matrix& m, double factor);
void add_scaled(Matrix& dst, const Matrix& src, double factor);

Matrix first_rows(const Matrix& m, std::size_t n);
Matrix first_cols(const Matrix& m, std::size_t n);

double frobenius_norm(const Matrix& m);
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);

/// Thin SVD by one-sided Jacobi on the taller orientation. Deterministic:
/// the largest-magnitude entry of every U column is forced non-negative.
/// Throws NumericalError if the sweep cap is exceeded.
SvdResult svd(const Matrix& m);

/// Deterministic random stream. The gaussian path is hand-rolled Box-Muller
/// over mt19937_64 so draws do not depend on the standard library's
/// distribution implementations.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Uniform real in [0, 1).
  double uniform();

  /// Standard normal draw.
  double gaussian();

  Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double scale = 1.0);
  std::vector<double> gaussian_vector(std::size_t n, double scale = 1.0);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Independent stream seeds derived from one run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace nsn
