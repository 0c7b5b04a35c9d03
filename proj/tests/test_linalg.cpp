#include <cmath>

#include <doctest.h>

#include "nsn/linalg.hpp"

using namespace nsn;

namespace {

Matrix random_matrix(RandomStream& rng, std::size_t rows, std::size_t cols) {
  return rng.gaussian_matrix(rows, cols);
}

double rel_fro_error(const Matrix& a, const Matrix& b) {
  double denom = frobenius_norm(b);
  return denom == 0.0 ? frobenius_norm(a) : frobenius_norm(subtract(a, b)) / denom;
}

Matrix reconstruct(const SvdResult& s) {
  Matrix us = s.U;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= s.singular_values[j];
  return matmul(us, s.Vt);
}

void check_orthonormal_columns(const Matrix& m, double tol) {
  Matrix gram = matmul_tn(m, m);
  for (std::size_t i = 0; i < gram.rows(); ++i)
    for (std::size_t j = 0; j < gram.cols(); ++j)
      CHECK(std::abs(gram(i, j) - (i == j ? 1.0 : 0.0)) < tol);
}

}  // namespace

TEST_CASE("matmul identity leaves operand unchanged") {
  RandomStream rng(1);
  Matrix m = random_matrix(rng, 3, 5);
  CHECK(matmul(Matrix::identity(3), m) == m);
}

TEST_CASE("matmul hand-computed product") {
  Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  Matrix b = Matrix::from_rows({{1}, {1}});
  Matrix c = matmul(a, b);
  CHECK(c.rows() == 2);
  CHECK(c.cols() == 1);
  CHECK(c(0, 0) == 3);
  CHECK(c(1, 0) == 7);
}

TEST_CASE("matmul zero annihilates") {
  RandomStream rng(2);
  Matrix m = random_matrix(rng, 4, 3);
  Matrix z(2, 4);
  Matrix out = matmul(z, m);
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Matrix a(2, 3);
  Matrix b(4, 2);
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("2x3"), DimensionError);
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("4x2"), DimensionError);
}

TEST_CASE("matmul associativity on random triples") {
  RandomStream rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix a = random_matrix(rng, 6, 4);
    Matrix b = random_matrix(rng, 4, 7);
    Matrix c = random_matrix(rng, 7, 3);
    CHECK(rel_fro_error(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-9);
  }
}

TEST_CASE("transposed product helpers agree with explicit transpose") {
  RandomStream rng(4);
  Matrix a = random_matrix(rng, 5, 3);
  Matrix b = random_matrix(rng, 4, 3);
  CHECK(rel_fro_error(matmul_nt(a, b), matmul(a, transpose(b))) < 1e-12);
  Matrix c = random_matrix(rng, 5, 4);
  CHECK(rel_fro_error(matmul_tn(a, c), matmul(transpose(a), c)) < 1e-12);
}

TEST_CASE("svd of diag(3,1)") {
  SvdResult s = svd(Matrix::from_rows({{3, 0}, {0, 1}}));
  REQUIRE(s.singular_values.size() == 2);
  CHECK(s.singular_values[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(s.singular_values[1] == doctest::Approx(1.0).epsilon(1e-12));
  // U and V are signed permutations of I; with the sign convention they are I.
  CHECK(rel_fro_error(s.U, Matrix::identity(2)) < 1e-10);
  CHECK(rel_fro_error(s.Vt, Matrix::identity(2)) < 1e-10);
}

TEST_CASE("svd of identity has unit singular values") {
  SvdResult s = svd(Matrix::identity(5));
  for (double v : s.singular_values) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("svd of rank-1 outer product") {
  RandomStream rng(5);
  std::vector<double> u = rng.gaussian_vector(6);
  std::vector<double> v = rng.gaussian_vector(4);
  double un = norm2(u), vn = norm2(v);
  Matrix m(6, 4);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) m(i, j) = (u[i] / un) * (v[j] / vn);
  SvdResult s = svd(m);
  CHECK(s.singular_values[0] == doctest::Approx(1.0).epsilon(1e-10));
  for (std::size_t k = 1; k < s.singular_values.size(); ++k) CHECK(std::abs(s.singular_values[k]) < 1e-10);
}

TEST_CASE("svd round-trip and orthonormality on random shapes") {
  RandomStream rng(6);
  const std::pair<std::size_t, std::size_t> shapes[] = {{8, 8}, {12, 5}, {5, 12}, {64, 48}, {256, 256}};
  for (auto [r, c] : shapes) {
    Matrix m = random_matrix(rng, r, c);
    SvdResult s = svd(m);
    CHECK(rel_fro_error(reconstruct(s), m) < 1e-8);
    check_orthonormal_columns(s.U, 1e-10);
    check_orthonormal_columns(transpose(s.Vt), 1e-10);
    for (std::size_t k = 0; k + 1 < s.singular_values.size(); ++k) {
      CHECK(s.singular_values[k] >= s.singular_values[k + 1]);
    }
  }
}

TEST_CASE("svd Eckart-Young: rank-k truncation error equals singular tail") {
  RandomStream rng(7);
  Matrix m = random_matrix(rng, 10, 7);
  SvdResult s = svd(m);
  for (std::size_t k = 1; k < 7; ++k) {
    Matrix uk = first_cols(s.U, k);
    for (std::size_t i = 0; i < uk.rows(); ++i)
      for (std::size_t j = 0; j < k; ++j) uk(i, j) *= s.singular_values[j];
    Matrix approx = matmul(uk, first_rows(s.Vt, k));
    double err = frobenius_norm(subtract(m, approx));
    double tail = 0.0;
    for (std::size_t i = k; i < s.singular_values.size(); ++i) tail += s.singular_values[i] * s.singular_values[i];
    CHECK(std::abs(err - std::sqrt(tail)) < 1e-8);
  }
}

TEST_CASE("svd deterministic with fixed sign convention") {
  RandomStream rng(8);
  Matrix m = random_matrix(rng, 9, 6);
  SvdResult a = svd(m);
  SvdResult b = svd(m);
  CHECK(a.U == b.U);
  CHECK(a.Vt == b.Vt);
  CHECK(a.singular_values == b.singular_values);
  for (std::size_t j = 0; j < a.U.cols(); ++j) {
    double largest = 0.0;
    for (std::size_t i = 0; i < a.U.rows(); ++i) {
      if (std::abs(a.U(i, j)) > std::abs(largest)) largest = a.U(i, j);
    }
    CHECK(largest >= 0.0);
  }
}

TEST_CASE("svd rejects non-finite input") {
  Matrix m(2, 2);
  m(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(svd(m), NumericalError);
}

TEST_CASE("seeded rng is deterministic and seed-sensitive") {
  RandomStream a(0), b(0), c(1);
  bool all_equal = true, any_differ = false;
  for (int i = 0; i < 100; ++i) {
    double x = a.uniform(), y = b.uniform(), z = c.uniform();
    all_equal = all_equal && (x == y);
    any_differ = any_differ || (x != z);
  }
  CHECK(all_equal);
  CHECK(any_differ);
}

TEST_CASE("gaussian sample mean is near zero") {
  RandomStream rng(9);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += rng.gaussian();
  CHECK(std::abs(sum / n) < 0.02);
}

TEST_CASE("uniform stays in [0,1) and below stays in range") {
  RandomStream rng(10);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.below(7) < 7);
  }
}

TEST_CASE("derive_seed separates streams per tag") {
  CHECK(derive_seed(42, 0) != derive_seed(42, 1));
  CHECK(derive_seed(42, 0) != derive_seed(43, 0));
  CHECK(derive_seed(42, 5) == derive_seed(42, 5));
}

TEST_CASE("shuffle is a seed-deterministic permutation") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  std::vector<int> w = v;
  RandomStream a(11), b(11);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::sort(w.begin(), w.end());
  for (int i = 0; i < 50; ++i) CHECK(w[i] == i);
}
