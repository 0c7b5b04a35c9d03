#include "nsn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace nsn {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::size_t r = rows.size();
  std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged initializer rows");
    std::size_t j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul shape mismatch: " + shape_str(a) + " * " + shape_str(b));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt shape mismatch: " + shape_str(a) + " * " + shape_str(b) + "^T");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      out(i, j) = dot(a.row(i), b.row(j));
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn shape mismatch: " + shape_str(a) + "^T * " + shape_str(b));
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      double aki = a(k, i);
      if (aki == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aki * b(k, j);
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw DimensionError("add shape mismatch: " + shape_str(a) + " vs " + shape_str(b));
  Matrix out = a;
  auto od = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i];
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw DimensionError("subtract shape mismatch: " + shape_str(a) + " vs " + shape_str(b));
  Matrix out = a;
  auto od = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] -= bd[i];
  return out;
}

void scale_in_place(Matrix& m, double factor) {
  for (double& v : m.data()) v *= factor;
}

void add_scaled(Matrix& dst, const Matrix& src, double factor) {
  if (!dst.same_shape(src)) {
    throw DimensionError("add_scaled shape mismatch: " + shape_str(dst) + " vs " + shape_str(src));
  }
  auto dd = dst.data();
  auto sd = src.data();
  for (std::size_t i = 0; i < dd.size(); ++i) dd[i] += factor * sd[i];
}

Matrix first_rows(const Matrix& m, std::size_t n) {
  if (n > m.rows()) throw DimensionError("first_rows: n exceeds row count");
  Matrix out(n, m.cols());
  for (std::size_t i = 0; i < n; ++i) std::copy(m.row(i).begin(), m.row(i).end(), out.row(i).begin());
  return out;
}

Matrix first_cols(const Matrix& m, std::size_t n) {
  if (n > m.cols()) throw DimensionError("first_cols: n exceeds column count");
  Matrix out(m.rows(), n);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = m(i, j);
  return out;
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

namespace {

constexpr double kJacobiTol = 1e-12;
constexpr std::size_t kJacobiMaxSweeps = 60;

// One-sided Jacobi SVD for m >= n. Rotates column pairs of a working copy
// until all columns are pairwise orthogonal relative to kJacobiTol.
SvdResult svd_tall(const Matrix& input) {
  const std::size_t m = input.rows();
  const std::size_t n = input.cols();
  Matrix w = input;
  Matrix v = Matrix::identity(n);

  auto col_dot = [&](const Matrix& mat, std::size_t p, std::size_t q) {
    double s = 0.0;
    for (std::size_t i = 0; i < mat.rows(); ++i) s += mat(i, p) * mat(i, q);
    return s;
  };
  auto rotate_cols = [&](Matrix& mat, std::size_t p, std::size_t q, double cs, double sn) {
    for (std::size_t i = 0; i < mat.rows(); ++i) {
      double wp = mat(i, p);
      double wq = mat(i, q);
      mat(i, p) = cs * wp - sn * wq;
      mat(i, q) = sn * wp + cs * wq;
    }
  };

  std::size_t sweep = 0;
  for (; sweep < kJacobiMaxSweeps; ++sweep) {
    bool converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = col_dot(w, p, p);
        double aqq = col_dot(w, q, q);
        double apq = col_dot(w, p, q);
        if (std::abs(apq) <= kJacobiTol * std::sqrt(app * aqq) || apq == 0.0) continue;
        converged = false;
        double zeta = (aqq - app) / (2.0 * apq);
        double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        double cs = 1.0 / std::sqrt(1.0 + t * t);
        double sn = cs * t;
        rotate_cols(w, p, q, cs, sn);
        rotate_cols(v, p, q, cs, sn);
      }
    }
    if (converged) break;
  }
  if (sweep == kJacobiMaxSweeps) {
    throw NumericalError("SVD failed to converge after " + std::to_string(kJacobiMaxSweeps) + " Jacobi sweeps",
                         kJacobiMaxSweeps);
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(col_dot(w, j, j));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

  SvdResult out;
  out.U = Matrix(m, n);
  out.Vt = Matrix(n, n);
  out.singular_values.resize(n);

  for (std::size_t j = 0; j < n; ++j) {
    std::size_t src = order[j];
    out.singular_values[j] = sigma[src];
    for (std::size_t i = 0; i < n; ++i) out.Vt(j, i) = v(i, src);
    if (sigma[src] > 0.0) {
      for (std::size_t i = 0; i < m; ++i) out.U(i, j) = w(i, src) / sigma[src];
    }
  }

  // Columns with zero singular value get an orthonormal completion from the
  // standard basis, Gram-Schmidt against the columns already placed.
  for (std::size_t j = 0; j < n; ++j) {
    if (out.singular_values[j] > 0.0) continue;
    for (std::size_t e = 0; e < m; ++e) {
      std::vector<double> cand(m, 0.0);
      cand[e] = 1.0;
      for (std::size_t k = 0; k < j; ++k) {
        double proj = 0.0;
        for (std::size_t i = 0; i < m; ++i) proj += cand[i] * out.U(i, k);
        for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * out.U(i, k);
      }
      double nrm = norm2(cand);
      if (nrm > 0.5) {
        for (std::size_t i = 0; i < m; ++i) out.U(i, j) = cand[i] / nrm;
        break;
      }
    }
  }
  return out;
}

void fix_signs(SvdResult& r) {
  for (std::size_t j = 0; j < r.U.cols(); ++j) {
    std::size_t arg = 0;
    double best = 0.0;
    for (std::size_t i = 0; i < r.U.rows(); ++i) {
      if (std::abs(r.U(i, j)) > best) {
        best = std::abs(r.U(i, j));
        arg = i;
      }
    }
    if (r.U(arg, j) < 0.0) {
      for (std::size_t i = 0; i < r.U.rows(); ++i) r.U(i, j) = -r.U(i, j);
      for (std::size_t i = 0; i < r.Vt.cols(); ++i) r.Vt(j, i) = -r.Vt(j, i);
    }
  }
}

}  // namespace

SvdResult svd(const Matrix& m) {
  for (double v : m.data()) {
    if (!std::isfinite(v)) throw NumericalError("svd: non-finite entry in input");
  }
  SvdResult result;
  if (m.rows() >= m.cols()) {
    result = svd_tall(m);
  } else {
    SvdResult t = svd_tall(transpose(m));  // m^T = U' S V'^T  =>  m = V' S U'^T
    result.U = transpose(t.Vt);
    result.singular_values = std::move(t.singular_values);
    result.Vt = transpose(t.U);
  }
  fix_signs(result);
  return result;
}

std::uint64_t RandomStream::below(std::uint64_t n) {
  if (n == 0) throw ConfigError("RandomStream::below called with n = 0");
  return next_u64() % n;
}

double RandomStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  double radius = std::sqrt(-2.0 * std::log(u1));
  double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Matrix RandomStream::gaussian_matrix(std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = gaussian() * scale;
  return m;
}

std::vector<double> RandomStream::gaussian_vector(std::size_t n, double scale) {
  std::vector<double> v(n);
  for (double& x : v) x = gaussian() * scale;
  return v;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  // splitmix64 over the combined value
  std::uint64_t z = seed ^ (tag * 0x9E3779B97F4A7C15ULL) ^ 0xD1B54A32D192ED03ULL;
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace nsn
