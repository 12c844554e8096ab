#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "stitchkit/error.hpp"
#include "stitchkit/tensor.hpp"

namespace stitchkit {

// Eigen-decomposition of a symmetric matrix: A = V diag(values) V^T.
// Columns of `vectors` are the eigenvectors.
struct SymmetricEigen {
  std::vector<double> values;
  Tensor vectors;
};

// Cyclic Jacobi rotations. Accurate for the small (<= a few hundred) Gram
// matrices that appear at stitch joints.
inline SymmetricEigen symmetric_eigen(const Tensor& a, int max_sweeps = 100) {
  detail::require_rank(a, 2, "symmetric_eigen");
  const std::size_t n = a.dim(0);
  if (a.dim(1) != n) throw DimensionError("symmetric_eigen expects a square matrix");
  std::vector<double> m(a.values());
  Tensor v = Tensor::identity(n);
  auto el = [&](std::size_t i, std::size_t j) -> double& { return m[i * n + j]; };

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      diag += el(i, i) * el(i, i);
      for (std::size_t j = i + 1; j < n; ++j) off += el(i, j) * el(i, j);
    }
    if (off <= 1e-30 * diag || off == 0.0) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = el(p, q);
        if (apq == 0.0) continue;
        const double theta = (el(q, q) - el(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = el(k, p), akq = el(k, q);
          el(k, p) = c * akp - s * akq;
          el(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = el(p, k), aqk = el(q, k);
          el(p, k) = c * apk - s * aqk;
          el(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  SymmetricEigen out{std::vector<double>(n), std::move(v)};
  for (std::size_t i = 0; i < n; ++i) out.values[i] = el(i, i);
  return out;
}

// Lower Cholesky factor of a symmetric positive-definite matrix, or nullopt
// when a pivot falls below `relative_floor` times the largest diagonal entry.
inline std::optional<Tensor> cholesky(const Tensor& a, double relative_floor = 1e-14) {
  const std::size_t n = a.dim(0);
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, a.at(i, i));
  if (!(max_diag > 0.0)) return std::nullopt;
  Tensor l({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    double d = a.at(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l.at(j, k) * l.at(j, k);
    if (!(d > relative_floor * max_diag)) return std::nullopt;
    const double ljj = std::sqrt(d);
    l.at(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a.at(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
      l.at(i, j) = s / ljj;
    }
  }
  return l;
}

// Default Tikhonov term for the stitch solve: factor * trace(X X^T) / p.
inline double default_ridge(const Tensor& x, double factor = 1e-8) {
  detail::require_rank(x, 2, "default_ridge");
  double trace = 0.0;
  for (double v : x.data()) trace += v * v;
  return factor * trace / static_cast<double>(x.dim(0));
}

// Least-squares map A [q x p] with Y ~= A X, for X [p x n] and Y [q x n]:
//   A = Y X^T (X X^T + ridge I)^-1.
// Solved through a Cholesky factorization; when the (regularized) Gram
// matrix is numerically singular the minimum-norm solution Y X^+ is
// returned via a symmetric eigen-decomposition.
inline Tensor solve_projection(const Tensor& x, const Tensor& y, double ridge) {
  detail::require_rank(x, 2, "solve_projection x");
  detail::require_rank(y, 2, "solve_projection y");
  if (x.dim(1) != y.dim(1)) {
    throw DimensionError("solve_projection sample counts differ: " + std::to_string(x.dim(1)) +
                         " vs " + std::to_string(y.dim(1)));
  }
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw NumericError("ridge must be finite and >= 0");
  x.require_finite("solve_projection input x");
  y.require_finite("solve_projection input y");

  const std::size_t p = x.dim(0), q = y.dim(0), n = x.dim(1);
  Tensor gram({p, p});
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i; j < p; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += x.at(i, k) * x.at(j, k);
      gram.at(i, j) = s;
      gram.at(j, i) = s;
    }
  for (std::size_t i = 0; i < p; ++i) gram.at(i, i) += ridge;

  Tensor cross({q, p});  // Y X^T
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += y.at(i, k) * x.at(j, k);
      cross.at(i, j) = s;
    }

  Tensor a({q, p});
  if (auto l = cholesky(gram)) {
    // Row r of A solves G a_r = c_r (G symmetric).
    std::vector<double> z(p);
    for (std::size_t r = 0; r < q; ++r) {
      for (std::size_t i = 0; i < p; ++i) {
        double s = cross.at(r, i);
        for (std::size_t k = 0; k < i; ++k) s -= l->at(i, k) * z[k];
        z[i] = s / l->at(i, i);
      }
      for (std::size_t ii = p; ii-- > 0;) {
        double s = z[ii];
        for (std::size_t k = ii + 1; k < p; ++k) s -= l->at(k, ii) * a.at(r, k);
        a.at(r, ii) = s / l->at(ii, ii);
      }
    }
  } else {
    const SymmetricEigen eig = symmetric_eigen(gram);
    double lmax = 0.0;
    for (double v : eig.values) lmax = std::max(lmax, v);
    const double cutoff = 1e-12 * lmax;
    // A = C V diag(1/lambda) V^T, dropping directions below the cutoff.
    const Tensor cv = matmul(cross, eig.vectors);
    Tensor scaled({q, p});
    for (std::size_t j = 0; j < p; ++j) {
      const double inv = eig.values[j] > cutoff ? 1.0 / eig.values[j] : 0.0;
      for (std::size_t i = 0; i < q; ++i) scaled.at(i, j) = cv.at(i, j) * inv;
    }
    a = matmul(scaled, transpose(eig.vectors));
  }
  a.require_finite("solve_projection");
  return a;
}

}  // namespace stitchkit
