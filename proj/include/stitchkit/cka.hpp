#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "stitchkit/error.hpp"
#include "stitchkit/tensor.hpp"

namespace stitchkit {

// Features-by-samples activations [p x n] with a provenance tag.
struct ActivationMatrix {
  Tensor values;
  std::string fragment_id;

  std::size_t features() const { return values.dim(0); }
  std::size_t samples() const { return values.dim(1); }
};

// Flattens a batch [N, ...] into the [features x N] orientation.
inline ActivationMatrix activation_matrix(const Tensor& batch, std::string fragment_id = {}) {
  return {to_feature_major(batch), std::move(fragment_id)};
}

// Linear-kernel Gram matrix X^T X of X [p x n], in sample space.
inline Tensor linear_gram(const Tensor& x) {
  detail::require_rank(x, 2, "linear_gram");
  const std::size_t p = x.dim(0), n = x.dim(1);
  Tensor k({n, n});
  const double* px = x.data().data();
  for (std::size_t f = 0; f < p; ++f) {
    const double* row = px + f * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double xi = row[i];
      if (xi == 0.0) continue;
      double* krow = k.data().data() + i * n;
      for (std::size_t j = i; j < n; ++j) krow[j] += xi * row[j];
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) k.at(i, j) = k.at(j, i);
  k.require_finite("linear_gram");
  return k;
}

// H K H with H = I - 11^T/n.
inline Tensor double_center(const Tensor& k) {
  const std::size_t n = k.dim(0);
  std::vector<double> row_mean(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) row_mean[i] += k.at(i, j);
    total += row_mean[i];
    row_mean[i] /= static_cast<double>(n);
  }
  total /= static_cast<double>(n) * static_cast<double>(n);
  Tensor c({n, n});
  // K symmetric: column means equal row means.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) c.at(i, j) = k.at(i, j) - row_mean[i] - row_mean[j] + total;
  return c;
}

namespace detail {

inline void require_gram(const Tensor& k, const char* which) {
  if (k.rank() != 2 || k.dim(0) != k.dim(1)) {
    throw DimensionError(std::string("hsic: ") + which + " Gram matrix must be square, got " + shape_string(k.shape()));
  }
  if (k.dim(0) < 2) throw DimensionError("hsic needs at least 2 samples");
  double scale = 1.0;
  for (double v : k.data()) scale = std::max(scale, std::abs(v));
  const std::size_t n = k.dim(0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(k.at(i, j) - k.at(j, i)) > 1e-9 * scale) {
        throw DimensionError(std::string("hsic: ") + which + " Gram matrix is not symmetric");
      }
}

// Frobenius inner product of two equally shaped matrices.
inline double frobenius_dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

// HSIC(K, M) = tr(K H M H) / (n - 1)^2, evaluated as <HKH, HMH>_F / (n - 1)^2.
inline double hsic(const Tensor& k_gram, const Tensor& m_gram) {
  detail::require_gram(k_gram, "first");
  detail::require_gram(m_gram, "second");
  if (k_gram.dim(0) != m_gram.dim(0)) {
    throw DimensionError("hsic: Gram matrices have different sample counts");
  }
  const double n1 = static_cast<double>(k_gram.dim(0) - 1);
  return detail::frobenius_dot(double_center(k_gram), double_center(m_gram)) / (n1 * n1);
}

// Centered Gram matrix of one activation set plus its self-HSIC. Computing
// these once lets CKA against many partners cost O(n^2) each.
struct CenteredGram {
  Tensor centered;     // H X^T X H
  double self_hsic;    // HSIC(K, K)
  bool degenerate;     // activations (numerically) constant across samples
};

inline CenteredGram centered_gram(const Tensor& x_feature_major) {
  if (x_feature_major.rank() != 2 || x_feature_major.dim(1) < 2) {
    throw DimensionError("CKA needs a [features x samples] matrix with at least 2 samples");
  }
  const Tensor k = linear_gram(x_feature_major);
  CenteredGram g{double_center(k), 0.0, false};
  const double n1 = static_cast<double>(k.dim(0) - 1);
  g.self_hsic = detail::frobenius_dot(g.centered, g.centered) / (n1 * n1);
  const double kc = frobenius_norm(g.centered);
  const double kn = frobenius_norm(k);
  g.degenerate = !(kc > 1e-12 * kn) || kn == 0.0;
  return g;
}

inline double cka_from_grams(const CenteredGram& x, const CenteredGram& y) {
  if (x.centered.dim(0) != y.centered.dim(0)) throw DimensionError("CKA sample counts differ");
  if (x.degenerate || y.degenerate) {
    throw DegenerateInputError("CKA input is constant across samples");
  }
  const double n1 = static_cast<double>(x.centered.dim(0) - 1);
  const double cross = detail::frobenius_dot(x.centered, y.centered) / (n1 * n1);
  return cross / std::sqrt(x.self_hsic * y.self_hsic);
}

// Linear CKA = HSIC(K, M) / sqrt(HSIC(K, K) HSIC(M, M)) with K = X^T X, M = Y^T Y.
inline double cka_linear(const ActivationMatrix& x, const ActivationMatrix& y) {
  if (x.values.rank() != 2 || y.values.rank() != 2 || x.samples() != y.samples()) {
    throw DimensionError("cka_linear needs matrices with equal sample counts");
  }
  return cka_from_grams(centered_gram(x.values), centered_gram(y.values));
}

// Minibatch CKA: each of HSIC(K,M), HSIC(K,K), HSIC(M,M) is averaged over
// the batches before forming the ratio. One batch reproduces cka_linear.
inline double cka_minibatch(std::span<const ActivationMatrix> x_batches,
                            std::span<const ActivationMatrix> y_batches) {
  if (x_batches.empty() || x_batches.size() != y_batches.size()) {
    throw DimensionError("cka_minibatch needs matched, nonempty batch partitions");
  }
  double cross = 0.0, xx = 0.0, yy = 0.0;
  bool x_degenerate = true, y_degenerate = true;
  for (std::size_t b = 0; b < x_batches.size(); ++b) {
    if (x_batches[b].samples() != y_batches[b].samples()) {
      throw DimensionError("cka_minibatch batch " + std::to_string(b) + " sample counts differ");
    }
    const CenteredGram gx = centered_gram(x_batches[b].values);
    const CenteredGram gy = centered_gram(y_batches[b].values);
    const double n1 = static_cast<double>(gx.centered.dim(0) - 1);
    cross += detail::frobenius_dot(gx.centered, gy.centered) / (n1 * n1);
    xx += gx.self_hsic;
    yy += gy.self_hsic;
    x_degenerate = x_degenerate && gx.degenerate;
    y_degenerate = y_degenerate && gy.degenerate;
  }
  if (x_degenerate || y_degenerate) throw DegenerateInputError("CKA input is constant across samples");
  const double nb = static_cast<double>(x_batches.size());
  return (cross / nb) / std::sqrt((xx / nb) * (yy / nb));
}

}  // namespace stitchkit
