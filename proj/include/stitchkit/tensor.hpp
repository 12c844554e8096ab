#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stitchkit/error.hpp"

namespace stitchkit {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// Dense row-major array of doubles with at most four axes. Every stored
// value is finite; operations that would produce NaN/Inf throw NumericError.
// A default-constructed tensor is empty and has no shape.
class Tensor {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_size(shape_), 0.0);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != shape_size(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
    require_finite("tensor construction");
  }

  static Tensor filled(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    t.require_finite("Tensor::filled");
    return t;
  }

  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
    return t;
  }

  bool empty() const noexcept { return data_.empty(); }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }

  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    Tensor t;
    validate_shape(shape);
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  void require_finite(const std::string& where) const {
    if (!all_finite()) throw NumericError("non-finite value produced by " + where);
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static void validate_shape(const Shape& shape) {
    if (shape.empty() || shape.size() > kMaxRank) {
      throw DimensionError("tensor rank must be 1.." + std::to_string(kMaxRank) + ", got " +
                           std::to_string(shape.size()));
    }
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor axes must be positive, got " + shape_string(shape));
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

// Shape and bit-pattern equality (distinguishes -0.0 from 0.0).
inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  if (a.empty()) return true;
  return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double frobenius_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("add shape mismatch");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  out.require_finite("add");
  return out;
}

inline Tensor subtract(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("subtract shape mismatch");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  out.require_finite("subtract");
  return out;
}

inline Tensor scale(const Tensor& a, double factor) {
  Tensor out = a;
  for (double& v : out.data()) v *= factor;
  out.require_finite("scale");
  return out;
}

namespace detail {

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + " expects a rank-" + std::to_string(rank) +
                         " tensor, got " + shape_string(t.shape()));
  }
}

}  // namespace detail

// C = A B. Each output accumulates over the inner index in ascending order.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul inner dimensions differ: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  c.require_finite("matmul");
  return c;
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

// Spatial output extent of a strided, zero-padded window.
inline std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                      std::size_t padding) {
  if (stride == 0) throw DimensionError("stride must be positive");
  if (kernel == 0 || kernel > in + 2 * padding) {
    throw DimensionError("kernel extent " + std::to_string(kernel) + " exceeds padded input " +
                         std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

// 2-D cross-correlation. input [N,C,H,W], weight [O,C,kh,kw], bias [O].
// Every output element is bias + sum over (c, ky, kx) in that order.
inline Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                     std::size_t stride, std::size_t padding) {
  detail::require_rank(input, 4, "conv2d input");
  detail::require_rank(weight, 4, "conv2d weight");
  detail::require_rank(bias, 1, "conv2d bias");
  const std::size_t batch = input.dim(0), channels = input.dim(1), h = input.dim(2),
                    w = input.dim(3);
  const std::size_t out_ch = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != channels) {
    throw DimensionError("conv2d channel mismatch: input has " + std::to_string(channels) +
                         " channels, weight expects " + std::to_string(weight.dim(1)));
  }
  if (bias.dim(0) != out_ch) throw DimensionError("conv2d bias length differs from output channels");
  const std::size_t oh = conv_output_extent(h, kh, stride, padding);
  const std::size_t ow = conv_output_extent(w, kw, stride, padding);

  Tensor out({batch, out_ch, oh, ow});
  const double* in = input.data().data();
  const double* wt = weight.data().data();
  double* po = out.data().data();
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  const auto sh = static_cast<std::ptrdiff_t>(stride);

  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < out_ch; ++o) {
      double* plane = po + (n * out_ch + o) * oh * ow;
      std::fill(plane, plane + oh * ow, bias[o]);
      for (std::size_t c = 0; c < channels; ++c) {
        const double* src = in + (n * channels + c) * h * w;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const double wv = wt[((o * channels + c) * kh + ky) * kw + kx];
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * sh + static_cast<std::ptrdiff_t>(ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              const double* srow = src + static_cast<std::size_t>(iy) * w;
              double* orow = plane + oy * ow;
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * sh + static_cast<std::ptrdiff_t>(kx) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                orow[ox] += wv * srow[ix];
              }
            }
          }
        }
      }
    }
  }
  out.require_finite("conv2d");
  return out;
}

// Max pooling without padding; ties resolve to the first window element.
inline Tensor max_pool2d(const Tensor& input, std::size_t kernel, std::size_t stride) {
  detail::require_rank(input, 4, "max_pool2d");
  const std::size_t batch = input.dim(0), channels = input.dim(1), h = input.dim(2),
                    w = input.dim(3);
  const std::size_t oh = conv_output_extent(h, kernel, stride, 0);
  const std::size_t ow = conv_output_extent(w, kernel, stride, 0);
  Tensor out({batch, channels, oh, ow});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double best = input.at(n, c, oy * stride, ox * stride);
          for (std::size_t ky = 0; ky < kernel; ++ky)
            for (std::size_t kx = 0; kx < kernel; ++kx)
              best = std::max(best, input.at(n, c, oy * stride + ky, ox * stride + kx));
          out.at(n, c, oy, ox) = best;
        }
  return out;
}

inline Tensor adaptive_avg_pool_1x1(const Tensor& input) {
  detail::require_rank(input, 4, "adaptive_avg_pool_1x1");
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  Tensor out({batch, channels, 1, 1});
  const double* in = input.data().data();
  for (std::size_t i = 0; i < batch * channels; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < plane; ++k) s += in[i * plane + k];
    out[i] = s / static_cast<double>(plane);
  }
  return out;
}

namespace detail {

// Source index range [first, last) feeding output index `i` along one axis.
// Shrinking axes use adaptive-average bins, growing axes nearest neighbour.
inline std::pair<std::size_t, std::size_t> resample_range(std::size_t i, std::size_t in,
                                                          std::size_t out) {
  if (out <= in) {
    const std::size_t first = (i * in) / out;
    const std::size_t last = ((i + 1) * in + out - 1) / out;
    return {first, last};
  }
  const std::size_t src = (i * in) / out;
  return {src, src + 1};
}

}  // namespace detail

// Resamples the spatial plane of [N,C,H,W] to target_h x target_w.
inline Tensor resize_spatial(const Tensor& input, std::size_t target_h, std::size_t target_w) {
  detail::require_rank(input, 4, "resize_spatial");
  if (target_h == 0 || target_w == 0) throw DimensionError("resize_spatial target must be >= 1");
  const std::size_t batch = input.dim(0), channels = input.dim(1), h = input.dim(2),
                    w = input.dim(3);
  if (h == target_h && w == target_w) return input;
  Tensor out({batch, channels, target_h, target_w});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t oy = 0; oy < target_h; ++oy) {
        const auto [y0, y1] = detail::resample_range(oy, h, target_h);
        for (std::size_t ox = 0; ox < target_w; ++ox) {
          const auto [x0, x1] = detail::resample_range(ox, w, target_w);
          double s = 0.0;
          for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t x = x0; x < x1; ++x) s += input.at(n, c, y, x);
          out.at(n, c, oy, ox) = s / static_cast<double>((y1 - y0) * (x1 - x0));
        }
      }
  return out;
}

// Subtracts each row's mean over the sample axis: X H_n for X [p x n].
inline Tensor center_columns(const Tensor& x) {
  detail::require_rank(x, 2, "center_columns");
  const std::size_t p = x.dim(0), n = x.dim(1);
  Tensor out = x;
  for (std::size_t i = 0; i < p; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += x.at(i, j);
    mean /= static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) -= mean;
  }
  return out;
}

inline Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

// Row-wise softmax of [N, K], max-shifted.
inline Tensor softmax_rows(const Tensor& x) {
  detail::require_rank(x, 2, "softmax_rows");
  const std::size_t n = x.dim(0), k = x.dim(1);
  Tensor out({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, x.at(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      out.at(i, j) = std::exp(x.at(i, j) - mx);
      s += out.at(i, j);
    }
    for (std::size_t j = 0; j < k; ++j) out.at(i, j) /= s;
  }
  return out;
}

// [N, ...] -> [N, F].
inline Tensor flatten_samples(const Tensor& x) {
  if (x.empty()) throw DimensionError("flatten of empty tensor");
  const std::size_t n = x.dim(0);
  return x.reshaped({n, x.size() / n});
}

// [N, ...] -> [F, N]: the features-by-samples orientation used by analysis code.
inline Tensor to_feature_major(const Tensor& x) { return transpose(flatten_samples(x)); }

// Selects rows (first-axis entries) of a batch in the given order.
inline Tensor take_samples(const Tensor& x, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DimensionError("take_samples needs at least one index");
  Shape shape = x.shape();
  const std::size_t stride = x.size() / shape[0];
  shape[0] = indices.size();
  std::vector<double> data;
  data.reserve(indices.size() * stride);
  for (auto idx : indices) {
    if (idx >= x.dim(0)) throw DimensionError("sample index out of range");
    auto src = x.data().subspan(idx * stride, stride);
    data.insert(data.end(), src.begin(), src.end());
  }
  return Tensor(std::move(shape), std::move(data));
}

// Index of the largest entry in each row; ties resolve to the lowest index.
inline std::vector<std::size_t> argmax_rows(const Tensor& x) {
  detail::require_rank(x, 2, "argmax_rows");
  std::vector<std::size_t> out(x.dim(0));
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < x.dim(1); ++j)
      if (x.at(i, j) > x.at(i, best)) best = j;
    out[i] = best;
  }
  return out;
}

}  // namespace stitchkit
