#pragma once

#include <cstddef>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "stitchkit/error.hpp"
#include "stitchkit/tensor.hpp"

namespace stitchkit {

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
};

struct Conv2d {
  Tensor weight;  // [O, C, kh, kw]
  Tensor bias;    // [O]
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct ReLU {};

struct MaxPool2d {
  std::size_t kernel = 2;
  std::size_t stride = 2;
};

struct AdaptiveAvgPool1x1 {};

struct Flatten {};

struct Softmax {};

// Spatial resampling inserted at conv->conv stitch joints.
struct Resize {
  std::size_t height = 1;
  std::size_t width = 1;
};

using LayerOp =
    std::variant<Linear, Conv2d, ReLU, MaxPool2d, AdaptiveAvgPool1x1, Flatten, Softmax, Resize>;

struct Layer {
  std::string name;
  LayerOp op;
};

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

inline const char* kind_name(const LayerOp& op) {
  return std::visit(Overloaded{
                        [](const Linear&) { return "linear"; },
                        [](const Conv2d&) { return "conv2d"; },
                        [](const ReLU&) { return "relu"; },
                        [](const MaxPool2d&) { return "maxpool2d"; },
                        [](const AdaptiveAvgPool1x1&) { return "adaptive_avg_pool_1x1"; },
                        [](const Flatten&) { return "flatten"; },
                        [](const Softmax&) { return "softmax"; },
                        [](const Resize&) { return "resize"; },
                    },
                    op);
}

inline bool is_trainable(const Layer& layer) {
  return std::holds_alternative<Linear>(layer.op) || std::holds_alternative<Conv2d>(layer.op);
}

inline std::size_t parameter_count(const Layer& layer) {
  if (auto* l = std::get_if<Linear>(&layer.op)) return l->weight.size() + l->bias.size();
  if (auto* c = std::get_if<Conv2d>(&layer.op)) return c->weight.size() + c->bias.size();
  return 0;
}

inline std::size_t parameter_count(const std::vector<Layer>& layers) {
  std::size_t n = 0;
  for (const auto& l : layers) n += parameter_count(l);
  return n;
}

// Checks weight/bias consistency of a trainable layer.
inline void validate_layer(const Layer& layer) {
  std::visit(Overloaded{
                 [&](const Linear& l) {
                   if (l.weight.rank() != 2 || l.bias.rank() != 1 ||
                       l.bias.dim(0) != l.weight.dim(0)) {
                     throw DimensionError("layer '" + layer.name +
                                          "': linear weight/bias shapes inconsistent");
                   }
                 },
                 [&](const Conv2d& c) {
                   if (c.weight.rank() != 4 || c.bias.rank() != 1 ||
                       c.bias.dim(0) != c.weight.dim(0) || c.stride == 0) {
                     throw DimensionError("layer '" + layer.name +
                                          "': conv2d weight/bias shapes inconsistent");
                   }
                 },
                 [&](const MaxPool2d& p) {
                   if (p.kernel == 0 || p.stride == 0) {
                     throw DimensionError("layer '" + layer.name + "': pooling window must be positive");
                   }
                 },
                 [&](const Resize& r) {
                   if (r.height == 0 || r.width == 0) {
                     throw DimensionError("layer '" + layer.name + "': resize target must be positive");
                   }
                 },
                 [](const auto&) {},
             },
             layer.op);
}

// Per-sample output shape of `layer` for a per-sample input shape.
inline Shape infer_shape(const Layer& layer, const Shape& in) {
  auto fail = [&](const std::string& why) -> DimensionError {
    return DimensionError("layer '" + layer.name + "' (" + kind_name(layer.op) + "): " + why +
                          ", input " + shape_string(in));
  };
  return std::visit(
      Overloaded{
          [&](const Linear& l) -> Shape {
            if (in.size() != 1 || in[0] != l.weight.dim(1)) throw fail("expects [" + std::to_string(l.weight.dim(1)) + "]");
            return {l.weight.dim(0)};
          },
          [&](const Conv2d& c) -> Shape {
            if (in.size() != 3 || in[0] != c.weight.dim(1)) throw fail("expects " + std::to_string(c.weight.dim(1)) + " channels");
            if (c.weight.dim(2) > in[1] + 2 * c.padding || c.weight.dim(3) > in[2] + 2 * c.padding)
              throw fail("kernel larger than padded input");
            return {c.weight.dim(0), conv_output_extent(in[1], c.weight.dim(2), c.stride, c.padding),
                    conv_output_extent(in[2], c.weight.dim(3), c.stride, c.padding)};
          },
          [&](const ReLU&) -> Shape { return in; },
          [&](const MaxPool2d& p) -> Shape {
            if (in.size() != 3) throw fail("expects [C,H,W]");
            if (p.kernel > in[1] || p.kernel > in[2]) throw fail("pool window larger than input");
            return {in[0], conv_output_extent(in[1], p.kernel, p.stride, 0),
                    conv_output_extent(in[2], p.kernel, p.stride, 0)};
          },
          [&](const AdaptiveAvgPool1x1&) -> Shape {
            if (in.size() != 3) throw fail("expects [C,H,W]");
            return {in[0], 1, 1};
          },
          [&](const Flatten&) -> Shape { return {shape_size(in)}; },
          [&](const Softmax&) -> Shape {
            if (in.size() != 1) throw fail("expects [K]");
            return in;
          },
          [&](const Resize& r) -> Shape {
            if (in.size() != 3) throw fail("expects [C,H,W]");
            return {in[0], r.height, r.width};
          },
      },
      layer.op);
}

// Applies one layer to a batch [N, ...].
inline Tensor apply_layer(const Layer& layer, const Tensor& x) {
  return std::visit(
      Overloaded{
          [&](const Linear& l) {
            detail::require_rank(x, 2, "linear layer");
            // y = x W^T + b
            const std::size_t n = x.dim(0), in = x.dim(1), out = l.weight.dim(0);
            if (in != l.weight.dim(1)) throw DimensionError("layer '" + layer.name + "': input width mismatch");
            Tensor y({n, out});
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t o = 0; o < out; ++o) {
                double s = l.bias[o];
                for (std::size_t k = 0; k < in; ++k) s += l.weight.at(o, k) * x.at(i, k);
                y.at(i, o) = s;
              }
            y.require_finite("layer '" + layer.name + "'");
            return y;
          },
          [&](const Conv2d& c) { return conv2d(x, c.weight, c.bias, c.stride, c.padding); },
          [&](const ReLU&) { return relu(x); },
          [&](const MaxPool2d& p) { return max_pool2d(x, p.kernel, p.stride); },
          [&](const AdaptiveAvgPool1x1&) { return adaptive_avg_pool_1x1(x); },
          [&](const Flatten&) { return flatten_samples(x); },
          [&](const Softmax&) { return softmax_rows(x); },
          [&](const Resize& r) { return resize_spatial(x, r.height, r.width); },
      },
      layer.op);
}

}  // namespace stitchkit
