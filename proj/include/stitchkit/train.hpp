#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "stitchkit/dataset.hpp"
#include "stitchkit/error.hpp"
#include "stitchkit/layer.hpp"
#include "stitchkit/network.hpp"
#include "stitchkit/rng.hpp"
#include "stitchkit/tensor.hpp"

namespace stitchkit {

// ---------------------------------------------------------------------------
// Architecture description

struct LayerSpec {
  enum class Kind { Conv, Linear, ReLU, MaxPool, GlobalAvgPool, Flatten, Softmax };
  Kind kind;
  std::size_t out = 0;  // conv channels / linear width; 0 on the last linear = num_classes
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;

  static LayerSpec conv(std::size_t out, std::size_t k = 3, std::size_t stride = 1, std::size_t pad = 1) {
    return {Kind::Conv, out, k, stride, pad};
  }
  static LayerSpec linear(std::size_t out = 0) { return {Kind::Linear, out, 0, 0, 0}; }
  static LayerSpec relu() { return {Kind::ReLU}; }
  static LayerSpec max_pool(std::size_t k = 2) { return {Kind::MaxPool, 0, k, k, 0}; }
  static LayerSpec global_avg_pool() { return {Kind::GlobalAvgPool}; }
  static LayerSpec flatten() { return {Kind::Flatten}; }
  static LayerSpec softmax() { return {Kind::Softmax}; }
};

struct ArchSpec {
  std::string name;
  std::vector<LayerSpec> layers;
};

// The three zoo architectures: a small CNN, a deeper CNN and an MLP.
// Every width that reaches a cut point stays <= 32 so that the stitch
// projection is well posed with 32 stitching samples.
inline ArchSpec zoo_arch(const std::string& name) {
  using L = LayerSpec;
  if (name == "cnn_a") {
    return {name,
            {L::conv(8), L::relu(), L::max_pool(), L::conv(16), L::relu(), L::max_pool(), L::conv(24),
             L::relu(), L::global_avg_pool(), L::flatten(), L::linear(), L::softmax()}};
  }
  if (name == "cnn_b") {
    return {name,
            {L::conv(8), L::relu(), L::conv(16), L::relu(), L::max_pool(), L::conv(16), L::relu(),
             L::max_pool(), L::conv(32), L::relu(), L::global_avg_pool(), L::flatten(), L::linear(24),
             L::relu(), L::linear(), L::softmax()}};
  }
  if (name == "mlp_c") {
    return {name,
            {L::flatten(), L::linear(24), L::relu(), L::linear(24), L::relu(), L::linear(24), L::relu(),
             L::linear(16), L::relu(), L::linear(), L::softmax()}};
  }
  throw ConfigError("unknown architecture '" + name + "' (expected cnn_a, cnn_b or mlp_c)");
}

inline const std::vector<std::string>& zoo_arch_names() {
  static const std::vector<std::string> names{"cnn_a", "cnn_b", "mlp_c"};
  return names;
}

// He-uniform initialized network. Biases start at zero.
inline Network build_network(const ArchSpec& arch, const Shape& input_shape,
                             const std::vector<std::string>& class_labels, const std::string& id,
                             std::uint64_t seed) {
  Rng rng(seed);
  Network net;
  net.id = id;
  net.input_shape = input_shape;
  net.class_labels = class_labels;
  Shape s = input_shape;
  std::size_t idx = 0;
  auto he = [&](Tensor& w, std::size_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
  };
  for (const auto& spec : arch.layers) {
    Layer layer;
    layer.name = std::to_string(idx++);
    switch (spec.kind) {
      case LayerSpec::Kind::Conv: {
        if (s.size() != 3) throw DimensionError(arch.name + ": conv needs a [C,H,W] input");
        Conv2d c{Tensor({spec.out, s[0], spec.kernel, spec.kernel}), Tensor({spec.out}), spec.stride, spec.padding};
        he(c.weight, s[0] * spec.kernel * spec.kernel);
        layer.name = "conv" + layer.name;
        layer.op = std::move(c);
        break;
      }
      case LayerSpec::Kind::Linear: {
        if (s.size() != 1) throw DimensionError(arch.name + ": linear needs a flat input");
        const std::size_t out = spec.out ? spec.out : class_labels.size();
        Linear l{Tensor({out, s[0]}), Tensor({out})};
        he(l.weight, s[0]);
        layer.name = "fc" + layer.name;
        layer.op = std::move(l);
        break;
      }
      case LayerSpec::Kind::ReLU: layer.name = "relu" + layer.name; layer.op = ReLU{}; break;
      case LayerSpec::Kind::MaxPool: layer.name = "pool" + layer.name; layer.op = MaxPool2d{spec.kernel, spec.stride}; break;
      case LayerSpec::Kind::GlobalAvgPool: layer.name = "gap" + layer.name; layer.op = AdaptiveAvgPool1x1{}; break;
      case LayerSpec::Kind::Flatten: layer.name = "flat" + layer.name; layer.op = Flatten{}; break;
      case LayerSpec::Kind::Softmax: layer.name = "softmax" + layer.name; layer.op = Softmax{}; break;
    }
    s = infer_shape(layer, s);
    net.layers.push_back(std::move(layer));
  }
  validate(net);
  return net;
}

// ---------------------------------------------------------------------------
// Backpropagation

// Parameter gradients, indexed like Network::layers (empty for layers
// without parameters).
struct Gradients {
  std::vector<Tensor> weight;
  std::vector<Tensor> bias;
};

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

namespace detail {

inline Tensor backward_linear(const Linear& l, const Tensor& x, const Tensor& gy, Tensor* gw, Tensor* gb) {
  const std::size_t n = x.dim(0), in = x.dim(1), out = l.weight.dim(0);
  if (gw) {
    *gw = Tensor({out, in});
    *gb = Tensor({out});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t o = 0; o < out; ++o) {
        const double g = gy.at(i, o);
        (*gb)[o] += g;
        for (std::size_t k = 0; k < in; ++k) gw->at(o, k) += g * x.at(i, k);
      }
  }
  Tensor gx({n, in});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < out; ++o) {
      const double g = gy.at(i, o);
      for (std::size_t k = 0; k < in; ++k) gx.at(i, k) += g * l.weight.at(o, k);
    }
  return gx;
}

inline Tensor backward_conv(const Conv2d& c, const Tensor& x, const Tensor& gy, Tensor* gw, Tensor* gb,
                            bool need_input_grad) {
  const std::size_t batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t out_ch = c.weight.dim(0), kh = c.weight.dim(2), kw = c.weight.dim(3);
  const std::size_t oh = gy.dim(2), ow = gy.dim(3);
  const auto pad = static_cast<std::ptrdiff_t>(c.padding);
  const auto st = static_cast<std::ptrdiff_t>(c.stride);
  if (gw) {
    *gw = Tensor(c.weight.shape());
    *gb = Tensor({out_ch});
  }
  Tensor gx = need_input_grad ? Tensor(x.shape()) : Tensor();
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out_ch; ++o) {
      const double* gplane = gy.data().data() + (n * out_ch + o) * oh * ow;
      if (gw) {
        double s = 0.0;
        for (std::size_t k = 0; k < oh * ow; ++k) s += gplane[k];
        (*gb)[o] += s;
      }
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const double* src = x.data().data() + (n * channels + ch) * h * w;
        double* gsrc = need_input_grad ? gx.data().data() + (n * channels + ch) * h * w : nullptr;
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::size_t widx = ((o * channels + ch) * kh + ky) * kw + kx;
            const double wv = c.weight[widx];
            double acc = 0.0;
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * st + static_cast<std::ptrdiff_t>(ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * st + static_cast<std::ptrdiff_t>(kx) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                const double g = gplane[oy * ow + ox];
                const std::size_t sidx = static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix);
                acc += g * src[sidx];
                if (gsrc) gsrc[sidx] += g * wv;
              }
            }
            if (gw) (*gw)[widx] += acc;
          }
      }
    }
  return gx;
}

inline Tensor backward_max_pool(const MaxPool2d& p, const Tensor& x, const Tensor& gy) {
  Tensor gx(x.shape());
  for (std::size_t n = 0; n < gy.dim(0); ++n)
    for (std::size_t c = 0; c < gy.dim(1); ++c)
      for (std::size_t oy = 0; oy < gy.dim(2); ++oy)
        for (std::size_t ox = 0; ox < gy.dim(3); ++ox) {
          std::size_t by = oy * p.stride, bx = ox * p.stride;
          double best = x.at(n, c, by, bx);
          for (std::size_t ky = 0; ky < p.kernel; ++ky)
            for (std::size_t kx = 0; kx < p.kernel; ++kx) {
              const double v = x.at(n, c, oy * p.stride + ky, ox * p.stride + kx);
              if (v > best) {
                best = v;
                by = oy * p.stride + ky;
                bx = ox * p.stride + kx;
              }
            }
          gx.at(n, c, by, bx) += gy.at(n, c, oy, ox);
        }
  return gx;
}

}  // namespace detail

// Softmax cross-entropy loss (mean over the batch) and parameter gradients.
// The network must end in Softmax; the loss is taken on its input logits.
// Layers before `first_trainable` receive no gradients.
inline LossAndGradients compute_gradients(const Network& net, const Tensor& batch,
                                          std::span<const std::size_t> labels,
                                          std::size_t first_trainable = 0) {
  if (net.layers.empty() || !std::holds_alternative<Softmax>(net.layers.back().op)) {
    throw ConfigError("network '" + net.id + "' must end in softmax to be trained");
  }
  require_batch_shape(batch, net.input_shape, "network '" + net.id + "'");
  const std::size_t depth = net.layers.size() - 1;  // layers producing logits
  std::vector<Tensor> acts;
  acts.reserve(depth + 1);
  acts.push_back(batch);
  for (std::size_t i = 0; i < depth; ++i) acts.push_back(apply_layer(net.layers[i], acts.back()));

  const Tensor& logits = acts.back();
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw DimensionError("label count differs from batch size");
  const Tensor probs = softmax_rows(logits);
  LossAndGradients out;
  Tensor g({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= k) throw ConfigError("label out of range for network output");
    out.loss -= std::log(std::max(probs.at(i, labels[i]), 1e-300));
    for (std::size_t j = 0; j < k; ++j) g.at(i, j) = (probs.at(i, j) - (j == labels[i] ? 1.0 : 0.0)) / static_cast<double>(n);
  }
  out.loss /= static_cast<double>(n);
  if (!std::isfinite(out.loss)) throw NumericError("non-finite training loss");

  out.grads.weight.resize(net.layers.size());
  out.grads.bias.resize(net.layers.size());
  for (std::size_t i = depth; i-- > first_trainable;) {
    const Layer& layer = net.layers[i];
    const Tensor& x = acts[i];
    const bool need_input = i > first_trainable;
    g = std::visit(
        Overloaded{
            [&](const Linear& l) {
              return detail::backward_linear(l, x, g, &out.grads.weight[i], &out.grads.bias[i]);
            },
            [&](const Conv2d& c) {
              return detail::backward_conv(c, x, g, &out.grads.weight[i], &out.grads.bias[i], need_input);
            },
            [&](const ReLU&) {
              Tensor gx = g;
              for (std::size_t j = 0; j < gx.size(); ++j)
                if (!(x[j] > 0.0)) gx[j] = 0.0;
              return gx;
            },
            [&](const MaxPool2d& p) { return detail::backward_max_pool(p, x, g); },
            [&](const AdaptiveAvgPool1x1&) {
              Tensor gx(x.shape());
              const std::size_t plane = x.dim(2) * x.dim(3);
              for (std::size_t j = 0; j < gx.size(); ++j) gx[j] = g[j / plane] / static_cast<double>(plane);
              return gx;
            },
            [&](const Flatten&) { return g.reshaped(x.shape()); },
            [&](const Softmax&) -> Tensor { throw ConfigError("softmax inside a trained network"); },
            [&](const Resize&) -> Tensor { throw ConfigError("resize layers are not trainable"); },
        },
        layer.op);
    if (!need_input) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// SGD with momentum: v <- mu v + g; w <- w - lr v.

struct TrainConfig {
  std::size_t epochs = 10;
  double lr = 0.001;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct TrainedNetwork {
  Network network;
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

namespace detail {

class MomentumSgd {
 public:
  MomentumSgd(const Network& net, double lr, double momentum) : lr_(lr), mu_(momentum) {
    vw_.resize(net.layers.size());
    vb_.resize(net.layers.size());
  }

  void step(Network& net, const Gradients& g) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      if (g.weight[i].empty()) continue;
      std::visit(Overloaded{
                     [&](Linear& l) { update(l.weight, l.bias, g, i); },
                     [&](Conv2d& c) { update(c.weight, c.bias, g, i); },
                     [](auto&) {},
                 },
                 net.layers[i].op);
    }
  }

 private:
  void update(Tensor& w, Tensor& b, const Gradients& g, std::size_t i) {
    apply(w, g.weight[i], vw_[i]);
    apply(b, g.bias[i], vb_[i]);
  }

  void apply(Tensor& param, const Tensor& grad, Tensor& velocity) {
    if (velocity.empty()) velocity = Tensor(param.shape());
    for (std::size_t j = 0; j < param.size(); ++j) {
      velocity[j] = mu_ * velocity[j] + grad[j];
      param[j] -= lr_ * velocity[j];
    }
  }

  double lr_, mu_;
  std::vector<Tensor> vw_, vb_;
};

inline std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace detail

// Trains every parameter of `init` on `data` (labels index the network output).
inline TrainedNetwork train_network(Network init, const Dataset& data, const TrainConfig& cfg) {
  validate(data);
  const Shape out = validate(init);
  if (out.size() != 1 || out[0] != data.num_classes()) {
    throw ConfigError("network '" + init.id + "' output width " + shape_string(out) + " differs from " +
                      std::to_string(data.num_classes()) + " dataset classes");
  }
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  TrainedNetwork result{std::move(init), {}};
  detail::MomentumSgd opt(result.network, cfg.lr, cfg.momentum);
  Rng rng(cfg.seed);
  auto order = detail::iota_indices(data.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor batch = take_samples(data.images, idx);
      std::vector<std::size_t> labels;
      for (auto i : idx) labels.push_back(data.labels[i]);
      LossAndGradients lg;
      try {
        lg = compute_gradients(result.network, batch, labels);
      } catch (const NumericError&) {
        throw NumericError("training of '" + result.network.id + "' diverged in epoch " + std::to_string(epoch));
      }
      total += lg.loss * static_cast<double>(idx.size());
      opt.step(result.network, lg.grads);
    }
    const double mean_loss = total / static_cast<double>(order.size());
    if (!std::isfinite(mean_loss)) {
      throw NumericError("training of '" + result.network.id + "' diverged in epoch " + std::to_string(epoch));
    }
    result.epoch_loss.push_back(mean_loss);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Last-layer fine-tuning baseline

struct CurvePoint {
  std::size_t samples_processed = 0;
  double accuracy = 0.0;
};

struct FinetuneConfig {
  std::size_t samples_budget = 320;
  double lr = 0.001;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct FinetuneResult {
  Network network;
  std::vector<CurvePoint> curve;  // test accuracy after every batch, starting at 0 samples
};

// Index of the network's head: its last trainable layer, which must be Linear
// and followed by nothing but Softmax.
inline std::size_t head_index(const Network& net) {
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    if (!is_trainable(net.layers[i])) continue;
    if (!std::holds_alternative<Linear>(net.layers[i].op)) {
      throw ConfigError("network '" + net.id + "' head is not a linear layer");
    }
    for (std::size_t j = i + 1; j < net.layers.size(); ++j)
      if (!std::holds_alternative<Softmax>(net.layers[j].op)) {
        throw ConfigError("network '" + net.id + "' has non-softmax layers after its head");
      }
    return i;
  }
  throw ConfigError("network '" + net.id + "' has no trainable layer");
}

// Replaces the head with a freshly initialized Linear over the mapped classes
// and trains only that layer. Body activations are computed once, so body
// weights cannot change.
inline FinetuneResult finetune_last_layer(const Network& net, const Dataset& train, const Dataset& test,
                                          const LabelMap& map, const FinetuneConfig& cfg) {
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  const std::size_t head = head_index(net);
  const Dataset mtrain = map_dataset(train, map);
  const Dataset mtest = map_dataset(test, map);
  const Tensor train_features = flatten_samples(forward_upto(net, head, mtrain.images));
  const Tensor test_features = flatten_samples(forward_upto(net, head, mtest.images));
  const std::size_t in = train_features.dim(1), classes = map.num_targets();

  Rng rng(cfg.seed);
  Network head_net;
  head_net.id = net.id + "_head";
  head_net.input_shape = {in};
  head_net.class_labels = map.target_names();
  {
    Linear l{Tensor({classes, in}), Tensor({classes})};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : l.weight.data()) v = rng.uniform(-bound, bound);
    for (double& v : l.bias.data()) v = rng.uniform(-bound, bound);
    head_net.layers.push_back({"head", std::move(l)});
    head_net.layers.push_back({"softmax", Softmax{}});
  }

  auto accuracy = [&] {
    const auto pred = argmax_rows(forward(head_net, test_features));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == mtest.labels[i];
    return static_cast<double>(correct) / static_cast<double>(pred.size());
  };

  FinetuneResult result;
  result.curve.push_back({0, accuracy()});
  detail::MomentumSgd opt(head_net, cfg.lr, cfg.momentum);
  auto order = detail::iota_indices(mtrain.size());
  std::size_t processed = 0;
  while (processed < cfg.samples_budget) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size() && processed < cfg.samples_budget; start += cfg.batch_size) {
      const std::size_t take = std::min({cfg.batch_size, order.size() - start, cfg.samples_budget - processed});
      std::span<const std::size_t> idx(order.data() + start, take);
      std::vector<std::size_t> labels;
      for (auto i : idx) labels.push_back(mtrain.labels[i]);
      const auto lg = compute_gradients(head_net, take_samples(train_features, idx), labels);
      opt.step(head_net, lg.grads);
      processed += take;
      result.curve.push_back({processed, accuracy()});
    }
  }

  result.network.id = net.id + "_ft";
  result.network.input_shape = net.input_shape;
  result.network.class_labels = map.target_names();
  result.network.layers.assign(net.layers.begin(), net.layers.begin() + static_cast<std::ptrdiff_t>(head));
  result.network.layers.push_back({net.layers[head].name, head_net.layers[0].op});
  result.network.layers.push_back({"softmax", Softmax{}});
  validate(result.network);
  return result;
}

}  // namespace stitchkit
