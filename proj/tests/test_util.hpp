#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stitchkit/stitchkit.hpp"

namespace testutil {

using namespace stitchkit;

inline Tensor random_tensor(Shape shape, Rng& rng, double sd = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal(0.0, sd);
  return t;
}

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.dim(1); ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  return c;
}

// Direct convolution read straight off the definition, with explicit
// bounds checks instead of padded indexing.
inline Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  Tensor y({n, o, oh, ow});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = b[oc];
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long yy = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(wd)) continue;
                acc += w.at(oc, ic, u, v) * x.at(s, ic, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
              }
          y.at(s, oc, i, j) = acc;
        }
  return y;
}

// Weight (t = 0) or bias (t = 1) of a trainable layer; null otherwise.
inline const Tensor* parameter_tensor(const Layer& layer, int t) {
  return std::visit(Overloaded{[&](const Linear& l) -> const Tensor* { return t == 0 ? &l.weight : &l.bias; },
                               [&](const Conv2d& c) -> const Tensor* { return t == 0 ? &c.weight : &c.bias; },
                               [](const auto&) -> const Tensor* { return nullptr; }},
                    layer.op);
}

// Bitwise equality of architecture parameters and metadata.
inline bool same_network(const Network& a, const Network& b) {
  if (a.id != b.id || a.input_shape != b.input_shape || a.class_labels != b.class_labels ||
      a.layers.size() != b.layers.size())
    return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].op.index() != b.layers[l].op.index()) return false;
    for (int t = 0; t < 2; ++t) {
      const Tensor *p = parameter_tensor(a.layers[l], t), *q = parameter_tensor(b.layers[l], t);
      if ((p == nullptr) != (q == nullptr)) return false;
      if (p && !bitwise_equal(*p, *q)) return false;
    }
  }
  return true;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1e-300, std::abs(a), std::abs(b)});
}

// Small untrained zoo on 8x8 images; cheap enough for unit tests.
inline std::vector<Network> tiny_zoo(std::uint64_t seed = 3, std::size_t image = 8) {
  std::vector<std::string> labels;
  for (int c = 0; c < 8; ++c) labels.push_back("c" + std::to_string(c));
  std::vector<Network> nets;
  std::uint64_t s = seed;
  for (const auto& name : zoo_arch_names()) nets.push_back(build_network(zoo_arch(name), {1, image, image}, labels, name, s++));
  return nets;
}

inline Dataset tiny_data(std::size_t per_class = 6, std::size_t image = 8, std::uint64_t seed = 5) {
  return make_synthetic_dataset(8, per_class, image, seed);
}

// Briefly trained copies of the tiny zoo.
inline std::vector<Network> trained_tiny_zoo(const Dataset& train, std::size_t epochs = 3) {
  std::vector<Network> out;
  std::uint64_t s = 40;
  for (auto& n : tiny_zoo(7, train.images.dim(2))) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.lr = 0.01;
    cfg.seed = s++;
    out.push_back(train_network(n, train, cfg).network);
  }
  return out;
}

struct GradCheck {
  double max_relative_error = 0.0;
  std::size_t probes = 0;
};

// Compares backprop against central differences of the loss on `per_layer`
// random weight entries and one bias entry of every trainable layer.
// Entries whose gradient is below `floor` in both routes are not scored.
inline GradCheck gradient_check(const Network& net, const Tensor& batch, const std::vector<std::size_t>& labels,
                                Rng& rng, std::size_t per_layer = 10, double h = 1e-5, double floor = 1e-8) {
  const auto analytic = compute_gradients(net, batch, labels).grads;
  auto loss_at = [&](const Network& n) { return compute_gradients(n, batch, labels).loss; };
  GradCheck out;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    if (!is_trainable(net.layers[li])) continue;
    for (int which = 0; which < 2; ++which) {
      const std::size_t count = which == 0 ? per_layer : 1;
      for (std::size_t t = 0; t < count; ++t) {
        Network plus = net, minus = net;
        auto param = [&](Network& n) -> Tensor& {
          return std::visit(Overloaded{[&](Linear& l) -> Tensor& { return which == 0 ? l.weight : l.bias; },
                                       [&](Conv2d& c) -> Tensor& { return which == 0 ? c.weight : c.bias; },
                                       [](auto&) -> Tensor& { throw std::logic_error("not trainable"); }},
                            n.layers[li].op);
        };
        const std::size_t j = rng.below(param(plus).size());
        param(plus)[j] += h;
        param(minus)[j] -= h;
        const double fd = (loss_at(plus) - loss_at(minus)) / (2 * h);
        const double g = (which == 0 ? analytic.weight[li] : analytic.bias[li])[j];
        if (std::abs(g) < floor && std::abs(fd) < floor) continue;
        out.max_relative_error = std::max(out.max_relative_error, relative_error(g, fd));
        ++out.probes;
      }
    }
  }
  return out;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("stitchkit_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) { return stitchkit::detail::read_file(p); }

}  // namespace testutil
