#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stitchkit/error.hpp"
#include "stitchkit/layer.hpp"
#include "stitchkit/tensor.hpp"

namespace stitchkit {

// Sequential chain of layers. `input_shape` is per sample (no batch axis).
struct Network {
  std::string id;
  Shape input_shape;
  std::vector<std::string> class_labels;
  std::vector<Layer> layers;
};

inline std::size_t parameter_count(const Network& net) { return parameter_count(net.layers); }

// Dry-runs shapes through `layers`; returns the per-sample output shape.
inline Shape infer_output_shape(std::span<const Layer> layers, const Shape& input_shape) {
  Shape s = input_shape;
  for (const auto& layer : layers) {
    validate_layer(layer);
    s = infer_shape(layer, s);
  }
  return s;
}

// Structural validation: shapes compose, softmax only at the end, labels
// match the output width when present. Returns the per-sample output shape.
inline Shape validate(const Network& net) {
  if (net.id.empty()) throw ConfigError("network id must be non-empty");
  if (net.layers.empty()) throw ConfigError("network '" + net.id + "' has no layers");
  if (net.input_shape.empty()) throw DimensionError("network '" + net.id + "' has no input shape");
  for (std::size_t i = 0; i + 1 < net.layers.size(); ++i) {
    if (std::holds_alternative<Softmax>(net.layers[i].op)) {
      throw ConfigError("network '" + net.id + "': softmax is only allowed as the final layer");
    }
  }
  Shape out = infer_output_shape(net.layers, net.input_shape);
  if (!net.class_labels.empty() && (out.size() != 1 || out[0] != net.class_labels.size())) {
    throw DimensionError("network '" + net.id + "': " + std::to_string(net.class_labels.size()) +
                         " class labels for output " + shape_string(out));
  }
  return out;
}

inline Tensor forward_layers(std::span<const Layer> layers, const Tensor& batch) {
  Tensor x = batch;
  for (const auto& layer : layers) x = apply_layer(layer, x);
  return x;
}

inline void require_batch_shape(const Tensor& batch, const Shape& per_sample, const std::string& who) {
  if (batch.empty() || batch.rank() != per_sample.size() + 1 ||
      !std::equal(per_sample.begin(), per_sample.end(), batch.shape().begin() + 1)) {
    throw DimensionError(who + " expects batches of " + shape_string(per_sample) + ", got " +
                         shape_string(batch.shape()));
  }
}

inline Tensor forward(const Network& net, const Tensor& batch) {
  require_batch_shape(batch, net.input_shape, "network '" + net.id + "'");
  return forward_layers(net.layers, batch);
}

// Activation after layers [0, layer_index).
inline Tensor forward_upto(const Network& net, std::size_t layer_index, const Tensor& batch) {
  if (layer_index > net.layers.size()) {
    throw DimensionError("forward_upto index " + std::to_string(layer_index) + " out of range for '" +
                         net.id + "' with " + std::to_string(net.layers.size()) + " layers");
  }
  require_batch_shape(batch, net.input_shape, "network '" + net.id + "'");
  return forward_layers(std::span<const Layer>(net.layers).first(layer_index), batch);
}

enum class FragmentKind { Starting, Middle, Terminating, Whole };

inline const char* to_string(FragmentKind k) {
  switch (k) {
    case FragmentKind::Starting: return "starting";
    case FragmentKind::Middle: return "middle";
    case FragmentKind::Terminating: return "terminating";
    case FragmentKind::Whole: return "whole";
  }
  return "?";
}

// Contiguous layer span [start_layer, end_layer) of a source network.
struct Fragment {
  std::string source_network_id;
  std::size_t start_layer = 0;
  std::size_t end_layer = 0;
  std::size_t source_length = 0;
  Shape input_shape;  // native per-sample input of the span
  std::vector<Layer> layers;
  std::vector<std::string> class_labels;  // terminating fragments only

  bool is_starting() const { return start_layer == 0; }
  bool is_terminating() const { return end_layer == source_length; }

  FragmentKind kind() const {
    if (is_starting() && is_terminating()) return FragmentKind::Whole;
    if (is_starting()) return FragmentKind::Starting;
    if (is_terminating()) return FragmentKind::Terminating;
    return FragmentKind::Middle;
  }

  std::string id() const {
    char buf[48];
    std::snprintf(buf, sizeof buf, "/%02zu-%02zu", start_layer, end_layer);
    return source_network_id + buf;
  }

  bool overlaps(const Fragment& other) const {
    return source_network_id == other.source_network_id && start_layer < other.end_layer &&
           other.start_layer < end_layer;
  }
};

inline std::size_t parameter_count(const Fragment& f) { return parameter_count(f.layers); }

enum class Granularity {
  SingleCut,  // consecutive spans between cut points
  AllSpans,   // every span between any two cut points
};

// Cut boundaries: network start, each trainable layer after the first, end.
inline std::vector<std::size_t> cut_points(const Network& net) {
  std::vector<std::size_t> cuts{0};
  bool seen_trainable = false;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!is_trainable(net.layers[i])) continue;
    if (seen_trainable) cuts.push_back(i);
    seen_trainable = true;
  }
  cuts.push_back(net.layers.size());
  return cuts;
}

inline Fragment make_fragment(const Network& net, std::size_t start, std::size_t end) {
  if (start >= end || end > net.layers.size()) throw DimensionError("invalid fragment span");
  Fragment f;
  f.source_network_id = net.id;
  f.start_layer = start;
  f.end_layer = end;
  f.source_length = net.layers.size();
  f.input_shape = infer_output_shape(std::span<const Layer>(net.layers).first(start), net.input_shape);
  f.layers.assign(net.layers.begin() + static_cast<std::ptrdiff_t>(start),
                  net.layers.begin() + static_cast<std::ptrdiff_t>(end));
  if (f.is_terminating()) f.class_labels = net.class_labels;
  return f;
}

// Cuts a network immediately before every trainable layer except the first.
// A network with fewer than two trainable layers yields one Whole fragment.
inline std::vector<Fragment> fragmentize(const Network& net, Granularity g = Granularity::SingleCut) {
  validate(net);
  const auto cuts = cut_points(net);
  std::vector<Fragment> out;
  if (g == Granularity::SingleCut) {
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) out.push_back(make_fragment(net, cuts[i], cuts[i + 1]));
  } else {
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
      for (std::size_t j = i + 1; j < cuts.size(); ++j) out.push_back(make_fragment(net, cuts[i], cuts[j]));
  }
  return out;
}

// Fragments plus the networks they came from (needed for native inputs).
class FragmentPool {
 public:
  FragmentPool() = default;

  explicit FragmentPool(std::vector<Network> networks, Granularity g = Granularity::SingleCut)
      : networks_(std::move(networks)), granularity_(g) {
    for (std::size_t i = 0; i < networks_.size(); ++i) {
      if (!index_.emplace(networks_[i].id, i).second) {
        throw ConfigError("duplicate network id '" + networks_[i].id + "' in pool");
      }
      auto frags = fragmentize(networks_[i], g);
      fragments_.insert(fragments_.end(), std::make_move_iterator(frags.begin()),
                        std::make_move_iterator(frags.end()));
    }
  }

  const std::vector<Network>& networks() const { return networks_; }
  const std::vector<Fragment>& fragments() const { return fragments_; }
  Granularity granularity() const { return granularity_; }

  const Network& network(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw ConfigError("unknown network id '" + id + "'");
    return networks_[it->second];
  }

  std::size_t count(FragmentKind k) const {
    return static_cast<std::size_t>(std::count_if(fragments_.begin(), fragments_.end(),
                                                  [&](const Fragment& f) { return f.kind() == k; }));
  }

 private:
  std::vector<Network> networks_;
  std::vector<Fragment> fragments_;
  std::map<std::string, std::size_t> index_;
  Granularity granularity_ = Granularity::SingleCut;
};

}  // namespace stitchkit
