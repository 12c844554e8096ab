#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "stitchkit/error.hpp"
#include "stitchkit/rng.hpp"
#include "stitchkit/tensor.hpp"

namespace stitchkit {

struct Dataset {
  Tensor images;  // [N, C, H, W]
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;
  std::uint64_t seed = 0;
  std::string split = "all";  // "all", "train" or "test"

  std::size_t size() const { return labels.size(); }
  std::size_t num_classes() const { return class_names.size(); }
};

inline void validate(const Dataset& d) {
  if (d.images.empty() || d.images.rank() != 4) throw DimensionError("dataset images must be [N,C,H,W]");
  if (d.images.dim(0) != d.labels.size()) {
    throw DimensionError("dataset has " + std::to_string(d.images.dim(0)) + " images but " +
                         std::to_string(d.labels.size()) + " labels");
  }
  for (auto l : d.labels) {
    if (l >= d.num_classes()) throw ConfigError("dataset label " + std::to_string(l) + " out of range");
  }
}

inline Dataset subset(const Dataset& d, std::span<const std::size_t> indices) {
  Dataset out;
  out.images = take_samples(d.images, indices);
  out.labels.reserve(indices.size());
  for (auto i : indices) out.labels.push_back(d.labels.at(i));
  out.class_names = d.class_names;
  out.seed = d.seed;
  out.split = d.split;
  return out;
}

// Class c is an oriented grating: orientation (c mod 4) * 45 degrees, spatial
// frequency low for c < 4 and high otherwise (further classes cycle through
// more orientations). Each sample jitters angle, frequency, phase, contrast
// and brightness, plus Gaussian pixel noise.
inline Dataset make_synthetic_dataset(std::size_t num_classes, std::size_t per_class,
                                      std::size_t image_size, std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("make_synthetic_dataset needs at least 2 classes");
  if (per_class == 0 || image_size < 4) throw ConfigError("per_class must be >= 1 and image_size >= 4");
  const std::size_t n = num_classes * per_class;
  const std::size_t orientations = std::max<std::size_t>(4, (num_classes + 1) / 2);
  Tensor images({n, 1, image_size, image_size});
  std::vector<std::size_t> labels(n);
  Rng rng(seed);
  const double step = std::numbers::pi / static_cast<double>(orientations);
  const double size = static_cast<double>(image_size);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double base_angle = static_cast<double>(c % orientations) * step;
    const double cycles = (c / orientations) % 2 == 0 ? 2.0 : 4.5;
    for (std::size_t k = 0; k < per_class; ++k) {
      const std::size_t idx = c * per_class + k;
      labels[idx] = c;
      const double angle = base_angle + rng.uniform(-0.2, 0.2) * step;
      const double freq = cycles * rng.uniform(0.85, 1.15) * 2.0 * std::numbers::pi / size;
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double contrast = rng.uniform(0.6, 1.4);
      const double offset = rng.uniform(-0.3, 0.3);
      const double ca = std::cos(angle), sa = std::sin(angle);
      for (std::size_t y = 0; y < image_size; ++y)
        for (std::size_t x = 0; x < image_size; ++x) {
          const double u = ca * static_cast<double>(x) + sa * static_cast<double>(y);
          images.at(idx, 0, y, x) = contrast * std::sin(freq * u + phase) + offset + rng.normal(0.0, 0.8);
        }
    }
  }
  Dataset d;
  d.images = std::move(images);
  d.labels = std::move(labels);
  for (std::size_t c = 0; c < num_classes; ++c) d.class_names.push_back("class" + std::to_string(c));
  d.seed = seed;
  return d;
}

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

// Per-class 80:20 split after a seeded shuffle within each class.
inline TrainTestSplit train_test_split(const Dataset& d, double train_fraction = 0.8) {
  validate(d);
  std::vector<std::vector<std::size_t>> by_class(d.num_classes());
  for (std::size_t i = 0; i < d.size(); ++i) by_class[d.labels[i]].push_back(i);
  Rng rng(derive_seed(d.seed, 0x5711));
  std::vector<std::size_t> train_idx, test_idx;
  for (auto& members : by_class) {
    rng.shuffle(std::span<std::size_t>(members));
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    std::sort(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::sort(members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
    train_idx.insert(train_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_idx.insert(test_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
  }
  if (train_idx.empty() || test_idx.empty()) {
    throw ConfigError("train fraction " + std::to_string(train_fraction) + " leaves an empty " +
                      (train_idx.empty() ? "train" : "test") + " split for " + std::to_string(d.size()) + " samples");
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  TrainTestSplit out{subset(d, train_idx), subset(d, test_idx)};
  out.train.split = "train";
  out.test.split = "test";
  return out;
}

// Partial map from source class ids to a contiguous target range [0, K').
class LabelMap {
 public:
  LabelMap() = default;

  LabelMap(std::map<std::size_t, std::size_t> mapping, std::vector<std::string> target_names = {})
      : mapping_(std::move(mapping)), names_(std::move(target_names)) {
    if (mapping_.empty()) throw ConfigError("label map is empty");
    std::size_t max_target = 0;
    for (auto [src, dst] : mapping_) max_target = std::max(max_target, dst);
    targets_ = max_target + 1;
    std::vector<bool> used(targets_, false);
    for (auto [src, dst] : mapping_) used[dst] = true;
    for (std::size_t t = 0; t < targets_; ++t) {
      if (!used[t]) throw ConfigError("label map targets must be contiguous from 0; missing " + std::to_string(t));
    }
    if (names_.empty()) {
      for (std::size_t t = 0; t < targets_; ++t) names_.push_back("target" + std::to_string(t));
    }
    if (names_.size() != targets_) throw ConfigError("label map target names do not match target count");
  }

  static LabelMap identity(std::size_t k, std::vector<std::string> names = {}) {
    std::map<std::size_t, std::size_t> m;
    for (std::size_t i = 0; i < k; ++i) m[i] = i;
    return LabelMap(std::move(m), std::move(names));
  }

  bool empty() const { return mapping_.empty(); }
  std::size_t num_targets() const { return targets_; }
  std::size_t max_source() const { return mapping_.empty() ? 0 : mapping_.rbegin()->first; }
  const std::map<std::size_t, std::size_t>& mapping() const { return mapping_; }
  const std::vector<std::string>& target_names() const { return names_; }

  std::optional<std::size_t> map(std::size_t source) const {
    auto it = mapping_.find(source);
    if (it == mapping_.end()) return std::nullopt;
    return it->second;
  }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  std::map<std::size_t, std::size_t> mapping_;
  std::vector<std::string> names_;
  std::size_t targets_ = 0;
};

// The 2-superclass subtask of the 8-class synthetic task: low-frequency
// classes {0..3} versus high-frequency classes {4..7}.
inline LabelMap superclass_map() {
  std::map<std::size_t, std::size_t> m;
  for (std::size_t c = 0; c < 8; ++c) m[c] = c < 4 ? 0 : 1;
  return LabelMap(std::move(m), {"coarse", "fine"});
}

// Target score = sum of mapped source probabilities, renormalized over the
// mapped mass. Rows with no mapped mass become uniform.
inline Tensor apply_label_map(const Tensor& outputs, const LabelMap& map) {
  if (map.empty()) throw ConfigError("label map is empty");
  detail::require_rank(outputs, 2, "apply_label_map");
  const std::size_t n = outputs.dim(0), k = outputs.dim(1);
  if (map.max_source() >= k) {
    throw ConfigError("label map refers to source class " + std::to_string(map.max_source()) +
                      " but outputs have " + std::to_string(k) + " classes");
  }
  const std::size_t kt = map.num_targets();
  Tensor out({n, kt});
  for (std::size_t i = 0; i < n; ++i) {
    double mass = 0.0;
    for (auto [src, dst] : map.mapping()) {
      out.at(i, dst) += outputs.at(i, src);
      mass += outputs.at(i, src);
    }
    for (std::size_t t = 0; t < kt; ++t) out.at(i, t) = mass > 0.0 ? out.at(i, t) / mass : 1.0 / static_cast<double>(kt);
  }
  return out;
}

// Dataset restricted to mapped classes, with labels rewritten to target ids.
inline Dataset map_dataset(const Dataset& d, const LabelMap& map) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (map.map(d.labels[i])) keep.push_back(i);
  if (keep.empty()) throw ConfigError("label map leaves no samples");
  Dataset out = subset(d, keep);
  for (auto& l : out.labels) l = *map.map(l);
  out.class_names = map.target_names();
  return out;
}

}  // namespace stitchkit
