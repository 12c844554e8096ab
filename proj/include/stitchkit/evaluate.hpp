#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "stitchkit/dataset.hpp"
#include "stitchkit/error.hpp"
#include "stitchkit/generator.hpp"
#include "stitchkit/network.hpp"
#include "stitchkit/stitcher.hpp"

namespace stitchkit {

struct EvalReport {
  std::string model_id;
  std::string kind;  // "network" or "stitchnet"
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t n_params = 0;
  std::size_t n_fragments = 1;
  double overall_cka = 1.0;
  std::vector<double> per_class_accuracy;  // per target class; NaN when a class has no samples

  friend bool operator==(const EvalReport& a, const EvalReport& b) {
    if (a.per_class_accuracy.size() != b.per_class_accuracy.size()) return false;
    for (std::size_t i = 0; i < a.per_class_accuracy.size(); ++i) {
      const double x = a.per_class_accuracy[i], y = b.per_class_accuracy[i];
      if (!(x == y || (std::isnan(x) && std::isnan(y)))) return false;
    }
    return a.model_id == b.model_id && a.kind == b.kind && a.accuracy == b.accuracy && a.correct == b.correct &&
           a.total == b.total && a.n_params == b.n_params && a.n_fragments == b.n_fragments &&
           a.overall_cka == b.overall_cka;
  }
};

// Softmax outputs of `net` mapped into the label map's target space.
inline Tensor predict_mapped(const Network& net, const Tensor& images, const LabelMap& map) {
  const Tensor out = forward(net, images);
  if (out.rank() != 2) throw ConfigError("model '" + net.id + "' does not produce class scores");
  return apply_label_map(out, map);
}

// Scores model outputs (already in the target space) against source-space
// labels; samples whose label is unmapped are skipped.
inline EvalReport score_outputs(const Tensor& mapped, std::span<const std::size_t> source_labels,
                                const LabelMap& map) {
  if (mapped.rank() != 2 || mapped.dim(0) != source_labels.size() || mapped.dim(1) != map.num_targets()) {
    throw DimensionError("score_outputs: outputs " + shape_string(mapped.shape()) + " do not match " +
                         std::to_string(source_labels.size()) + " labels and " +
                         std::to_string(map.num_targets()) + " targets");
  }
  EvalReport r;
  const auto pred = argmax_rows(mapped);
  std::vector<std::size_t> hits(map.num_targets(), 0), seen(map.num_targets(), 0);
  for (std::size_t i = 0; i < source_labels.size(); ++i) {
    const auto target = map.map(source_labels[i]);
    if (!target) continue;
    ++r.total;
    ++seen[*target];
    if (pred[i] == *target) {
      ++r.correct;
      ++hits[*target];
    }
  }
  if (r.total == 0) throw ConfigError("no evaluation samples fall inside the label map");
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  for (std::size_t t = 0; t < hits.size(); ++t) {
    r.per_class_accuracy.push_back(seen[t] ? static_cast<double>(hits[t]) / static_cast<double>(seen[t])
                                           : std::nan(""));
  }
  return r;
}

// Accuracy of a network on `d` (labels in the network's class space) after
// mapping both outputs and labels through `map`.
inline EvalReport evaluate(const Network& net, const Dataset& d, const LabelMap& map) {
  validate(d);
  EvalReport r = score_outputs(predict_mapped(net, d.images, map), d.labels, map);
  r.model_id = net.id;
  r.kind = "network";
  r.n_params = parameter_count(net);
  return r;
}

// As above for a StitchNet; rejects the split its projections were fitted on.
inline EvalReport evaluate(const StitchNet& s, const Dataset& d, const LabelMap& map) {
  if (!s.complete()) throw ConfigError("StitchNet " + s.id() + " has no terminating fragment");
  if (!s.stitch_split().empty() && s.stitch_split() == d.split) {
    throw ConfigError("StitchNet " + s.id() + " was stitched on split '" + d.split +
                      "'; evaluate it on a disjoint split");
  }
  EvalReport r = evaluate(s.network(), d, map);
  r.kind = "stitchnet";
  r.n_fragments = s.fragment_count();
  r.overall_cka = s.score();
  return r;
}

struct EnsemblePrediction {
  Tensor probs;  // mean of member probabilities
  std::vector<std::size_t> labels;
};

// Arithmetic mean of member probability rows; argmax ties go to the lowest index.
inline EnsemblePrediction average_probabilities(std::span<const Tensor> member_probs) {
  if (member_probs.empty()) throw ConfigError("ensemble needs at least one model");
  const Shape& shape = member_probs.front().shape();
  if (shape.size() != 2) throw DimensionError("ensemble members must produce [N x K] outputs");
  Tensor sum(shape);
  for (const auto& p : member_probs) {
    if (p.shape() != shape) {
      throw DimensionError("ensemble members disagree on output shape: " + shape_string(p.shape()) + " vs " +
                           shape_string(shape));
    }
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += p[i];
  }
  EnsemblePrediction e;
  e.probs = member_probs.size() == 1 ? member_probs.front() : scale(sum, 1.0 / static_cast<double>(member_probs.size()));
  e.labels = argmax_rows(e.probs);
  return e;
}

inline EnsemblePrediction ensemble_predict(std::span<const Network> models, const Tensor& batch) {
  std::vector<Tensor> probs;
  for (const auto& m : models) probs.push_back(forward(m, batch));
  return average_probabilities(probs);
}

inline EnsemblePrediction ensemble_predict(std::span<const Network> models, const Tensor& batch,
                                           const LabelMap& map) {
  std::vector<Tensor> probs;
  for (const auto& m : models) probs.push_back(predict_mapped(m, batch, map));
  return average_probabilities(probs);
}

// Entries with score > cka_min, highest score first, at most k.
inline std::vector<GenerationEntry> select_ensemble_pool(const GenerationResult& results, double cka_min,
                                                         std::size_t k) {
  std::vector<GenerationEntry> out;
  for (const auto& e : results.entries)
    if (e.score > cka_min) out.push_back(e);
  std::stable_sort(out.begin(), out.end(),
                   [](const GenerationEntry& a, const GenerationEntry& b) { return a.score > b.score; });
  if (out.size() > k) out.resize(k);
  return out;
}

struct EnsembleSweepPoint {
  std::size_t size = 0;
  double accuracy = 0.0;
  double min_score = 0.0;
};

// Accuracy of the ensemble formed by the first j members, for j = 1..size.
inline std::vector<EnsembleSweepPoint> ensemble_sweep(const std::vector<GenerationEntry>& members, const Dataset& d,
                                                      const LabelMap& map) {
  std::vector<EnsembleSweepPoint> out;
  std::vector<Tensor> probs;
  for (const auto& m : members) {
    probs.push_back(predict_mapped(m.net.network(), d.images, map));
    const auto e = average_probabilities(probs);
    const auto r = score_outputs(e.probs, d.labels, map);
    out.push_back({probs.size(), r.accuracy, m.score});
  }
  return out;
}

}  // namespace stitchkit
