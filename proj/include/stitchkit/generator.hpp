#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "stitchkit/cka.hpp"
#include "stitchkit/dataset.hpp"
#include "stitchkit/error.hpp"
#include "stitchkit/network.hpp"
#include "stitchkit/rng.hpp"
#include "stitchkit/stitcher.hpp"

namespace stitchkit {

enum class CandidateStrategy { TopCka, FewestParams };

inline const char* to_string(CandidateStrategy s) {
  return s == CandidateStrategy::TopCka ? "top_cka" : "fewest_params";
}

struct GenerationConfig {
  std::size_t span = 2;            // K: candidates tried per expansion
  double threshold = 0.5;          // T: a joint is kept iff score * CKA > T
  std::size_t max_fragments = 16;  // L
  std::size_t samples = 32;        // M: size of the stitching set D
  std::vector<std::string> starting_ids;  // fragment or network ids; empty = every starting fragment
  CandidateStrategy strategy = CandidateStrategy::TopCka;
  std::uint64_t seed = 0;
  double ridge_factor = 1e-8;
  bool affine = false;
  unsigned threads = 1;
  bool capture_outputs = false;
};

inline void validate(const GenerationConfig& cfg) {
  if (cfg.span < 1) throw ConfigError("span K must be >= 1");
  if (cfg.max_fragments < 1) throw ConfigError("max fragments L must be >= 1");
  if (!(cfg.threshold >= 0.0 && cfg.threshold <= 1.0)) throw ConfigError("threshold T must lie in [0, 1]");
  if (cfg.samples < 2) throw ConfigError("samples M must be >= 2");
  if (!(cfg.ridge_factor >= 0.0)) throw ConfigError("ridge must be >= 0");
  if (cfg.threads < 1) throw ConfigError("threads must be >= 1");
}

struct GenerationEntry {
  StitchNet net;
  double score = 0.0;
  std::size_t joints_evaluated_at_emission = 0;  // joint evaluations performed up to this emission
  Tensor task_outputs;                           // outputs on D, when captured
};

struct GenerationStats {
  std::size_t starting_fragments = 0;
  std::size_t candidates_evaluated = 0;  // (Q, F) pairs whose s_n was formed
  std::size_t joints_rejected = 0;       // s_n <= T
  std::size_t cka_computations = 0;      // including ranking-only scores
  std::size_t degenerate_scores = 0;     // constant activations scored as 0
  std::size_t stitches = 0;
  double wall_time_seconds = 0.0;
};

struct GenerationResult {
  std::vector<GenerationEntry> entries;  // sorted by score, descending
  GenerationStats stats;
  std::vector<std::size_t> sample_indices;  // rows of the dataset forming D
  std::size_t samples_per_joint = 0;
};

// Upper bound S (K^L - 1) / (K - 1) on joint evaluations for S starting
// fragments; saturates at the largest representable size.
inline double joint_evaluation_bound(std::size_t starting, std::size_t span, std::size_t max_fragments) {
  const auto s = static_cast<double>(starting), k = static_cast<double>(span);
  if (span == 1) return s * static_cast<double>(max_fragments);
  return s * (std::pow(k, static_cast<double>(max_fragments)) - 1.0) / (k - 1.0);
}

// Sorted draw of M distinct rows.
inline std::vector<std::size_t> draw_samples(std::size_t available, std::size_t m, std::uint64_t seed) {
  if (m > available) {
    throw ConfigError("dataset has " + std::to_string(available) + " samples, need M=" + std::to_string(m));
  }
  std::vector<std::size_t> idx(available);
  for (std::size_t i = 0; i < available; ++i) idx[i] = i;
  if (m < available) {
    Rng rng(derive_seed(seed, 0xD));
    rng.shuffle(std::span<std::size_t>(idx));
    idx.resize(m);
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct Candidate {
  std::size_t fragment = 0;  // index into pool.fragments()
  double cka = 0.0;
  bool degenerate = false;
};

// Per-run caches over a fixed pool and stitching set: native inputs Y of every
// fragment and their centered Gram matrices. Built eagerly, then read-only.
class SearchContext {
 public:
  SearchContext(const FragmentPool& pool, Tensor stitch_batch, unsigned threads = 1)
      : pool_(&pool), batch_(std::move(stitch_batch)), threads_(std::max(1u, threads)) {
    std::map<std::pair<std::string, std::size_t>, std::size_t> seen;
    for (const auto& f : pool.fragments()) {
      const auto key = std::make_pair(f.source_network_id, f.start_layer);
      auto it = seen.find(key);
      if (it == seen.end()) {
        Tensor y = forward_upto(pool.network(f.source_network_id), f.start_layer, batch_);
        grams_.push_back(centered_gram(to_feature_major(y)));
        inputs_.push_back(std::move(y));
        it = seen.emplace(key, inputs_.size() - 1).first;
      }
      slot_.push_back(it->second);
    }
  }

  const FragmentPool& pool() const { return *pool_; }
  const Tensor& batch() const { return batch_; }
  const Tensor& native_input(std::size_t fragment) const { return inputs_[slot_[fragment]]; }
  const CenteredGram& native_gram(std::size_t fragment) const { return grams_[slot_[fragment]]; }

  // Middle/terminating fragments that can follow `q`: a supported joint kind
  // and no span overlap with fragments already in `q`.
  std::vector<std::size_t> compatible(const StitchNet& q, const Tensor& q_out) const {
    std::vector<std::size_t> out;
    const auto& frags = pool_->fragments();
    for (std::size_t i = 0; i < frags.size(); ++i) {
      const Fragment& f = frags[i];
      if (f.is_starting()) continue;
      if (!joint_kind(q_out.rank() - 1, f)) continue;
      if (q.overlaps(f)) continue;
      out.push_back(i);
    }
    return out;
  }

  // CKA of Q(D) against each listed fragment's native input. Degenerate
  // activations score 0.
  std::vector<Candidate> score(const CenteredGram& q_gram, const std::vector<std::size_t>& fragments) const {
    std::vector<Candidate> out(fragments.size());
    auto work = [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        out[i].fragment = fragments[i];
        try {
          out[i].cka = cka_from_grams(q_gram, native_gram(fragments[i]));
        } catch (const DegenerateInputError&) {
          out[i].cka = 0.0;
          out[i].degenerate = true;
        }
      }
    };
    const std::size_t workers = std::min<std::size_t>(threads_, fragments.size());
    if (workers <= 1) {
      work(0, fragments.size());
    } else {
      std::vector<std::thread> pool;
      const std::size_t chunk = (fragments.size() + workers - 1) / workers;
      for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t b = w * chunk, e = std::min(fragments.size(), b + chunk);
        if (b < e) pool.emplace_back(work, b, e);
      }
      for (auto& t : pool) t.join();
    }
    return out;
  }

  // Up to k candidates for extending `q`, whose output on D is `q_out`.
  // top_cka ranks every compatible fragment by CKA; fewest_params ranks by
  // parameter count and scores only the chosen ones. Ties break on fragment id.
  std::vector<Candidate> select(const StitchNet& q, const Tensor& q_out, std::size_t k, CandidateStrategy strategy,
                                std::size_t* cka_computations = nullptr) const {
    auto ids = compatible(q, q_out);
    const auto& frags = pool_->fragments();
    if (ids.empty()) return {};
    const CenteredGram q_gram = centered_gram(to_feature_major(q_out));
    std::vector<Candidate> ranked;
    if (strategy == CandidateStrategy::TopCka) {
      ranked = score(q_gram, ids);
      std::stable_sort(ranked.begin(), ranked.end(), [&](const Candidate& a, const Candidate& b) {
        if (a.cka != b.cka) return a.cka > b.cka;
        return frags[a.fragment].id() < frags[b.fragment].id();
      });
      if (cka_computations) *cka_computations += ids.size();
      if (ranked.size() > k) ranked.resize(k);
    } else {
      std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
        const auto pa = parameter_count(frags[a]), pb = parameter_count(frags[b]);
        if (pa != pb) return pa < pb;
        return frags[a].id() < frags[b].id();
      });
      if (ids.size() > k) ids.resize(k);
      ranked = score(q_gram, ids);
      if (cka_computations) *cka_computations += ids.size();
    }
    return ranked;
  }

 private:
  const FragmentPool* pool_;
  Tensor batch_;
  unsigned threads_;
  std::vector<Tensor> inputs_;
  std::vector<CenteredGram> grams_;
  std::vector<std::size_t> slot_;
};

// Convenience wrapper: ranks candidates for `q` on a stitching batch.
inline std::vector<Candidate> select_candidates(const FragmentPool& pool, const Tensor& stitch_batch,
                                                const StitchNet& q, std::size_t k, CandidateStrategy strategy) {
  const SearchContext ctx(pool, stitch_batch);
  return ctx.select(q, forward(q, stitch_batch), k, strategy);
}

namespace detail {

class Generator {
 public:
  Generator(const SearchContext& ctx, const GenerationConfig& cfg, GenerationResult& out)
      : ctx_(ctx), cfg_(cfg), out_(out) {}

  void run(const Fragment& start) {
    StitchNet q = StitchNet::from_starting(start);
    q.set_stitch_split(split_);
    Tensor x = forward_layers(start.layers, ctx_.batch());
    expand(q, x, 1.0);
  }

  std::string split_;

 private:
  void expand(const StitchNet& q, const Tensor& x, double s) {
    if (q.fragment_count() >= cfg_.max_fragments) return;
    const auto candidates = ctx_.select(q, x, cfg_.span, cfg_.strategy, &out_.stats.cka_computations);
    const auto& frags = ctx_.pool().fragments();
    for (const auto& c : candidates) {
      ++out_.stats.candidates_evaluated;
      if (c.degenerate) ++out_.stats.degenerate_scores;
      const double s_n = s * c.cka;
      if (!(s_n > cfg_.threshold)) {
        ++out_.stats.joints_rejected;
        continue;
      }
      const Fragment& f = frags[c.fragment];
      StitchOptions opt;
      opt.ridge_factor = cfg_.ridge_factor;
      opt.affine = cfg_.affine;
      StitchNet next = stitch(q, f, x, ctx_.native_input(c.fragment), c.cka, opt);
      ++out_.stats.stitches;
      const StitchPiece& piece = next.pieces().back();
      Tensor x_next = forward_layers(piece.adapter, x);
      x_next = forward_layers(piece.fragment.layers, x_next);
      if (f.is_terminating()) {
        GenerationEntry e;
        e.score = s_n;
        e.joints_evaluated_at_emission = out_.stats.candidates_evaluated;
        if (cfg_.capture_outputs) e.task_outputs = std::move(x_next);
        next.set_id(emission_id(out_.entries.size()));
        e.net = std::move(next);
        out_.entries.push_back(std::move(e));
      } else {
        expand(next, x_next, s_n);
      }
    }
  }

  static std::string emission_id(std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sn%04zu", n);
    return buf;
  }

  const SearchContext& ctx_;
  const GenerationConfig& cfg_;
  GenerationResult& out_;
};

}  // namespace detail

// Starting fragments selected by the configuration, in pool order. Whole
// (single-fragment) networks are already complete and are not expanded.
inline std::vector<std::size_t> starting_fragments(const FragmentPool& pool, const GenerationConfig& cfg) {
  std::vector<std::size_t> out;
  const auto& frags = pool.fragments();
  for (std::size_t i = 0; i < frags.size(); ++i) {
    if (frags[i].kind() != FragmentKind::Starting) continue;
    if (!cfg.starting_ids.empty()) {
      const bool wanted = std::any_of(cfg.starting_ids.begin(), cfg.starting_ids.end(), [&](const std::string& id) {
        return id == frags[i].id() || id == frags[i].source_network_id;
      });
      if (!wanted) continue;
    }
    out.push_back(i);
  }
  return out;
}

// Recursive threshold-pruned composition search. Depth-first from each
// starting fragment (score 1): rank up to K candidates, form
// s_n = s * CKA(Q(D), N_ij(D)), keep iff s_n > T, stitch, then either emit
// (terminating fragment) or recurse until L fragments.
inline GenerationResult generate(const FragmentPool& pool, const Dataset& d, const GenerationConfig& cfg) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const auto starts = starting_fragments(pool, cfg);
  if (starts.empty()) throw ConfigError("no starting fragments selected");
  bool any_terminating = false;
  for (const auto& f : pool.fragments()) any_terminating = any_terminating || f.kind() == FragmentKind::Terminating;
  if (!any_terminating) throw ConfigError("pool has no terminating fragment");

  GenerationResult result;
  result.sample_indices = draw_samples(d.size(), cfg.samples, cfg.seed);
  result.samples_per_joint = cfg.samples;
  result.stats.starting_fragments = starts.size();
  const SearchContext ctx(pool, take_samples(d.images, result.sample_indices), cfg.threads);
  detail::Generator gen(ctx, cfg, result);
  gen.split_ = d.split;
  for (auto i : starts) gen.run(pool.fragments()[i]);

  std::stable_sort(result.entries.begin(), result.entries.end(),
                   [](const GenerationEntry& a, const GenerationEntry& b) { return a.score > b.score; });
  result.stats.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// generate() that also returns each StitchNet's outputs on D, taken from the
// activations already computed during the search.
inline GenerationResult generate_with_inference(const FragmentPool& pool, const Dataset& d, GenerationConfig cfg) {
  cfg.capture_outputs = true;
  return generate(pool, d, cfg);
}

}  // namespace stitchkit
