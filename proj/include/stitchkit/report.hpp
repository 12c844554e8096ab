#pragma once

// CSV and summary writers. All files: comma separated, '.' decimal, LF line
// endings, fixed column order, doubles printed with %.17g so they parse back
// to the same bits.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stitchkit/evaluate.hpp"
#include "stitchkit/generator.hpp"
#include "stitchkit/snet_io.hpp"
#include "stitchkit/train.hpp"

namespace stitchkit {

inline constexpr const char* kResultsHeader = "stitchnet_id,score,n_fragments,n_params,provenance";
inline constexpr const char* kAccuracyHeader =
    "model_id,kind,overall_cka,accuracy,correct,total,n_params,n_fragments,per_class_accuracy";
inline constexpr const char* kHistogramHeader = "quantity,bin_lo,bin_hi,count";
inline constexpr const char* kCurveHeader = "series,samples_processed,accuracy";
inline constexpr const char* kSweepHeader = "ensemble_size,accuracy,min_score";

struct LearningCurve {
  std::string series;
  std::vector<CurvePoint> points;
};

struct HistogramBin {
  std::string quantity;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

// Fragment ids joined by '+', e.g. "cnn_a/00-03+mlp_c/05-09".
inline std::string provenance_string(const StitchNet& s) {
  std::string out;
  for (const auto& p : s.pieces()) {
    if (!out.empty()) out += "+";
    out += p.fragment.id();
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

// `n` equal bins over [lo, hi]; the last bin is closed on the right.
inline void histogram(std::vector<HistogramBin>& out, const std::string& quantity, const std::vector<double>& values,
                      double lo, double hi, std::size_t n) {
  if (values.empty()) return;
  if (hi <= lo) n = 1;
  const double width = hi > lo ? (hi - lo) / static_cast<double>(n) : 0.0;
  std::vector<std::size_t> counts(n, 0);
  for (double v : values) {
    std::size_t b = width > 0.0 ? static_cast<std::size_t>(std::floor((v - lo) / width)) : 0;
    counts[std::min(b, n - 1)]++;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double blo = lo + width * static_cast<double>(i);
    const double bhi = i + 1 == n ? std::max(hi, lo) : lo + width * static_cast<double>(i + 1);
    out.push_back({quantity, blo, bhi, counts[i]});
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) { write_file(path, text); }

}  // namespace detail

inline std::string results_csv(const GenerationResult* results) {
  std::string out = std::string(kResultsHeader) + "\n";
  if (!results) return out;
  for (const auto& e : results->entries) {
    out += e.net.id() + "," + detail::format_double(e.score) + "," + std::to_string(e.net.fragment_count()) + "," +
           std::to_string(e.net.parameter_count()) + "," + provenance_string(e.net) + "\n";
  }
  return out;
}

inline std::string accuracy_csv(const std::vector<EvalReport>& evals) {
  std::string out = std::string(kAccuracyHeader) + "\n";
  for (const auto& r : evals) {
    std::string per_class;
    for (double v : r.per_class_accuracy) {
      if (!per_class.empty()) per_class += ";";
      per_class += detail::format_double(v);
    }
    out += r.model_id + "," + r.kind + "," + detail::format_double(r.overall_cka) + "," +
           detail::format_double(r.accuracy) + "," + std::to_string(r.correct) + "," + std::to_string(r.total) + "," +
           std::to_string(r.n_params) + "," + std::to_string(r.n_fragments) + "," + per_class + "\n";
  }
  return out;
}

inline std::vector<EvalReport> parse_accuracy_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kAccuracyHeader) throw ParseError("unexpected accuracy CSV header", 0);
  std::vector<EvalReport> out;
  std::size_t offset = line.size() + 1;
  while (std::getline(in, line)) {
    const std::size_t here = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 9) throw ParseError("accuracy CSV row has " + std::to_string(f.size()) + " fields", here);
    EvalReport r;
    r.model_id = f[0];
    r.kind = f[1];
    r.overall_cka = detail::parse_double(f[2], here);
    r.accuracy = detail::parse_double(f[3], here);
    r.correct = detail::parse_size(f[4], here);
    r.total = detail::parse_size(f[5], here);
    r.n_params = detail::parse_size(f[6], here);
    r.n_fragments = detail::parse_size(f[7], here);
    if (!f[8].empty())
      for (const auto& v : detail::split(f[8], ';')) r.per_class_accuracy.push_back(detail::parse_double(v, here));
    out.push_back(std::move(r));
  }
  return out;
}

// Histograms of accuracy, overall score, fragment count and parameter count
// over the StitchNet reports.
inline std::vector<HistogramBin> stitchnet_histograms(const std::vector<EvalReport>& evals,
                                                      std::size_t bins = 10) {
  std::vector<double> acc, score, frags, params;
  for (const auto& r : evals) {
    if (r.kind != "stitchnet") continue;
    acc.push_back(r.accuracy);
    score.push_back(r.overall_cka);
    frags.push_back(static_cast<double>(r.n_fragments));
    params.push_back(static_cast<double>(r.n_params));
  }
  std::vector<HistogramBin> out;
  detail::histogram(out, "accuracy", acc, 0.0, 1.0, bins);
  detail::histogram(out, "score", score, 0.0, 1.0, bins);
  if (!frags.empty()) {
    const double lo = *std::min_element(frags.begin(), frags.end());
    const double hi = *std::max_element(frags.begin(), frags.end());
    detail::histogram(out, "n_fragments", frags, lo - 0.5, hi + 0.5, static_cast<std::size_t>(hi - lo) + 1);
    const double plo = *std::min_element(params.begin(), params.end());
    const double phi = *std::max_element(params.begin(), params.end());
    detail::histogram(out, "n_params", params, plo, phi, bins);
  }
  return out;
}

inline std::string histogram_csv(const std::vector<HistogramBin>& bins) {
  std::string out = std::string(kHistogramHeader) + "\n";
  for (const auto& b : bins) {
    out += b.quantity + "," + detail::format_double(b.lo) + "," + detail::format_double(b.hi) + "," +
           std::to_string(b.count) + "\n";
  }
  return out;
}

inline std::string curve_csv(const std::vector<LearningCurve>& curves) {
  std::string out = std::string(kCurveHeader) + "\n";
  for (const auto& c : curves)
    for (const auto& p : c.points) {
      out += c.series + "," + std::to_string(p.samples_processed) + "," + detail::format_double(p.accuracy) + "\n";
    }
  return out;
}

inline std::string sweep_csv(const std::vector<EnsembleSweepPoint>& sweep) {
  std::string out = std::string(kSweepHeader) + "\n";
  for (const auto& p : sweep) {
    out += std::to_string(p.size) + "," + detail::format_double(p.accuracy) + "," +
           detail::format_double(p.min_score) + "\n";
  }
  return out;
}

// Best accuracy reached so far against samples consumed by generation
// (M per joint evaluation), one point per emitted StitchNet in emission order.
// `evals` must hold a report for every entry, matched by id.
inline LearningCurve generation_curve(const GenerationResult& results, const std::vector<EvalReport>& evals,
                                      std::string series = "generation") {
  std::vector<const GenerationEntry*> order;
  for (const auto& e : results.entries) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(), [](const GenerationEntry* a, const GenerationEntry* b) {
    return a->joints_evaluated_at_emission < b->joints_evaluated_at_emission;
  });
  LearningCurve c{std::move(series), {}};
  double best = 0.0;
  for (const auto* e : order) {
    auto it = std::find_if(evals.begin(), evals.end(), [&](const EvalReport& r) { return r.model_id == e->net.id(); });
    if (it == evals.end()) throw ConfigError("no evaluation for StitchNet " + e->net.id());
    best = std::max(best, it->accuracy);
    c.points.push_back({e->joints_evaluated_at_emission * results.samples_per_joint, best});
  }
  return c;
}

// Writes results.csv, accuracy_vs_cka.csv, histograms.csv,
// learning_curve.csv and ensemble_sweep.csv into `dir`.
inline void emit_report(const GenerationResult* results, const std::vector<EvalReport>& evals,
                        const std::filesystem::path& dir, const std::vector<LearningCurve>& curves = {},
                        const std::vector<EnsembleSweepPoint>& sweep = {}) {
  std::filesystem::create_directories(dir);
  detail::write_text(dir / "results.csv", results_csv(results));
  detail::write_text(dir / "accuracy_vs_cka.csv", accuracy_csv(evals));
  detail::write_text(dir / "histograms.csv", histogram_csv(stitchnet_histograms(evals)));
  detail::write_text(dir / "learning_curve.csv", curve_csv(curves));
  detail::write_text(dir / "ensemble_sweep.csv", sweep_csv(sweep));
}

inline nlohmann::ordered_json stats_json(const GenerationResult& r, const GenerationConfig& cfg) {
  nlohmann::ordered_json j;
  j["span_K"] = cfg.span;
  j["threshold_T"] = cfg.threshold;
  j["max_fragments_L"] = cfg.max_fragments;
  j["samples_M"] = cfg.samples;
  j["strategy"] = to_string(cfg.strategy);
  j["seed"] = cfg.seed;
  j["ridge"] = cfg.ridge_factor;
  j["affine"] = cfg.affine;
  j["starting_fragments"] = r.stats.starting_fragments;
  j["candidates_evaluated"] = r.stats.candidates_evaluated;
  j["joints_rejected"] = r.stats.joints_rejected;
  j["cka_computations"] = r.stats.cka_computations;
  j["degenerate_scores"] = r.stats.degenerate_scores;
  j["stitches"] = r.stats.stitches;
  j["joint_evaluation_bound"] = joint_evaluation_bound(r.stats.starting_fragments, cfg.span, cfg.max_fragments);
  j["stitchnets"] = r.entries.size();
  j["sample_indices"] = r.sample_indices;
  auto& em = j["emissions"] = nlohmann::ordered_json::array();
  for (const auto& e : r.entries) em.push_back({{"id", e.net.id()}, {"joints_evaluated", e.joints_evaluated_at_emission}});
  return j;
}

// Generation output directory: stitchnets/<id>.snet, results.csv, stats.json.
inline void write_generation(const GenerationResult& r, const GenerationConfig& cfg,
                             const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "stitchnets");
  for (const auto& p : std::filesystem::directory_iterator(dir / "stitchnets"))
    if (p.path().extension() == ".snet") std::filesystem::remove(p.path());
  for (const auto& e : r.entries) save_stitchnet(e.net, dir / "stitchnets" / (e.net.id() + ".snet"));
  detail::write_text(dir / "results.csv", results_csv(&r));
  detail::write_text(dir / "stats.json", stats_json(r, cfg).dump(2) + "\n");
}

// Reads a generation directory back: entries in results.csv order, with
// emission costs and M taken from stats.json.
inline GenerationResult load_generation(const std::filesystem::path& dir) {
  const std::string text = detail::read_file(dir / "results.csv");
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) throw ParseError("unexpected results.csv header", 0);
  GenerationResult r;
  std::map<std::string, std::size_t> joints;
  const auto stats_path = dir / "stats.json";
  if (std::filesystem::exists(stats_path)) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(detail::read_file(stats_path));
      r.samples_per_joint = j.at("samples_M").get<std::size_t>();
      r.stats.starting_fragments = j.at("starting_fragments").get<std::size_t>();
      r.stats.candidates_evaluated = j.at("candidates_evaluated").get<std::size_t>();
      r.stats.joints_rejected = j.at("joints_rejected").get<std::size_t>();
      r.stats.cka_computations = j.at("cka_computations").get<std::size_t>();
      r.stats.degenerate_scores = j.at("degenerate_scores").get<std::size_t>();
      r.stats.stitches = j.at("stitches").get<std::size_t>();
      r.sample_indices = j.at("sample_indices").get<std::vector<std::size_t>>();
      for (const auto& e : j.at("emissions")) joints[e.at("id").get<std::string>()] = e.at("joints_evaluated").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("stats.json: ") + e.what(), 0);
    }
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto id = line.substr(0, line.find(','));
    GenerationEntry e;
    e.net = load_stitchnet(dir / "stitchnets" / (id + ".snet"));
    e.score = e.net.score();
    if (auto it = joints.find(id); it != joints.end()) e.joints_evaluated_at_emission = it->second;
    r.entries.push_back(std::move(e));
  }
  return r;
}

}  // namespace stitchkit
