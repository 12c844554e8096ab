#pragma once

// Command-line front end. run_cli() is the whole program minus argv
// handling, so tests can drive it with string vectors.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data/format
// error, 3 numeric failure.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stitchkit/stitchkit.hpp"

namespace stitchkit {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

namespace cli {

namespace fs = std::filesystem;

struct DataOptions {
  std::size_t classes = 8;
  std::size_t per_class = 200;
  std::size_t image_size = 16;
  double train_fraction = 0.8;
  fs::path out = "data";
};

struct ZooOptions {
  fs::path train = "data/train.snet";
  fs::path test = "data/test.snet";
  std::vector<std::string> archs = zoo_arch_names();
  std::size_t epochs = 10;
  double lr = 0.001;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  fs::path out = "zoo";
};

struct PoolOptions {
  fs::path zoo;
  std::vector<fs::path> networks;
  std::string granularity = "single_cut";
  fs::path out = "pool.txt";
};

struct GenerateOptions {
  fs::path pool = "pool.txt";
  fs::path data = "data/train.snet";
  GenerationConfig cfg;
  std::string strategy = "top_cka";
  bool with_inference = false;
  fs::path out = "generation";
};

struct EvalOptions {
  std::vector<fs::path> models;
  fs::path results;
  fs::path data = "data/test.snet";
  std::string label_map = "identity";
  fs::path out;
};

struct EnsembleOptions {
  fs::path results = "generation";
  fs::path data = "data/test.snet";
  std::string label_map = "superclass";
  double cka_min = 0.8;
  std::size_t k = 10;
  fs::path out;
};

struct ReportOptions {
  fs::path results = "generation";
  fs::path pool;
  fs::path data = "data/test.snet";
  fs::path train;
  std::string label_map = "superclass";
  double cka_min = 0.8;
  std::size_t k = 10;
  std::size_t finetune_budget = 320;
  fs::path out = "report";
};

inline LabelMap resolve_label_map(const std::string& spec, const Dataset& d) {
  if (spec == "identity") return LabelMap::identity(d.num_classes(), d.class_names);
  if (spec == "superclass") {
    if (d.num_classes() != 8) throw ConfigError("superclass map needs the 8-class task");
    return superclass_map();
  }
  return load_label_map(spec);
}

inline CandidateStrategy parse_strategy(const std::string& s) {
  if (s == "top_cka") return CandidateStrategy::TopCka;
  if (s == "fewest_params") return CandidateStrategy::FewestParams;
  throw ConfigError("unknown strategy '" + s + "' (top_cka or fewest_params)");
}

inline std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

inline void make_data(const DataOptions& o, std::uint64_t seed, std::ostream& out) {
  if (o.classes < 2) throw ConfigError("--classes must be >= 2");
  if (o.per_class < 1 || o.image_size < 4) throw ConfigError("--per-class must be >= 1 and --image-size >= 4");
  if (!(o.train_fraction > 0.0 && o.train_fraction < 1.0)) throw ConfigError("--train-fraction must lie in (0, 1)");
  const Dataset d = make_synthetic_dataset(o.classes, o.per_class, o.image_size, seed);
  const auto split = train_test_split(d, o.train_fraction);
  save_dataset(split.train, o.out / "train.snet");
  save_dataset(split.test, o.out / "test.snet");
  out << "wrote " << split.train.size() << " train / " << split.test.size() << " test samples to " << o.out.string()
      << "\n";
}

inline std::vector<Network> train_zoo(const ZooOptions& o, std::uint64_t seed, std::ostream& out) {
  const Dataset train = load_dataset(o.train);
  const Dataset test = load_dataset(o.test);
  const Shape input(train.images.shape().begin() + 1, train.images.shape().end());
  const auto id = LabelMap::identity(train.num_classes(), train.class_names);
  std::vector<Network> nets;
  for (std::size_t i = 0; i < o.archs.size(); ++i) {
    const std::string& name = o.archs[i];
    Network init = build_network(zoo_arch(name), input, train.class_names, name, derive_seed(seed, 2 * i));
    TrainConfig cfg{o.epochs, o.lr, o.momentum, o.batch_size, derive_seed(seed, 2 * i + 1)};
    auto trained = train_network(std::move(init), train, cfg);
    save_network(trained.network, o.out / (name + ".snet"));
    const auto r = evaluate(trained.network, test, id);
    out << name << ": " << parameter_count(trained.network) << " params, test accuracy " << fixed(r.accuracy);
    if (!trained.epoch_loss.empty()) out << ", final loss " << fixed(trained.epoch_loss.back());
    out << "\n";
    nets.push_back(std::move(trained.network));
  }
  return nets;
}

inline void build_pool(const PoolOptions& o, std::ostream& out) {
  PoolManifest m;
  if (o.granularity == "single_cut") m.granularity = Granularity::SingleCut;
  else if (o.granularity == "all_spans") m.granularity = Granularity::AllSpans;
  else throw ConfigError("unknown granularity '" + o.granularity + "'");
  std::vector<fs::path> paths = o.networks;
  if (!o.zoo.empty()) {
    if (!fs::is_directory(o.zoo)) throw IoError("zoo directory '" + o.zoo.string() + "' not found");
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(o.zoo))
      if (e.path().extension() == ".snet" && snet_kind(e.path()) == "network") found.push_back(e.path());
    std::sort(found.begin(), found.end());
    paths.insert(paths.end(), found.begin(), found.end());
  }
  if (paths.empty()) throw ConfigError("no networks given (use --zoo or --network)");
  const fs::path base = o.out.has_parent_path() ? o.out.parent_path() : fs::path(".");
  std::vector<Network> nets;
  for (const auto& p : paths) {
    nets.push_back(load_network(p));
    m.networks.push_back(fs::relative(fs::absolute(p), fs::absolute(base)));
  }
  const FragmentPool pool(std::move(nets), m.granularity);
  save_manifest(m, o.out);
  out << "pool: " << pool.networks().size() << " networks, " << pool.fragments().size() << " fragments ("
      << pool.count(FragmentKind::Starting) << " starting, " << pool.count(FragmentKind::Middle) << " middle, "
      << pool.count(FragmentKind::Terminating) << " terminating, " << pool.count(FragmentKind::Whole)
      << " whole)\n";
}

inline GenerationResult run_generate(GenerateOptions o, std::ostream& out) {
  o.cfg.strategy = parse_strategy(o.strategy);
  const FragmentPool pool = load_pool(o.pool);
  const Dataset d = load_dataset(o.data);
  const GenerationResult r = o.with_inference ? generate_with_inference(pool, d, o.cfg) : generate(pool, d, o.cfg);
  write_generation(r, o.cfg, o.out);
  if (o.with_inference) {
    std::string csv = "stitchnet_id,sample_index,predicted_class,probability\n";
    for (const auto& e : r.entries) {
      const auto pred = argmax_rows(e.task_outputs);
      for (std::size_t i = 0; i < pred.size(); ++i) {
        csv += e.net.id() + "," + std::to_string(r.sample_indices[i]) + "," + std::to_string(pred[i]) + "," +
               detail::format_double(e.task_outputs.at(i, pred[i])) + "\n";
      }
    }
    detail::write_file(o.out / "predictions.csv", csv);
  }
  out << "generated " << r.entries.size() << " StitchNets from " << r.stats.starting_fragments
      << " starting fragments: " << r.stats.candidates_evaluated << " joints evaluated, " << r.stats.joints_rejected
      << " rejected, " << r.stats.cka_computations << " CKA scores, wall time "
      << fixed(r.stats.wall_time_seconds, 3) << " s\n";
  for (const auto& e : r.entries) {
    out << "  " << e.net.id() << " score " << fixed(e.score) << " params " << e.net.parameter_count() << " "
        << provenance_string(e.net) << "\n";
  }
  return r;
}

inline void print_reports(const std::vector<EvalReport>& reports, std::ostream& out) {
  for (const auto& r : reports) {
    out << r.model_id << " (" << r.kind << "): accuracy " << fixed(r.accuracy) << " (" << r.correct << "/" << r.total
        << "), params " << r.n_params << ", overall CKA " << fixed(r.overall_cka) << "\n";
  }
}

inline std::vector<EvalReport> run_evaluate(const EvalOptions& o, std::ostream& out) {
  const Dataset d = load_dataset(o.data);
  const LabelMap map = resolve_label_map(o.label_map, d);
  std::vector<EvalReport> reports;
  for (const auto& p : o.models) {
    const std::string kind = snet_kind(p);
    if (kind == "network") reports.push_back(evaluate(load_network(p), d, map));
    else if (kind == "stitchnet") reports.push_back(evaluate(load_stitchnet(p), d, map));
    else throw ConfigError("'" + p.string() + "' holds a " + kind + ", not a model");
  }
  if (!o.results.empty()) {
    for (const auto& e : load_generation(o.results).entries) reports.push_back(evaluate(e.net, d, map));
  }
  if (reports.empty()) throw ConfigError("nothing to evaluate (use --model or --results)");
  print_reports(reports, out);
  if (!o.out.empty()) detail::write_file(o.out, accuracy_csv(reports));
  return reports;
}

inline std::vector<EnsembleSweepPoint> run_ensemble(const EnsembleOptions& o, std::ostream& out) {
  const Dataset d = load_dataset(o.data);
  const LabelMap map = resolve_label_map(o.label_map, d);
  const GenerationResult r = load_generation(o.results);
  const auto members = select_ensemble_pool(r, o.cka_min, o.k);
  const auto sweep = ensemble_sweep(members, d, map);
  out << members.size() << " StitchNets with score > " << o.cka_min << "\n";
  for (const auto& p : sweep) {
    out << "  ensemble of " << p.size << ": accuracy " << fixed(p.accuracy) << " (min score " << fixed(p.min_score)
        << ")\n";
  }
  if (!o.out.empty()) detail::write_file(o.out, sweep_csv(sweep));
  return sweep;
}

inline void run_report(const ReportOptions& o, std::uint64_t seed, std::ostream& out) {
  GenerationResult r;
  const bool have_results = !o.results.empty() && fs::exists(o.results / "results.csv");
  if (have_results) r = load_generation(o.results);
  std::vector<EvalReport> evals;
  std::vector<LearningCurve> curves;
  std::vector<EnsembleSweepPoint> sweep;
  const bool need_data = !r.entries.empty() || !o.pool.empty();
  if (need_data) {
    const Dataset test = load_dataset(o.data);
    const LabelMap map = resolve_label_map(o.label_map, test);
    std::vector<EvalReport> stitch_evals;
    for (const auto& e : r.entries) stitch_evals.push_back(evaluate(e.net, test, map));
    if (!o.pool.empty()) {
      const FragmentPool pool = load_pool(o.pool);
      for (const auto& n : pool.networks()) evals.push_back(evaluate(n, test, map));
      if (!o.train.empty() && o.finetune_budget > 0) {
        const Dataset train = load_dataset(o.train);
        for (std::size_t i = 0; i < pool.networks().size(); ++i) {
          const auto& n = pool.networks()[i];
          FinetuneConfig fc;
          fc.samples_budget = o.finetune_budget;
          fc.seed = derive_seed(seed, 100 + i);
          curves.push_back({"finetune:" + n.id, finetune_last_layer(n, train, test, map, fc).curve});
        }
      }
    }
    evals.insert(evals.end(), stitch_evals.begin(), stitch_evals.end());
    if (!r.entries.empty()) {
      curves.insert(curves.begin(), generation_curve(r, stitch_evals));
      sweep = ensemble_sweep(select_ensemble_pool(r, o.cka_min, o.k), test, map);
    }
  }
  emit_report(have_results ? &r : nullptr, evals, o.out, curves, sweep);
  out << "report: " << evals.size() << " evaluations, " << curves.size() << " curves, " << sweep.size()
      << " ensemble sizes written to " << o.out.string() << "\n";
}

inline void add_generation_flags(CLI::App* c, GenerationConfig& g, std::string& strategy) {
  c->add_option("-K,--span", g.span, "candidates tried per expansion")->check(CLI::PositiveNumber);
  c->add_option("-T,--threshold", g.threshold, "keep a joint iff score * CKA > T")->check(CLI::Range(0.0, 1.0));
  c->add_option("-L,--max-fragments", g.max_fragments, "maximum fragments per StitchNet")->check(CLI::PositiveNumber);
  c->add_option("-M,--samples", g.samples, "stitching samples drawn from the dataset")->check(CLI::Range(2, 1 << 30));
  c->add_option("--strategy", strategy, "candidate ranking: top_cka or fewest_params")
      ->check(CLI::IsMember({"top_cka", "fewest_params"}));
  c->add_option("--start", g.starting_ids, "starting fragment or network ids (default: all)");
  c->add_option("--ridge", g.ridge_factor, "projection ridge, relative to the mean feature energy")
      ->check(CLI::NonNegativeNumber);
  c->add_flag("--affine", g.affine, "fit an intercept and fold it into the fused bias");
}

}  // namespace cli

inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  CLI::App app{"stitchkit: compose new networks from fragments of trained ones"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  std::uint64_t seed = 0;
  unsigned threads = 1;
  auto add_common = [&](CLI::App* c) {
    c->add_option("--seed", seed, "random seed (STITCHKIT_SEED overrides)");
    c->add_option("--threads", threads, "maximum worker threads")->check(CLI::PositiveNumber);
  };

  cli::DataOptions data_opt;
  auto* make_data = app.add_subcommand("make-data", "write the synthetic train/test datasets");
  make_data->add_option("--classes", data_opt.classes, "number of classes");
  make_data->add_option("--per-class", data_opt.per_class, "samples per class");
  make_data->add_option("--image-size", data_opt.image_size, "image height and width");
  make_data->add_option("--train-fraction", data_opt.train_fraction, "fraction of each class used for training");
  make_data->add_option("--out", data_opt.out, "output directory");
  add_common(make_data);

  cli::ZooOptions zoo_opt;
  auto* train_zoo = app.add_subcommand("train-zoo", "train the zoo networks");
  train_zoo->add_option("--train", zoo_opt.train, "training dataset");
  train_zoo->add_option("--test", zoo_opt.test, "test dataset (for the accuracy printout)");
  train_zoo->add_option("--arch", zoo_opt.archs, "architectures (cnn_a, cnn_b, mlp_c)")
      ->check(CLI::IsMember(zoo_arch_names()));
  train_zoo->add_option("--epochs", zoo_opt.epochs, "training epochs");
  train_zoo->add_option("--lr", zoo_opt.lr, "learning rate");
  train_zoo->add_option("--momentum", zoo_opt.momentum, "SGD momentum");
  train_zoo->add_option("--batch-size", zoo_opt.batch_size, "minibatch size")->check(CLI::PositiveNumber);
  train_zoo->add_option("--out", zoo_opt.out, "output directory");
  add_common(train_zoo);

  cli::PoolOptions pool_opt;
  auto* build_pool = app.add_subcommand("build-pool", "write a pool manifest");
  build_pool->add_option("--zoo", pool_opt.zoo, "directory whose network .snet files join the pool");
  build_pool->add_option("--network", pool_opt.networks, "network files to add");
  build_pool->add_option("--granularity", pool_opt.granularity, "single_cut or all_spans")
      ->check(CLI::IsMember({"single_cut", "all_spans"}));
  build_pool->add_option("--out", pool_opt.out, "manifest path");

  cli::GenerateOptions gen_opt;
  auto* generate_cmd = app.add_subcommand("generate", "generate StitchNets from a pool");
  generate_cmd->add_option("--pool", gen_opt.pool, "pool manifest");
  generate_cmd->add_option("--data", gen_opt.data, "dataset the stitching samples are drawn from");
  cli::add_generation_flags(generate_cmd, gen_opt.cfg, gen_opt.strategy);
  generate_cmd->add_flag("--with-inference", gen_opt.with_inference,
                         "also write predictions on the stitching samples");
  generate_cmd->add_option("--out", gen_opt.out, "output directory");
  add_common(generate_cmd);

  cli::EvalOptions eval_opt;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "accuracy of networks or StitchNets");
  evaluate_cmd->add_option("--model", eval_opt.models, "network or StitchNet files");
  evaluate_cmd->add_option("--results", eval_opt.results, "generation directory to evaluate");
  evaluate_cmd->add_option("--data", eval_opt.data, "evaluation dataset");
  evaluate_cmd->add_option("--label-map", eval_opt.label_map, "identity, superclass or a label map file");
  evaluate_cmd->add_option("--out", eval_opt.out, "accuracy CSV to write");

  cli::EnsembleOptions ens_opt;
  auto* ensemble_cmd = app.add_subcommand("ensemble", "probability-averaging ensembles of StitchNets");
  ensemble_cmd->add_option("--results", ens_opt.results, "generation directory");
  ensemble_cmd->add_option("--data", ens_opt.data, "evaluation dataset");
  ensemble_cmd->add_option("--label-map", ens_opt.label_map, "identity, superclass or a label map file");
  ensemble_cmd->add_option("--cka-min", ens_opt.cka_min, "keep StitchNets with score above this");
  ensemble_cmd->add_option("-k,--max-models", ens_opt.k, "largest ensemble size")->check(CLI::PositiveNumber);
  ensemble_cmd->add_option("--out", ens_opt.out, "ensemble sweep CSV to write");

  cli::ReportOptions rep_opt;
  auto* report_cmd = app.add_subcommand("report", "write all report CSVs");
  report_cmd->add_option("--results", rep_opt.results, "generation directory (may be absent)");
  report_cmd->add_option("--pool", rep_opt.pool, "pool manifest, to include source networks");
  report_cmd->add_option("--data", rep_opt.data, "evaluation dataset");
  report_cmd->add_option("--train", rep_opt.train, "training dataset, enables fine-tuning curves");
  report_cmd->add_option("--label-map", rep_opt.label_map, "identity, superclass or a label map file");
  report_cmd->add_option("--cka-min", rep_opt.cka_min, "ensemble score cutoff");
  report_cmd->add_option("-k,--max-models", rep_opt.k, "largest ensemble size")->check(CLI::PositiveNumber);
  report_cmd->add_option("--finetune-budget", rep_opt.finetune_budget, "samples for each fine-tuning curve");
  report_cmd->add_option("--out", rep_opt.out, "output directory");
  add_common(report_cmd);

  fs::path demo_out = "demo";
  cli::DataOptions demo_data;
  cli::ZooOptions demo_zoo;
  cli::GenerateOptions demo_gen;
  std::size_t demo_budget = 320;
  auto* demo = app.add_subcommand("demo", "run the whole pipeline: data, zoo, pool, generation, report");
  demo->add_option("--out", demo_out, "output directory");
  demo->add_option("--per-class", demo_data.per_class, "samples per class");
  demo->add_option("--epochs", demo_zoo.epochs, "zoo training epochs");
  cli::add_generation_flags(demo, demo_gen.cfg, demo_gen.strategy);
  demo->add_option("--finetune-budget", demo_budget, "samples for each fine-tuning curve");
  add_common(demo);

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  if (const char* env = std::getenv("STITCHKIT_SEED")) {
    try {
      std::size_t used = 0;
      seed = std::stoull(env, &used);
      if (env[used] != '\0') throw std::invalid_argument(env);
    } catch (const std::exception&) {
      err << "error: STITCHKIT_SEED must be an unsigned integer\n";
      return kExitUsage;
    }
  }

  try {
    if (*make_data) {
      cli::make_data(data_opt, seed, out);
    } else if (*train_zoo) {
      cli::train_zoo(zoo_opt, seed, out);
    } else if (*build_pool) {
      cli::build_pool(pool_opt, out);
    } else if (*generate_cmd) {
      gen_opt.cfg.seed = seed;
      gen_opt.cfg.threads = threads;
      cli::run_generate(gen_opt, out);
    } else if (*evaluate_cmd) {
      cli::run_evaluate(eval_opt, out);
    } else if (*ensemble_cmd) {
      cli::run_ensemble(ens_opt, out);
    } else if (*report_cmd) {
      cli::run_report(rep_opt, seed, out);
    } else if (*demo) {
      demo_data.out = demo_out / "data";
      cli::make_data(demo_data, seed, out);
      demo_zoo.train = demo_data.out / "train.snet";
      demo_zoo.test = demo_data.out / "test.snet";
      demo_zoo.out = demo_out / "zoo";
      cli::train_zoo(demo_zoo, seed, out);
      cli::PoolOptions p;
      p.zoo = demo_zoo.out;
      p.out = demo_out / "pool.txt";
      cli::build_pool(p, out);
      demo_gen.pool = p.out;
      demo_gen.data = demo_zoo.train;
      demo_gen.out = demo_out / "generation";
      demo_gen.cfg.seed = seed;
      demo_gen.cfg.threads = threads;
      const auto r = cli::run_generate(demo_gen, out);
      cli::ReportOptions rep;
      rep.results = demo_gen.out;
      rep.pool = p.out;
      rep.data = demo_zoo.test;
      rep.train = demo_zoo.train;
      rep.finetune_budget = demo_budget;
      rep.out = demo_out / "report";
      cli::run_report(rep, seed, out);
      if (!r.entries.empty()) {
        cli::EvalOptions ev;
        ev.results = demo_gen.out;
        ev.data = demo_zoo.test;
        ev.label_map = "superclass";
        cli::run_evaluate(ev, out);
      }
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace stitchkit
