// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "zslpc/dataset_cache.hpp"
#include "zslpc/encoder.hpp"
#include "zslpc/error.hpp"
#include "zslpc/evaluation.hpp"
#include "zslpc/semantic_embeddings.hpp"
#include "zslpc/split_manifest.hpp"
#include "zslpc/training.hpp"
#include "zslpc/zsl_inference.hpp"

namespace zslpc::cli {

struct RunConfig {
  std::string subcommand;
  std::string config_file;
  std::string dataset = "modelnet10";
  std::string data_root;
  std::string cache;
  std::string vectors_w2v;
  std::string vectors_glove;
  std::string checkpoint;
  std::string out = ".";
  std::string encoder = "pointnet";
  std::string pooling = "max";
  std::string semantics = "w2v";
  std::string unseen;
  int T = 0;  // 0 selects T = S
  std::uint64_t seed = 0;
  int epochs = 200;
  double lr = 1e-3;
  int batch_size = 16;
  int points = kDefaultPointCount;
  bool augment = false;
  std::vector<int> t_values = default_t_grid();
  std::vector<std::string> inputs;
};

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"subcommand", c.subcommand},
          {"config", c.config_file},
          {"dataset", c.dataset},
          {"data-root", c.data_root},
          {"cache", c.cache},
          {"vectors-w2v", c.vectors_w2v},
          {"vectors-glove", c.vectors_glove},
          {"checkpoint", c.checkpoint},
          {"out", c.out},
          {"encoder", c.encoder},
          {"pooling", c.pooling},
          {"semantics", c.semantics},
          {"unseen", c.unseen},
          {"T", c.T},
          {"seed", c.seed},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"batch-size", c.batch_size},
          {"points", c.points},
          {"augment", c.augment},
          {"t-values", c.t_values},
          {"inputs", c.inputs}};
}

namespace detail {

inline std::filesystem::path manifest_path_for(const std::string& cache) { return cache + ".manifest.json"; }

inline void require(const std::string& value, const char* flag, const std::string& subcommand) {
  if (value.empty()) throw UsageError(subcommand + " requires " + flag);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

// Flat JSON object -> "--key value" arguments; booleans become bare flags,
// arrays repeat the key per element. Keys in `explicit_flags` are skipped so
// command-line values replace config values instead of joining them.
inline std::vector<std::string> config_arguments(const std::filesystem::path& path,
                                                 const std::set<std::string>& explicit_flags) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file must hold a flat JSON object");
  std::vector<std::string> args;
  for (const auto& [key, value] : j.items()) {
    if (key == "config" || key == "subcommand") continue;
    const std::string flag = "--" + key;
    if (explicit_flags.count(flag)) continue;
    auto scalar = [&](const nlohmann::json& v) -> std::string {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_number() || v.is_boolean()) return v.dump();
      throw UsageError("config key '" + key + "' must be a scalar or a flat array");
    };
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      for (const auto& v : value) {
        args.push_back(flag);
        args.push_back(scalar(v));
      }
    } else {
      args.push_back(flag);
      args.push_back(scalar(value));
    }
  }
  return args;
}

struct Context {
  RunConfig cfg;
  nlohmann::json effective;
  std::ostream& out;
};

struct LoadedData {
  DatasetCache cache;
  SplitManifest manifest;
};

inline LoadedData load_data(const RunConfig& cfg) {
  require(cfg.cache, "--cache", cfg.subcommand);
  LoadedData d{read_cache(cfg.cache), read_manifest(manifest_path_for(cfg.cache))};
  check_cache_matches(d.cache, d.manifest);
  return d;
}

struct Tables {
  SemanticEmbeddingTable seen;
  SemanticEmbeddingTable unseen;
};

inline SemanticEmbeddingTable table_for(SemanticMode mode, const RunConfig& cfg, const std::vector<std::string>& names,
                                        std::map<SemanticMode, WordVectorStore>& stores,
                                        const std::vector<std::string>& vocab_names) {
  auto store = [&](SemanticMode m) -> const WordVectorStore& {
    auto it = stores.find(m);
    if (it != stores.end()) return it->second;
    const auto& path = m == SemanticMode::w2v ? cfg.vectors_w2v : cfg.vectors_glove;
    require(path, m == SemanticMode::w2v ? "--vectors-w2v" : "--vectors-glove", cfg.subcommand);
    const auto vocab = vocabulary_for(vocab_names);
    return stores.emplace(m, load_word_vectors(path, m, kWordVectorDim, &vocab)).first->second;
  };
  if (mode == SemanticMode::conc) {
    return fuse_tables(build_table(store(SemanticMode::w2v), names), build_table(store(SemanticMode::glove), names));
  }
  return build_table(store(mode), names);
}

// The basic head ranks with w2v vectors in the ConSE step.
inline Tables load_tables(SemanticMode mode, const RunConfig& cfg, const SplitManifest& manifest) {
  const SemanticMode table_mode = mode == SemanticMode::basic ? SemanticMode::w2v : mode;
  std::map<SemanticMode, WordVectorStore> stores;
  const auto names = manifest.class_table();
  Tables t;
  t.seen = table_for(table_mode, cfg, manifest.seen_classes, stores, names);
  t.unseen = table_for(table_mode, cfg, manifest.unseen_classes, stores, names);
  return t;
}

inline std::string run_tag(const SplitManifest& m, const Checkpoint& ck) {
  return fmt::format("{}_{}_{}_{}", m.dataset, to_string(ck.encoder.variant), to_string(ck.encoder.pooling),
                     to_string(ck.train.semantics));
}

inline Checkpoint load_checkpoint_for(const RunConfig& cfg) {
  require(cfg.checkpoint, "--checkpoint", cfg.subcommand);
  return load_checkpoint(cfg.checkpoint);
}

inline void check_unseen_flag(const RunConfig& cfg, const SplitManifest& manifest) {
  if (cfg.unseen.empty()) return;
  const auto id = protocol_by_name(cfg.unseen).id;
  if (id != manifest.dataset) {
    throw UsageError("--unseen " + cfg.unseen + " does not match the cache protocol " + manifest.dataset);
  }
}

inline int resolve_T(const RunConfig& cfg, const SplitManifest& manifest) {
  return cfg.T == 0 ? static_cast<int>(manifest.seen_classes.size()) : cfg.T;
}

// ---------------------------------------------------------------- subcommands

inline void do_ingest(Context& ctx) {
  const auto& cfg = ctx.cfg;
  require(cfg.data_root, "--data-root (or ZSL_PC_DATA)", cfg.subcommand);
  require(cfg.cache, "--cache", cfg.subcommand);
  if (cfg.points < 1) throw UsageError("--points must be positive");
  auto manifest = build_split_manifest(scan_layout(cfg.data_root), cfg.dataset, cfg.seed);
  manifest.config = ctx.effective;
  auto samples = ingest_records(cfg.data_root, manifest, cfg.points, cfg.seed);
  write_cache(std::move(samples), manifest, cfg.cache);
  write_manifest(manifest, manifest_path_for(cfg.cache));
  ctx.out << fmt::format("ingested {}: {} train-seen, {} test-seen, {} test-unseen, {} excluded\n", manifest.dataset,
                         manifest.count(SampleRole::train_seen), manifest.count(SampleRole::test_seen),
                         manifest.count(SampleRole::test_unseen), manifest.excluded.size());
}

inline void do_train(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto data = load_data(cfg);
  TrainConfig train;
  train.learning_rate = cfg.lr;
  train.epochs = cfg.epochs;
  train.batch_size = cfg.batch_size;
  train.seed = cfg.seed;
  train.semantics = semantic_mode_from_string(cfg.semantics);
  train.augment_rotation = cfg.augment;
  EncoderConfig encoder;
  encoder.variant = encoder_variant_from_string(cfg.encoder);
  encoder.pooling = pooling_from_string(cfg.pooling);
  std::optional<Tables> tables;
  if (train.semantics != SemanticMode::basic) tables = load_tables(train.semantics, cfg, data.manifest);

  std::filesystem::create_directories(cfg.out);
  const auto tag = fmt::format("{}_{}_{}_{}", data.manifest.dataset, cfg.encoder, cfg.pooling, cfg.semantics);
  const auto log_path = std::filesystem::path(cfg.out) / ("loss_" + tag + ".csv");
  std::ofstream log(log_path);
  if (!log) throw DataError("cannot write " + log_path.string());
  log << "# config: " << ctx.effective.dump() << "\nepoch,loss,train_accuracy,learning_rate\n";
  auto ck = train_model(data.cache, data.manifest, train, encoder, tables ? &tables->seen : nullptr,
                        [&](const EpochStats& s) {
                          log << fmt::format("{},{:.9g},{:.4f},{:.9g}\n", s.epoch, s.mean_loss, s.train_accuracy,
                                             s.learning_rate)
                              << std::flush;
                          ctx.out << fmt::format("epoch {:4d}  loss {:.5f}  train-acc {:.2f}%\n", s.epoch, s.mean_loss,
                                                 s.train_accuracy);
                        });
  ck.run_config = ctx.effective;
  const auto ck_path =
      cfg.checkpoint.empty() ? std::filesystem::path(cfg.out) / (tag + ".zck") : std::filesystem::path(cfg.checkpoint);
  save_checkpoint(ck, ck_path);
  ctx.out << "checkpoint written to " << ck_path.string() << '\n';
}

inline void do_eval_seen(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto data = load_data(cfg);
  const auto ck = load_checkpoint_for(cfg);
  std::optional<Tables> tables;
  if (ck.encoder.head == HeadKind::semantic) tables = load_tables(ck.train.semantics, cfg, data.manifest);
  const double top1 = seen_top1(ck, data.cache, data.manifest, tables ? &tables->seen : nullptr);
  std::filesystem::create_directories(cfg.out);
  nlohmann::json doc = {{"config", ctx.effective},
                        {"protocol", data.manifest.dataset},
                        {"encoder", to_string(ck.encoder.variant)},
                        {"pooling", to_string(ck.encoder.pooling)},
                        {"semantics", to_string(ck.train.semantics)},
                        {"seen_top1", top1},
                        {"samples", data.manifest.count(SampleRole::test_seen)}};
  write_text(std::filesystem::path(cfg.out) / ("seen_" + run_tag(data.manifest, ck) + ".json"), doc.dump(2) + "\n");
  ctx.out << fmt::format("seen top-1: {:.1f}%\n", top1);
}

inline void do_eval_zsl(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto data = load_data(cfg);
  check_unseen_flag(cfg, data.manifest);
  const auto ck = load_checkpoint_for(cfg);
  const auto tables = load_tables(ck.train.semantics, cfg, data.manifest);
  const int T = resolve_T(cfg, data.manifest);
  const auto preds = classify_unseen_batch(data.cache, data.manifest, ck, tables.seen, tables.unseen, T);
  const auto report = make_report(preds, data.manifest, std::string(to_string(ck.encoder.variant)),
                                  std::string(to_string(ck.encoder.pooling)), ck.train.semantics);
  std::filesystem::create_directories(cfg.out);
  const auto tag = run_tag(data.manifest, ck);
  std::ostringstream csv;
  write_predictions_csv(csv, preds, data.manifest, ctx.effective);
  write_text(std::filesystem::path(cfg.out) / ("predictions_" + tag + ".csv"), csv.str());
  auto doc = to_json(report);
  doc["config"] = ctx.effective;
  write_text(std::filesystem::path(cfg.out) / ("eval_" + tag + ".json"), doc.dump(2) + "\n");
  write_text(std::filesystem::path(cfg.out) / ("perclass_" + tag + ".csv"), per_class_csv(report, ctx.effective));
  ctx.out << fmt::format("unseen top-1: {:.1f}% (random {:.1f}%, T={}, {} samples)\n", report.top1, report.random, T,
                         report.samples);
}

inline void do_sweep_t(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto data = load_data(cfg);
  check_unseen_flag(cfg, data.manifest);
  const auto ck = load_checkpoint_for(cfg);
  const auto tables = load_tables(ck.train.semantics, cfg, data.manifest);
  const auto sweep = t_sweep(ck, tables.seen, tables.unseen, data.cache, data.manifest, cfg.t_values);
  std::filesystem::create_directories(cfg.out);
  write_text(std::filesystem::path(cfg.out) / ("sweep_" + run_tag(data.manifest, ck) + ".csv"),
             sweep_csv(sweep, ctx.effective));
  for (const auto& s : sweep) ctx.out << fmt::format("T={:2d}  {:.1f}%\n", s.T, s.accuracy);
}

inline std::vector<std::filesystem::path> report_inputs(const RunConfig& cfg) {
  std::vector<std::filesystem::path> files;
  const auto inputs = cfg.inputs.empty() ? std::vector<std::string>{cfg.out} : cfg.inputs;
  for (const auto& in : inputs) {
    if (std::filesystem::is_directory(in)) {
      for (const auto& e : std::filesystem::directory_iterator(in)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.starts_with("eval_") && name.ends_with(".json")) files.push_back(e.path());
      }
    } else if (std::filesystem::is_regular_file(in)) {
      files.emplace_back(in);
    } else {
      throw DataError("report input not found: " + in);
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline void do_report(Context& ctx) {
  const auto& cfg = ctx.cfg;
  std::vector<EvaluationReport> reports;
  for (const auto& f : report_inputs(cfg)) {
    std::ifstream in(f);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(f.string() + ": " + e.what());
    }
    reports.push_back(report_from_json(j));
  }
  if (reports.empty()) throw DataError("no evaluation reports found");
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<EvaluationReport>> groups;
  for (const auto& r : reports) groups[{r.protocol, r.encoder, r.pooling}].push_back(r);
  std::filesystem::create_directories(cfg.out);
  const std::filesystem::path out(cfg.out);
  for (const auto& [key, group] : groups) {
    const auto& [protocol, encoder, pooling] = key;
    for (const auto format : {ReportFormat::csv, ReportFormat::json}) {
      write_text(out / report_file_name(protocol, encoder, pooling, format), emit_report(group, format, ctx.effective));
    }
  }
  write_text(out / "summary.csv", emit_report(reports, ReportFormat::csv, ctx.effective));
  write_text(out / "summary.json", emit_report(reports, ReportFormat::json, ctx.effective));
  ctx.out << emit_report(reports, ReportFormat::csv);
}

}  // namespace detail

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name. Returns 0, or 2/3/4 for usage/data/numeric failures.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunConfig cfg;
  CLI::App app{"Zero-shot point cloud classification: ingest, train, evaluate, report", "zslpc"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();

  app.add_option("--config", cfg.config_file, "Flat JSON file of flag values; explicit flags override it");
  app.add_option("--dataset", cfg.dataset, "Split protocol")
      ->check(CLI::IsMember({"modelnet10", "modelnet", "mcgill", "shrec2015", "shrec"}));
  app.add_option("--data-root", cfg.data_root, "Dataset root directory")->envname("ZSL_PC_DATA");
  app.add_option("--cache", cfg.cache, "Point-cloud cache file (manifest stored alongside)");
  app.add_option("--vectors-w2v", cfg.vectors_w2v, "word2vec text vectors");
  app.add_option("--vectors-glove", cfg.vectors_glove, "GloVe text vectors");
  app.add_option("--checkpoint", cfg.checkpoint, "Checkpoint file");
  app.add_option("--out", cfg.out, "Output directory");
  app.add_option("--encoder", cfg.encoder, "Point encoder")->check(CLI::IsMember({"pointnet", "edgeconv"}));
  app.add_option("--pooling", cfg.pooling, "Pooling")->check(CLI::IsMember({"max", "netvlad"}));
  app.add_option("--semantics", cfg.semantics, "Semantic mode")
      ->check(CLI::IsMember({"basic", "w2v", "glove", "conc"}));
  app.add_option("--unseen", cfg.unseen, "Expected unseen protocol of the cache")
      ->check(CLI::IsMember({"modelnet10", "modelnet", "mcgill", "shrec2015", "shrec"}));
  app.add_option("--T", cfg.T, "Seen embeddings combined per sample (0 = all seen classes)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--seed", cfg.seed, "Seed for all randomness");
  app.add_option("--epochs", cfg.epochs, "Training epochs")->check(CLI::PositiveNumber);
  app.add_option("--lr", cfg.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  app.add_option("--batch-size", cfg.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  app.add_option("--points", cfg.points, "Points sampled per mesh")->check(CLI::PositiveNumber);
  app.add_flag("--augment", cfg.augment, "Random rotation about the up axis during training");
  app.add_option("--t-values", cfg.t_values, "T grid for sweep-t")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->delimiter(',');
  app.add_option("--inputs", cfg.inputs, "Evaluation JSON files or directories for report")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

  const std::vector<std::pair<std::string, void (*)(detail::Context&)>> commands = {
      {"ingest", detail::do_ingest},     {"train", detail::do_train},       {"eval-seen", detail::do_eval_seen},
      {"eval-zsl", detail::do_eval_zsl}, {"sweep-t", detail::do_sweep_t}, {"report", detail::do_report}};
  const std::map<std::string, std::string> help = {
      {"ingest", "Sample meshes into a point-cloud cache and split manifest"},
      {"train", "Train an encoder on the seen classes"},
      {"eval-seen", "Top-1 accuracy on test-seen records"},
      {"eval-zsl", "Zero-shot predictions and accuracy on test-unseen records"},
      {"sweep-t", "Zero-shot accuracy over a grid of T"},
      {"report", "Collect evaluation JSON files into report tables"}};
  for (const auto& [name, fn] : commands) app.add_subcommand(name, help.at(name));

  try {
    // Config-file values go first so explicit flags win under TakeLast.
    for (std::size_t i = 0; i < args.size(); ++i) {
      std::string path;
      if (args[i] == "--config" && i + 1 < args.size()) {
        path = args[i + 1];
      } else if (args[i].starts_with("--config=")) {
        path = args[i].substr(9);
      }
      if (!path.empty()) {
        std::set<std::string> explicit_flags;
        for (const auto& a : args) {
          if (a.starts_with("--")) explicit_flags.insert(a.substr(0, a.find('=')));
        }
        auto extra = detail::config_arguments(path, explicit_flags);
        args.insert(args.begin(), extra.begin(), extra.end());
        break;
      }
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : exit_code(ErrorKind::usage);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  }

  for (const auto& [name, fn] : commands) {
    if (!app.got_subcommand(name)) continue;
    cfg.subcommand = name;
    detail::Context ctx{cfg, to_json(cfg), out};
    try {
      fn(ctx);
      return 0;
    } catch (const Error& e) {
      err << "error: " << e.what() << '\n';
      return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
      err << "error: " << e.what() << '\n';
      return exit_code(ErrorKind::data);
    } catch (const nlohmann::json::exception& e) {
      err << "error: " << e.what() << '\n';
      return exit_code(ErrorKind::data);
    }
  }
  return exit_code(ErrorKind::usage);
}

}  // namespace zslpc::cli
