#pragma once

// The `brm` command line: train, decode, trace, eval, stats and split.
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "brm/corpus.hpp"
#include "brm/eval.hpp"
#include "brm/model_io.hpp"
#include "brm/trace.hpp"
#include "brm/training.hpp"

#ifndef BRM_VERSION
#define BRM_VERSION "0.1.0"
#endif

namespace brm::cli {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

// BRM_LOG: quiet|info|debug (or 0|1|2). Defaults to info.
inline LogLevel log_level() {
  const char* v = std::getenv("BRM_LOG");
  if (!v) return LogLevel::Info;
  const std::string s(v);
  if (s == "quiet" || s == "0") return LogLevel::Quiet;
  if (s == "debug" || s == "2") return LogLevel::Debug;
  return LogLevel::Info;
}

inline std::string read_file(const std::string& path, const char* what) {
  if (!std::filesystem::is_regular_file(path))
    throw UsageError(std::string(what) + " '" + path + "' does not exist");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(std::string("cannot read ") + what + " '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct LoadedCorpus {
  std::vector<Sentence> sentences;
  std::string hash;
};

inline LoadedCorpus read_corpus(const std::string& path, const char* what) {
  const std::string text = read_file(path, what);
  LoadedCorpus c;
  try {
    c.sentences = parse_conllu(std::string_view(text));
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path + ": " + e.what());
  }
  c.hash = hex64(fnv1a(text));
  return c;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("failed writing '" + path + "'");
}

inline nlohmann::json corpus_record(const LoadedCorpus& c) {
  return {{"fnv1a", c.hash}, {"sentences", c.sentences.size()}};
}

// ---------------------------------------------------------------- train

struct TrainFlags {
  std::string train, dev, config, out, metrics, manifest;
  std::string machine, regime, optimizer;
  int k = 0, epochs = 0, batch_size = 0, hidden = 0, embed_dim = 0, word_dim = 0;
  std::uint64_t seed = 0;
  double alpha = 0, gamma = 0, dropout = 0, stop_at = 0;
  std::string pretrained;
};

inline int cmd_train(const TrainFlags& f, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  const LogLevel level = log_level();
  nlohmann::json manifest_in;
  TrainConfig cfg;
  std::string train_path = f.train, dev_path = f.dev;
  if (!f.config.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(f.config, "config file"));
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("config '" + f.config + "' is not JSON: " + e.what());
    }
    // A run manifest carries the config under "config" and the corpora used.
    if (j.contains("config") && j.contains("corpora")) {
      manifest_in = j;
      cfg = train_config_from_json(j["config"]);
      const auto paths = j.value("paths", nlohmann::json::object());
      if (train_path.empty()) train_path = paths.value("train", "");
      if (dev_path.empty()) dev_path = paths.value("dev", "");
    } else {
      cfg = train_config_from_json(j);
    }
  }
  auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  if (given("--machine")) cfg.task = parse_task(f.machine);
  if (given("--regime")) cfg.regime = parse_regime(f.regime);
  if (given("--k")) cfg.k = f.k;
  if (given("--epochs")) cfg.epochs = f.epochs;
  if (given("--seed")) cfg.seed = f.seed;
  if (given("--alpha")) cfg.alpha = f.alpha;
  if (given("--gamma")) cfg.gamma = f.gamma;
  if (given("--batch-size")) cfg.batch_size = f.batch_size;
  if (given("--hidden")) cfg.hidden = f.hidden;
  if (given("--embed-dim")) cfg.embed_dim = f.embed_dim;
  if (given("--word-dim")) cfg.word_dim = f.word_dim;
  if (given("--dropout")) cfg.dropout = f.dropout;
  if (given("--stop-at")) cfg.stop_at = f.stop_at;
  if (given("--pretrained")) cfg.pretrained = f.pretrained;
  if (given("--optimizer")) {
    if (f.optimizer == "sgd")
      cfg.optimizer = OptimizerKind::Sgd;
    else if (f.optimizer == "adam")
      cfg.optimizer = OptimizerKind::Adam;
    else
      throw UsageError("unknown optimizer '" + f.optimizer + "'");
  }
  cfg = cfg.resolved();
  if (train_path.empty()) throw UsageError("missing training corpus (--train)");
  if (f.out.empty()) throw UsageError("missing model output path (--out)");

  const LoadedCorpus train_corpus = read_corpus(train_path, "training corpus");
  LoadedCorpus dev_corpus;
  if (!dev_path.empty()) dev_corpus = read_corpus(dev_path, "dev corpus");
  if (!manifest_in.is_null()) {
    const auto& corpora = manifest_in["corpora"];
    if (corpora.contains("train") && corpora["train"].value("fnv1a", "") != train_corpus.hash)
      throw Error("training corpus hash differs from the manifest");
    if (corpora.contains("dev") && corpora["dev"].value("fnv1a", "") != dev_corpus.hash)
      throw Error("dev corpus hash differs from the manifest");
  }

  const std::string metrics_path = f.metrics.empty() ? f.out + ".metrics.jsonl" : f.metrics;
  const std::string manifest_path = f.manifest.empty() ? f.out + ".manifest.json" : f.manifest;

  // The part of the manifest embedded in the model: everything that
  // determines the weights, nothing that depends on where files live.
  nlohmann::json core = {{"version", BRM_VERSION},
                         {"command", "train"},
                         {"config", to_json(cfg)},
                         {"seeds", {{"run", cfg.seed}}},
                         {"corpora", {{"train", corpus_record(train_corpus)}}}};
  if (!dev_path.empty()) core["corpora"]["dev"] = corpus_record(dev_corpus);
  nlohmann::json manifest = core;
  manifest["paths"] = {{"train", train_path}, {"dev", dev_path}};
  manifest["outputs"] = {{"model", f.out}, {"metrics", metrics_path}};
  write_text(manifest_path, manifest.dump(2) + "\n");

  std::ofstream metrics(metrics_path);
  if (!metrics) throw Error("cannot write metrics log '" + metrics_path + "'");
  auto on_epoch = [&](const EpochMetrics& em) {
    nlohmann::json j = to_json(em);
    j["manifest"] = manifest_path;
    metrics << j.dump() << '\n';
    metrics.flush();
    if (level >= LogLevel::Info)
      err << "epoch " << em.epoch << " loss " << em.loss << " dev " << em.dev_score << " backs " << em.backs
          << (em.best ? " *" : "") << '\n';
  };
  TrainResult result = train(cfg, train_corpus.sentences, dev_corpus.sentences, on_epoch);
  save_model(f.out, result.model, core);
  if (level >= LogLevel::Info)
    out << "model " << f.out << " (best epoch " << result.best_epoch << ", dev score " << result.best_score
        << ", aborted episodes " << result.aborted << ")\n";
  return 0;
}

// ---------------------------------------------------------------- decode

struct DecodeFlags {
  std::string model, input, output, trace, trace_json, machine;
  int k = 0;
};

inline Machine decode_machine(const Model& model, const DecodeFlags& f, const CLI::App& sub) {
  if (sub.get_option("--machine")->count() && parse_task(f.machine) != model.machine.task)
    throw Error("model was trained for the " + std::string(to_string(model.machine.task)) + " machine, not " +
                f.machine);
  return model.machine_with_k(sub.get_option("--k")->count() ? std::optional<int>(f.k) : std::nullopt);
}

inline int cmd_decode(const DecodeFlags& f, const CLI::App& sub, std::ostream& out, std::ostream&) {
  if (f.model.empty() || f.input.empty()) throw UsageError("decode needs --model and --input");
  read_file(f.model, "model file");
  LoadedModel loaded = load_model(f.model);
  Model& model = loaded.model;
  const Machine m = decode_machine(model, f, sub);
  const LoadedCorpus input = read_corpus(f.input, "input corpus");

  const std::string manifest_path = f.output.empty() ? "" : f.output + ".manifest.json";
  std::vector<Sentence> predicted;
  std::string text_trace, json_trace;
  for (std::size_t i = 0; i < input.sentences.size(); ++i) {
    const Sentence& s = input.sentences[i];
    Instance in = encode(s, model.vocab);
    DecodeResult r = decode(model, m, in, /*annotate=*/true);
    predicted.push_back(to_sentence(r, s, model, m));
    if (!f.trace.empty())
      text_trace += "# sentence " + std::to_string(i + 1) + "\n" +
                    render_trace(m, s, in.input_tags, r.final.history, model.vocab.tags.names());
    if (!f.trace_json.empty()) {
      nlohmann::json j = trace_json(m, s, in.input_tags, r.final, model.vocab.tags.names(), true,
                                    static_cast<int>(i + 1));
      if (!manifest_path.empty()) j["manifest"] = manifest_path;
      json_trace += j.dump() + "\n";
    }
  }
  const std::string conllu = to_conllu(predicted);
  if (f.output.empty()) {
    out << conllu;
  } else {
    write_text(f.output, conllu);
    nlohmann::json manifest = {{"version", BRM_VERSION},
                               {"command", "decode"},
                               {"k", m.k},
                               {"model", {{"path", f.model}, {"fnv1a", hex64(fnv1a(read_file(f.model, "model")))}}},
                               {"input", {{"path", f.input}, {"fnv1a", input.hash}}},
                               {"outputs", {{"conllu", f.output}, {"trace", f.trace}, {"trace_json", f.trace_json}}}};
    write_text(manifest_path, manifest.dump(2) + "\n");
  }
  if (!f.trace.empty()) write_text(f.trace, text_trace);
  if (!f.trace_json.empty()) write_text(f.trace_json, json_trace);
  return 0;
}

inline int cmd_trace(const DecodeFlags& f, int sentence, const CLI::App& sub, std::ostream& out) {
  if (f.model.empty() || f.input.empty()) throw UsageError("trace needs --model and --input");
  read_file(f.model, "model file");
  LoadedModel loaded = load_model(f.model);
  Model& model = loaded.model;
  const Machine m = decode_machine(model, f, sub);
  const LoadedCorpus input = read_corpus(f.input, "input corpus");
  if (sentence < 0 || sentence > static_cast<int>(input.sentences.size()))
    throw UsageError("--sentence must lie in [1, " + std::to_string(input.sentences.size()) + "]");
  for (std::size_t i = 0; i < input.sentences.size(); ++i) {
    if (sentence > 0 && static_cast<int>(i + 1) != sentence) continue;
    const Sentence& s = input.sentences[i];
    Instance in = encode(s, model.vocab);
    DecodeResult r = decode(model, m, in);
    out << "# sentence " << i + 1 << '\n'
        << render_trace(m, s, in.input_tags, r.final.history, model.vocab.tags.names());
  }
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalFlags {
  std::string gold, pred, compare, metric = "uas";
  int resamples = 10000;
  std::uint64_t seed = 1;
  bool json = false;
};

inline int cmd_eval(const EvalFlags& f, std::ostream& out) {
  if (f.gold.empty() || f.pred.empty()) throw UsageError("eval needs --gold and --pred");
  const MetricKind metric = parse_metric(f.metric);
  const auto gold = read_corpus(f.gold, "gold corpus");
  const auto pred = read_corpus(f.pred, "prediction file");
  const Metrics a = score(pred.sentences, gold.sentences);
  nlohmann::json j = {{"pred", to_json(a)}};
  std::vector<std::pair<std::string, Metrics>> rows = {{f.pred, a}};
  std::optional<BootstrapResult> boot;
  if (!f.compare.empty()) {
    const auto other = read_corpus(f.compare, "comparison file");
    const Metrics b = score(other.sentences, gold.sentences);
    rows.emplace_back(f.compare, b);
    boot = paired_bootstrap(pred.sentences, other.sentences, gold.sentences, metric, f.resamples, f.seed);
    j["compare"] = to_json(b);
    j["bootstrap"] = {{"metric", f.metric}, {"resamples", boot->resamples}, {"seed", f.seed},
                      {"p_value", boot->p_value}, {"significant", boot->p_value < 0.05}};
  }
  if (f.json) {
    out << j.dump(2) << '\n';
    return 0;
  }
  out << metrics_table(rows);
  if (boot)
    out << "paired bootstrap (" << f.metric << ", " << boot->resamples << " resamples): p = " << boot->p_value
        << (boot->p_value < 0.05 ? " (significant)" : " (not significant)") << '\n';
  return 0;
}

// ---------------------------------------------------------------- stats

inline int cmd_stats(const std::string& path, bool json, std::ostream& out) {
  if (path.empty()) throw UsageError("stats needs --trace-json");
  std::istringstream in(read_file(path, "trace file"));
  BackStats total;
  std::string line;
  long traces = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("trace line " + std::to_string(traces + 1) + " is not JSON: " + e.what());
    }
    LoadedTrace t = load_trace(j);
    if (!t.annotated) throw ValidationError("trace " + std::to_string(traces + 1) + " carries no correctness annotation");
    total += back_stats(t.history);
    ++traces;
  }
  if (json) {
    nlohmann::json j = to_json(total);
    j["traces"] = traces;
    out << j.dump(2) << '\n';
  } else {
    out << back_stats_table(total);
  }
  return 0;
}

// ---------------------------------------------------------------- split

struct SplitFlags {
  std::string corpus, out_dir;
  int folds = 10;
  std::uint64_t seed = 1;
  double train = 0.8, dev = 0.1, test = 0.1;
  bool write_conllu = false;
};

inline int cmd_split(const SplitFlags& f, std::ostream& out) {
  if (f.corpus.empty() || f.out_dir.empty()) throw UsageError("split needs --corpus and --out-dir");
  const auto corpus = read_corpus(f.corpus, "corpus");
  const auto splits = kfold_split(corpus.sentences.size(), f.folds, f.seed, Proportions{f.train, f.dev, f.test});
  std::filesystem::create_directories(f.out_dir);
  nlohmann::json index = {{"version", BRM_VERSION},
                          {"command", "split"},
                          {"corpus", {{"path", f.corpus}, {"fnv1a", corpus.hash}}},
                          {"folds", f.folds},
                          {"seed", f.seed},
                          {"proportions", {f.train, f.dev, f.test}}};
  for (const auto& s : splits) {
    const std::string base = f.out_dir + "/fold" + std::to_string(s.fold_id);
    write_text(base + ".json",
               nlohmann::json({{"fold", s.fold_id}, {"train", s.train}, {"dev", s.dev}, {"test", s.test}}).dump() +
                   "\n");
    if (f.write_conllu) {
      write_text(base + ".train.conllu", to_conllu(select(corpus.sentences, s.train)));
      write_text(base + ".dev.conllu", to_conllu(select(corpus.sentences, s.dev)));
      write_text(base + ".test.conllu", to_conllu(select(corpus.sentences, s.test)));
    }
    out << "fold " << s.fold_id << ": train " << s.train.size() << " dev " << s.dev.size() << " test "
        << s.test.size() << '\n';
  }
  write_text(f.out_dir + "/manifest.json", index.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------- entry

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Backtracking reading machines: taggers and parsers that may undo their last decisions"};
  app.require_subcommand(1);
  app.set_version_flag("--version", BRM_VERSION);

  TrainFlags tf;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--train", tf.train, "training corpus (CoNLL-U)");
  train_cmd->add_option("--dev", tf.dev, "dev corpus for checkpoint selection");
  train_cmd->add_option("--config", tf.config, "JSON config or run manifest; flags override it");
  train_cmd->add_option("--out", tf.out, "model output path");
  train_cmd->add_option("--metrics", tf.metrics, "per-epoch JSON log (default <out>.metrics.jsonl)");
  train_cmd->add_option("--manifest", tf.manifest, "run manifest path (default <out>.manifest.json)");
  train_cmd->add_option("--machine", tf.machine, "tagger | parser | tagparser");
  train_cmd->add_option("--regime", tf.regime, "sup | rl | rl-backtrack");
  train_cmd->add_option("--k", tf.k, "BACK budget per word (rl-backtrack only)");
  train_cmd->add_option("--epochs", tf.epochs);
  train_cmd->add_option("--seed", tf.seed);
  train_cmd->add_option("--alpha", tf.alpha, "learning rate");
  train_cmd->add_option("--gamma", tf.gamma, "discount factor");
  train_cmd->add_option("--batch-size", tf.batch_size, "supervised minibatch size");
  train_cmd->add_option("--hidden", tf.hidden);
  train_cmd->add_option("--embed-dim", tf.embed_dim);
  train_cmd->add_option("--word-dim", tf.word_dim);
  train_cmd->add_option("--dropout", tf.dropout);
  train_cmd->add_option("--optimizer", tf.optimizer, "sgd | adam");
  train_cmd->add_option("--stop-at", tf.stop_at, "stop once the dev score reaches this value");
  train_cmd->add_option("--pretrained", tf.pretrained, "word vectors, one 'word v1 ... vd' per line");

  DecodeFlags df;
  CLI::App* decode_cmd = app.add_subcommand("decode", "annotate a CoNLL-U file with a trained model");
  decode_cmd->add_option("--model", df.model);
  decode_cmd->add_option("--input", df.input);
  decode_cmd->add_option("--output", df.output, "predicted CoNLL-U (default stdout)");
  decode_cmd->add_option("--k", df.k, "override the BACK budget");
  decode_cmd->add_option("--machine", df.machine, "expected machine kind");
  decode_cmd->add_option("--trace", df.trace, "write tape/counter blocks per BACK-state visit");
  decode_cmd->add_option("--trace-json", df.trace_json, "write one JSON trace per sentence");

  DecodeFlags trf;
  int trace_sentence = 0;
  CLI::App* trace_cmd = app.add_subcommand("trace", "print the decode of one or all sentences step by step");
  trace_cmd->add_option("--model", trf.model);
  trace_cmd->add_option("--input", trf.input);
  trace_cmd->add_option("--k", trf.k);
  trace_cmd->add_option("--machine", trf.machine);
  trace_cmd->add_option("--sentence", trace_sentence, "1-based sentence index (default all)");

  EvalFlags ef;
  CLI::App* eval_cmd = app.add_subcommand("eval", "UPOS / UAS against gold, optional paired bootstrap");
  eval_cmd->add_option("--gold", ef.gold);
  eval_cmd->add_option("--pred", ef.pred);
  eval_cmd->add_option("--compare", ef.compare, "second system for the significance test");
  eval_cmd->add_option("--metric", ef.metric, "upos | uas (bootstrap metric)");
  eval_cmd->add_option("--resamples", ef.resamples);
  eval_cmd->add_option("--seed", ef.seed);
  eval_cmd->add_flag("--json", ef.json);

  std::string stats_path;
  bool stats_json = false;
  CLI::App* stats_cmd = app.add_subcommand("stats", "BACK precision, recall and correction categories");
  stats_cmd->add_option("--trace-json", stats_path);
  stats_cmd->add_flag("--json", stats_json);

  SplitFlags sf;
  CLI::App* split_cmd = app.add_subcommand("split", "k-fold train/dev/test splits");
  split_cmd->add_option("--corpus", sf.corpus);
  split_cmd->add_option("--out-dir", sf.out_dir);
  split_cmd->add_option("--folds", sf.folds);
  split_cmd->add_option("--seed", sf.seed);
  split_cmd->add_option("--train-fraction", sf.train);
  split_cmd->add_option("--dev-fraction", sf.dev);
  split_cmd->add_option("--test-fraction", sf.test);
  split_cmd->add_flag("--write-conllu", sf.write_conllu);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << BRM_VERSION << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(tf, *train_cmd, out, err);
    if (decode_cmd->parsed()) return cmd_decode(df, *decode_cmd, out, err);
    if (trace_cmd->parsed()) return cmd_trace(trf, trace_sentence, *trace_cmd, out);
    if (eval_cmd->parsed()) return cmd_eval(ef, out);
    if (stats_cmd->parsed()) return cmd_stats(stats_path, stats_json, out);
    if (split_cmd->parsed()) return cmd_split(sf, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace brm::cli
